"""Raw patient records and encoded feature matrices."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PatientRecord:
    """Timestamped observations for one ICU stay.

    Events are stored column-wise: ``hours[i]``, ``features[i]`` (schema
    index) and ``values[i]``. Categorical values are level indices.
    """

    patient_id: int
    hours: np.ndarray
    features: np.ndarray
    values: np.ndarray
    label: int
    demographics: dict = field(default_factory=dict)
    latent_risk: float = None  # known only for synthetic patients

    def __post_init__(self):
        self.hours = np.asarray(self.hours, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if not (len(self.hours) == len(self.features) == len(self.values)):
            raise ValueError("event columns must have equal length")

    @property
    def n_events(self):
        return len(self.hours)

    @property
    def events(self):
        return list(zip(self.hours.tolist(), self.features.tolist(), self.values.tolist()))

    def subset(self, keep):
        """Copy holding only the events selected by boolean mask ``keep``."""
        return PatientRecord(
            self.patient_id,
            self.hours[keep],
            self.features[keep],
            self.values[keep],
            self.label,
            dict(self.demographics),
            self.latent_risk,
        )


@dataclass
class FeatureMatrix:
    """Encoded record: value channels (F_value, hours) and masks (F, hours)."""

    patient_id: int
    values: np.ndarray
    masks: np.ndarray
    label: int

    def as_input(self):
        return np.concatenate([self.values, self.masks], axis=0)


@dataclass
class Dataset:
    """Stacked model inputs for one split."""

    X: np.ndarray  # (N, channels, hours)
    y: np.ndarray  # (N,) int
    ids: np.ndarray  # (N,) patient ids
    tag: str = "train"
    provenance: str = ""

    def __len__(self):
        return len(self.y)

    def subset(self, idx):
        return Dataset(self.X[idx], self.y[idx], self.ids[idx], self.tag, self.provenance)
