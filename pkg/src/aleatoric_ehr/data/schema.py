"""Feature schema: names, kinds, categorical levels, imputation defaults.

The schema also carries the standardization statistics of the continuous
features once they have been fit on a training split.
"""

import json
from dataclasses import dataclass, field, replace
from importlib import resources

from ..errors import SchemaError

SCHEMA_FORMAT = "aleatoric-ehr-schema"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "continuous" | "categorical"
    normal_value: object
    levels: tuple = ()
    level_scores: tuple = ()
    mean: float = None
    std: float = None

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if len(self.levels) < 2:
                raise SchemaError(f"{self.name}: categorical feature needs >= 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"{self.name}: duplicate levels")
            if self.level_scores and len(self.level_scores) != len(self.levels):
                raise SchemaError(f"{self.name}: level_scores must align with levels")
            if str(self.normal_value) not in self.levels:
                raise SchemaError(f"{self.name}: normal value {self.normal_value!r} is not a level")
        else:
            try:
                float(self.normal_value)
            except (TypeError, ValueError):
                raise SchemaError(f"{self.name}: continuous normal value must be numeric") from None

    @property
    def width(self):
        """Number of value channels after encoding."""
        return len(self.levels) if self.kind == "categorical" else 1

    @property
    def normal_code(self):
        """Normal value in the numeric code used by records (level index for categoricals)."""
        if self.kind == "categorical":
            return float(self.levels.index(str(self.normal_value)))
        return float(self.normal_value)

    def level_index(self, value):
        try:
            return self.levels.index(str(value))
        except ValueError:
            raise SchemaError(f"{self.name}: unknown level {value!r}") from None


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple
    hours: int = 48
    description: str = ""
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        if self.hours < 1:
            raise SchemaError("observation window must be at least one hour")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __len__(self):
        return len(self.features)

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"feature {name!r} not in schema") from None

    @property
    def n_value_channels(self):
        return sum(f.width for f in self.features)

    @property
    def n_mask_channels(self):
        return len(self.features)

    @property
    def n_channels(self):
        return self.n_value_channels + self.n_mask_channels

    @property
    def offsets(self):
        """First value channel of each feature."""
        out, pos = [], 0
        for f in self.features:
            out.append(pos)
            pos += f.width
        return out

    def channel_names(self):
        names = []
        for f in self.features:
            if f.kind == "categorical":
                names += [f"{f.name}->{lvl}" for lvl in f.levels]
            else:
                names.append(f.name)
        return names + [f"mask->{f.name}" for f in self.features]

    @property
    def is_fitted(self):
        return all(f.mean is not None for f in self.features if f.kind == "continuous")

    def with_normalization(self, stats):
        """Copy with ``{name: (mean, std)}`` applied to the continuous features."""
        feats = []
        for f in self.features:
            if f.name in stats:
                mean, std = stats[f.name]
                feats.append(replace(f, mean=float(mean), std=float(std)))
            else:
                feats.append(f)
        return replace(self, features=tuple(feats))

    # -- serialization -------------------------------------------------------------

    def to_dict(self):
        feats = []
        for f in self.features:
            d = {"name": f.name, "kind": f.kind, "normal_value": f.normal_value}
            if f.kind == "categorical":
                d["levels"] = list(f.levels)
                if f.level_scores:
                    d["level_scores"] = list(f.level_scores)
            if f.mean is not None:
                d["mean"], d["std"] = f.mean, f.std
            feats.append(d)
        return {"format": SCHEMA_FORMAT, "version": 1, "hours": self.hours, "description": self.description, "features": feats}

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != SCHEMA_FORMAT:
            raise SchemaError("not a schema document")
        allowed = {"name", "kind", "normal_value", "levels", "level_scores", "mean", "std"}
        feats = []
        for d in doc["features"]:
            extra = set(d) - allowed
            if extra:
                raise SchemaError(f"unknown schema keys {sorted(extra)}")
            feats.append(
                FeatureSpec(
                    name=d["name"],
                    kind=d["kind"],
                    normal_value=d["normal_value"],
                    levels=tuple(str(v) for v in d.get("levels", ())),
                    level_scores=tuple(d.get("level_scores", ())),
                    mean=d.get("mean"),
                    std=d.get("std"),
                )
            )
        return cls(tuple(feats), hours=int(doc.get("hours", 48)), description=doc.get("description", ""))


def load_schema(path):
    with open(path) as fh:
        return FeatureSchema.from_dict(json.load(fh))


def save_schema(schema, path):
    with open(path, "w") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


def reference_schema():
    """The 17-feature bedside schema that encodes to 76 channels."""
    text = resources.files(__package__).joinpath("reference_schema.json").read_text()
    return FeatureSchema.from_dict(json.loads(text))
