"""Seeded synthetic ICU corpus with realistic missingness.

Each patient draws a latent risk ``r ~ N(0, 1)``. The mortality label is
``Bernoulli(sigmoid(a * r + b))`` where ``b`` is solved so the expected
positive rate hits ``positive_rate``. Every feature follows a stationary
AR(1) process around ``loading * r`` on the hourly grid; observations are
that process plus measurement noise, mapped to physical units (continuous)
or to ordinal levels (categorical).

Observation times form a Poisson process per feature whose rate is the
feature's base rate times a per-patient log-normal intensity, so some stays
are charted densely and others sparsely before any noise is injected.
"""

from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.signal import lfilter
from scipy.special import expit

from ..errors import DomainError
from ..tensor import RngStream
from .records import PatientRecord

GENERATOR_VERSION = "1"

# name -> (loading on risk, unit scale, observations per hour, categorical step)
# loading < 0 means the value falls as risk rises.
FEATURE_PROFILES = {
    "Capillary refill rate": (0.5, 1.0, 0.08, 0.6),
    "Diastolic blood pressure": (-0.45, 14.0, 0.9, None),
    "Fraction inspired oxygen": (0.5, 0.15, 0.15, None),
    "Glascow coma scale eye opening": (-0.6, 1.0, 0.25, 1.0),
    "Glascow coma scale motor response": (-0.6, 1.0, 0.25, 1.5),
    "Glascow coma scale total": (-0.6, 1.0, 0.25, 3.0),
    "Glascow coma scale verbal response": (-0.6, 1.0, 0.25, 1.3),
    "Glucose": (0.3, 40.0, 0.15, None),
    "Heart Rate": (0.5, 18.0, 0.95, None),
    "Height": (0.0, 10.0, 0.02, None),
    "Mean blood pressure": (-0.5, 15.0, 0.9, None),
    "Oxygen saturation": (-0.5, 3.0, 0.9, None),
    "Respiratory rate": (0.55, 5.0, 0.9, None),
    "Systolic blood pressure": (-0.5, 20.0, 0.9, None),
    "Temperature": (0.25, 0.8, 0.3, None),
    "Weight": (0.0, 20.0, 0.05, None),
    "pH": (-0.45, 0.08, 0.12, None),
}
DEFAULT_PROFILE = (0.3, 1.0, 0.3, 1.0)


@dataclass
class GeneratorConfig:
    risk_slope: float = 3.0
    positive_rate: float = 2797 / 21139
    ar_coef: float = 0.9  # hour-to-hour autocorrelation of the latent trajectory
    measurement_noise: float = 0.5
    rate_scale: float = 1.0
    rate_spread: float = 1.5  # sigma of the per-patient log-normal rate multiplier
    saturation: float = 1.0  # k > 0: charted shift is k * tanh(r / k); 0 keeps it linear in r
    profiles: dict = field(default_factory=dict)  # overrides of FEATURE_PROFILES

    def __post_init__(self):
        if not 0.0 < self.positive_rate < 1.0:
            raise DomainError("positive_rate must lie in (0, 1)")
        if not 0.0 <= self.ar_coef < 1.0:
            raise DomainError("ar_coef must lie in [0, 1)")
        if min(self.risk_slope, self.measurement_noise, self.rate_spread, self.saturation) < 0 or self.rate_scale <= 0:
            raise DomainError("generator scales must be non-negative (rate_scale positive)")

    def to_dict(self):
        return asdict(self)


@lru_cache(maxsize=32)
def label_intercept(risk_slope, positive_rate):
    """Intercept ``b`` with ``E[sigmoid(a r + b)] = positive_rate`` for ``r ~ N(0, 1)``."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(96)
    weights = weights / weights.sum()

    def gap(b):
        return float(np.dot(weights, expit(risk_slope * nodes + b))) - positive_rate

    return brentq(gap, -60.0, 60.0, xtol=1e-14)


def _profile(spec, config):
    return config.profiles.get(spec.name, FEATURE_PROFILES.get(spec.name, DEFAULT_PROFILE))


def _level_choices(spec):
    """Map each ordinal score to the level indices that carry it."""
    scores = spec.level_scores or tuple(range(len(spec.levels)))
    table = {}
    for i, s in enumerate(scores):
        table.setdefault(s, []).append(i)
    return np.array(sorted(table)), table


def generate_patient(pid, schema, config, rng, intercept=None):
    """One synthetic :class:`PatientRecord` drawn from ``rng``."""
    hours = schema.hours
    g = rng.generator
    if intercept is None:
        intercept = label_intercept(config.risk_slope, config.positive_rate)
    risk = g.standard_normal()
    label = int(g.random() < expit(config.risk_slope * risk + intercept))
    age = float(np.clip(g.normal(64.0, 17.0), 18.0, 95.0))
    male = int(g.random() < 0.56)
    shift = config.saturation * np.tanh(risk / config.saturation) if config.saturation > 0 else risk
    intensity = np.exp(config.rate_spread * g.standard_normal() - config.rate_spread**2 / 2)

    n_feat = len(schema)
    phi = config.ar_coef
    innov = g.standard_normal((n_feat, hours))
    innov[:, 0] /= np.sqrt(1 - phi**2)  # start in the stationary distribution
    ar = lfilter([np.sqrt(1 - phi**2)], [1.0, -phi], innov, axis=1)

    hrs, feats, vals = [], [], []
    for i, spec in enumerate(schema.features):
        loading, scale, rate, step = _profile(spec, config)
        n_obs = g.poisson(rate * config.rate_scale * intensity * hours)
        t = np.sort(g.uniform(0.0, hours, n_obs))
        t = np.minimum(t, np.nextafter(hours, 0))
        latent = loading * shift + ar[i, t.astype(np.int64)]
        latent = latent + config.measurement_noise * g.standard_normal(n_obs)
        if spec.kind == "continuous":
            v = float(spec.normal_value) + scale * latent
        else:
            scores, table = _level_choices(spec)
            normal_score = (spec.level_scores or range(len(spec.levels)))[spec.level_index(spec.normal_value)]
            # the normal level is the healthy end; move away from it as |latent| grows in the risky direction
            direction = 1.0 if normal_score <= scores.mean() else -1.0
            raw = normal_score + direction * np.maximum(np.sign(loading or 1.0) * latent, 0.0) * (step or 1.0)
            score_idx = np.abs(scores[None, :] - raw[:, None]).argmin(axis=1)
            v = np.array([table[scores[k]][g.integers(len(table[scores[k]]))] for k in score_idx], dtype=np.float64)
        hrs.append(t)
        feats.append(np.full(n_obs, i))
        vals.append(np.asarray(v, dtype=np.float64))
    order_h = np.concatenate(hrs)
    order = np.argsort(order_h, kind="stable")
    return PatientRecord(
        pid,
        order_h[order],
        np.concatenate(feats)[order],
        np.concatenate(vals)[order],
        label,
        {"age": age, "male": male},
        float(risk),
    )


def generate_synthetic(n_patients, schema, config=None, seed=0):
    """``n_patients`` records with ids ``0 .. n-1``; patient ``i`` depends only
    on ``(seed, i)``, so growing the corpus keeps the earlier patients."""
    if n_patients < 1:
        raise DomainError("need at least one patient")
    config = config or GeneratorConfig()
    b = label_intercept(config.risk_slope, config.positive_rate)
    root = RngStream(seed).child("synthetic")
    return [generate_patient(i, schema, config, root.child(i), b) for i in range(n_patients)]
