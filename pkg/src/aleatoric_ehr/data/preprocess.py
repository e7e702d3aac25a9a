"""Hourly binning, imputation, masks, encoding and standardization.

Per feature and hourly bin the last observation wins. Empty bins carry the
most recent earlier value forward; bins before the first observation take the
schema's normal value. A feature's mask is 1 exactly where one or more real
observations fell into the bin. Categorical features are one-hot encoded and
continuous ones standardized with statistics fit on the training split only.
"""

from fractions import Fraction

import numpy as np

from ..errors import DataError, DomainError, SchemaError
from ..tensor import RngStream
from .records import Dataset, FeatureMatrix, PatientRecord


def _bin_raw(record, schema):
    """Raw (unencoded) binned values and masks, shapes (F, hours)."""
    n_feat, hours = len(schema), schema.hours
    f = record.features
    if f.size and (f.min() < 0 or f.max() >= n_feat):
        raise SchemaError(f"patient {record.patient_id}: feature id outside schema")
    if not np.all(np.isfinite(record.values)):
        raise DataError(f"patient {record.patient_id}: non-finite observed value")
    h = record.hours
    if h.size and (not np.all(np.isfinite(h)) or h.min() < 0 or h.max() >= hours):
        raise DataError(f"patient {record.patient_id}: event outside the {hours}h window")

    raw = np.full((n_feat, hours), np.nan)
    if f.size:
        bins = np.floor(h).astype(np.int64)
        key = f * hours + bins
        order = np.lexsort((h, key))  # stable: equal hours keep file order
        key_sorted = key[order]
        last = np.ones(len(order), dtype=bool)
        last[:-1] = key_sorted[1:] != key_sorted[:-1]
        sel = order[last]
        raw.flat[key[sel]] = record.values[sel]
    mask = ~np.isnan(raw)

    # forward fill, then normal values before the first observation
    idx = np.where(mask, np.arange(hours), -1)
    np.maximum.accumulate(idx, axis=1, out=idx)
    filled = np.take_along_axis(np.nan_to_num(raw), np.maximum(idx, 0), axis=1)
    normals = np.array([spec.normal_code for spec in schema.features])
    filled = np.where(idx >= 0, filled, normals[:, None])
    return filled, mask


def bin_and_impute(record, schema):
    """Encode one record into a :class:`FeatureMatrix`.

    Continuous channels are standardized only if the schema carries fitted
    statistics; otherwise they stay in raw units.
    """
    filled, mask = _bin_raw(record, schema)
    hours = schema.hours
    values = np.zeros((schema.n_value_channels, hours))
    for i, (spec, off) in enumerate(zip(schema.features, schema.offsets)):
        row = filled[i]
        if spec.kind == "categorical":
            codes = row.astype(np.int64)
            if np.any(codes != row) or codes.min() < 0 or codes.max() >= len(spec.levels):
                raise DataError(f"patient {record.patient_id}: bad level code for {spec.name}")
            values[off + codes, np.arange(hours)] = 1.0
        elif spec.mean is not None:
            values[off] = (row - spec.mean) / spec.std
        else:
            values[off] = row
    return FeatureMatrix(record.patient_id, values, mask.astype(np.float64), int(record.label))


def fit_normalization(records, schema):
    """Schema copy whose continuous features carry training-split mean/std.

    Statistics are taken over observed (mask = 1) hourly bins, so applying
    them to the same records gives zero mean and unit standard deviation on
    those entries.
    """
    cont = [i for i, f in enumerate(schema.features) if f.kind == "continuous"]
    sums = {i: [] for i in cont}
    for rec in records:
        filled, mask = _bin_raw(rec, schema)
        for i in cont:
            sums[i].append(filled[i][mask[i]])
    stats = {}
    for i in cont:
        obs = np.concatenate(sums[i]) if sums[i] else np.zeros(0)
        spec = schema.features[i]
        if obs.size == 0:
            mean, std = float(spec.normal_value), 1.0
        else:
            mean, std = float(obs.mean()), float(obs.std())
            if not std > 0:
                std = 1.0
        stats[spec.name] = (mean, std)
    return schema.with_normalization(stats)


def build_dataset(records, schema, tag="train", provenance=""):
    """Stack encoded records into a model-ready :class:`Dataset`."""
    n = len(records)
    X = np.empty((n, schema.n_channels, schema.hours))
    y = np.empty(n, dtype=np.int64)
    ids = np.empty(n, dtype=np.int64)
    for k, rec in enumerate(records):
        fm = bin_and_impute(rec, schema)
        X[k, : schema.n_value_channels] = fm.values
        X[k, schema.n_value_channels :] = fm.masks
        y[k] = fm.label
        ids[k] = rec.patient_id
    return Dataset(X, y, ids, tag, provenance)


def inject_missingness(record, retention, rng):
    """Keep each raw event independently with probability ``retention``.

    Runs before binning, so imputation fills whatever was removed.
    """
    if not 0.0 <= retention <= 1.0:
        raise DomainError("retention must lie in [0, 1]")
    if retention == 1.0:
        return record
    keep = rng.random(record.n_events) < retention
    return record.subset(keep)


def inject_missingness_all(records, retention, rng):
    """Apply :func:`inject_missingness` with a per-patient sub-stream of ``rng``."""
    if retention == 1.0:
        return list(records)
    return [inject_missingness(r, retention, rng.child(r.patient_id)) for r in records]


def split_sizes(n, fractions):
    """Largest-remainder apportionment: floor each share, then hand the
    leftover units to the largest fractional parts (earlier split on ties)."""
    fr = [Fraction(str(f)) for f in fractions]
    if abs(sum(fr) - 1) > Fraction(1, 10**9):
        raise DomainError("split fractions must sum to 1")
    if any(f < 0 for f in fr):
        raise DomainError("split fractions must be non-negative")
    exact = [f * n for f in fr]
    sizes = [int(e) for e in exact]  # floor, all non-negative
    left = n - sum(sizes)
    order = sorted(range(len(fr)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def split(records, fractions=(0.7, 0.15, 0.15), seed=0):
    """Seeded random train/validation/test partition by patient."""
    sizes = split_sizes(len(records), fractions)
    ordered = sorted(records, key=lambda r: r.patient_id)
    ids = [r.patient_id for r in ordered]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate patient ids")
    perm = RngStream(seed).child("split").generator.permutation(len(ordered))
    out, pos = [], 0
    for s in sizes:
        out.append([ordered[i] for i in perm[pos : pos + s]])
        pos += s
    return tuple(out)


def densify(record, schema):
    """Record with one event per (feature, hour) taken from the binned values.

    Useful as the inverse of binning for dense inputs; categorical values stay
    level indices.
    """
    filled, _ = _bin_raw(record, schema)
    f, h = np.meshgrid(np.arange(len(schema)), np.arange(schema.hours), indexing="ij")
    return PatientRecord(record.patient_id, h.ravel() + 0.5, f.ravel(), filled.ravel(), record.label,
                         dict(record.demographics), record.latent_risk)
