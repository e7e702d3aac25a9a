"""AUC and the uncertainty analyses run on trained ensembles.

* :func:`auc`: Mann-Whitney AUC with ties counted as half.
* :func:`median_split_analysis`: AUC of the low- and high-uncertainty halves.
* :func:`retention_sweep`: remove raw events at random, re-score, track
  median uncertainty and AUC.
* :func:`quartile_grid_analysis`: 4 x 4 uncertainty-by-probability cells;
  each cell alone is re-scored with full data and the AUC change recorded.

"Uncertainty" is always the predicted aleatoric variance and "probability"
the positive-class probability.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data.preprocess import build_dataset, inject_missingness_all
from .errors import EvaluationError, UndefinedMetricError
from .tensor import RngStream


@dataclass
class ScoredInstance:
    instance_id: int
    label: int
    prob: float
    variance: float


@dataclass
class Scores:
    """Column-wise scored population."""

    ids: np.ndarray
    labels: np.ndarray
    probs: np.ndarray  # positive-class probability
    variance: np.ndarray

    def __len__(self):
        return len(self.ids)

    def instances(self):
        return [ScoredInstance(int(i), int(y), float(p), float(v))
                for i, y, p, v in zip(self.ids, self.labels, self.probs, self.variance)]

    def subset(self, idx):
        return Scores(self.ids[idx], self.labels[idx], self.probs[idx], self.variance[idx])


def auc(labels, scores):
    """Area under the ROC curve via the rank-sum (Mann-Whitney) statistic.

    Equals ``(#concordant + 0.5 * #tied) / (#pos * #neg)`` over all
    positive/negative pairs. Average ranks are half-integers, so the U
    statistic is exact in floating point.
    """
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_of(instances):
    return auc([s.label for s in instances], [s.prob for s in instances])


def roc_points(labels, scores):
    """ROC vertices ``(fpr, tpr)`` from (0, 0) to (1, 1), one per distinct score."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both classes")
    order = np.argsort(-scores, kind="stable")
    s, lab = scores[order], labels[order]
    tp, fp = np.cumsum(lab), np.cumsum(~lab)
    last = np.r_[s[1:] != s[:-1], True]
    fpr = np.r_[0.0, fp[last] / n_neg]
    tpr = np.r_[0.0, tp[last] / n_pos]
    return fpr, tpr


def mean_std(values):
    """Mean and population standard deviation (zero for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


def _rank_order(values, ids):
    """Indices sorting by ``(value, id)``."""
    return np.lexsort((np.asarray(ids), np.asarray(values)))


# -- scoring --------------------------------------------------------------------


def score_dataset(model, dataset, T=100, seed=0, bayesian=True):
    probs, var = model.predict(dataset.X, dataset.ids, T=T, seed=seed, bayesian=bayesian)
    return Scores(np.asarray(dataset.ids), np.asarray(dataset.y), probs[:, 1], var)


def score_records(model, records, schema, T=100, seed=0, bayesian=True):
    """Encode raw records with a fitted schema and score them."""
    return score_dataset(model, build_dataset(records, schema, tag="test"), T, seed, bayesian)


# -- median split ------------------------------------------------------------------


def median_split(scores):
    """Low/high halves by ``(variance, id)`` rank; the low half gets ``n // 2``."""
    order = _rank_order(scores.variance, scores.ids)
    half = len(order) // 2
    return order[:half], order[half:]


def median_split_analysis(scores, demographics=None):
    """AUC and composition of the two median-uncertainty halves.

    ``demographics`` optionally maps patient id to a dict of numeric fields
    (e.g. age, male) whose per-half means are reported.
    """
    if len(scores) < 2:
        raise UndefinedMetricError("median split needs at least two instances")
    out = {}
    for name, idx in zip(("low", "high"), median_split(scores)):
        part = scores.subset(idx)
        try:
            a = auc(part.labels, part.probs)
        except UndefinedMetricError:
            raise UndefinedMetricError(f"{name}-uncertainty half lacks one of the classes") from None
        info = {
            "n": int(len(part)),
            "auc": a,
            "positives": int(part.labels.sum()),
            "median_variance": float(np.median(part.variance)),
        }
        if demographics:
            keys = sorted({k for pid in part.ids for k in demographics.get(int(pid), {})})
            for k in keys:
                vals = [demographics[int(pid)][k] for pid in part.ids if k in demographics.get(int(pid), {})]
                info[f"mean_{k}"] = float(np.mean(vals))
        out[name] = info
    return out


# -- retention sweep ------------------------------------------------------------------


@dataclass
class SweepReport:
    retentions: list
    per_model: list  # per model: {retention: {"median_variance", "mean_variance", "auc"}}
    aggregate: dict = field(default_factory=dict)


def injected_records(records, retention, seed, model_index):
    """Records after missingness injection for one model at one retention.

    Each event's keep/drop draw depends on ``(seed, model_index, patient)``
    only, so for a given model the retained sets are nested: everything kept
    at 0.3 is also kept at 0.5. Marginally each event still survives with
    probability ``retention``; the coupling removes sampling noise from the
    differences between retention levels.
    """
    rng = RngStream(seed).child("inject", model_index)
    return inject_missingness_all(records, retention, rng)


def retention_sweep(models, test_records, schema, retentions=(0.9, 0.7, 0.5, 0.3, 0.1), seed=0, T=100, eval_seed=0):
    """Median uncertainty and AUC of every model at each retention level."""
    per_model = []
    for m_idx, model in enumerate(models):
        rows = {}
        for r in retentions:
            recs = injected_records(test_records, r, seed, m_idx)
            sc = score_records(model, recs, schema, T=T, seed=eval_seed)
            rows[float(r)] = {
                "median_variance": float(np.median(sc.variance)),
                "mean_variance": float(np.mean(sc.variance)),
                "auc": auc(sc.labels, sc.probs),
            }
        per_model.append(rows)
    aggregate = {}
    for r in retentions:
        r = float(r)
        med = [pm[r]["median_variance"] for pm in per_model]
        aucs = [pm[r]["auc"] for pm in per_model]
        m_med, s_med = mean_std(med)
        m_auc, s_auc = mean_std(aucs)
        aggregate[r] = {
            "median_variance_mean": m_med,
            "median_variance_std": s_med,
            "median_variance_median": float(np.median(med)),
            "auc_mean": m_auc,
            "auc_std": s_auc,
            "auc_median": float(np.median(aucs)),
        }
    return SweepReport([float(r) for r in retentions], per_model, aggregate)


# -- quartile grid ----------------------------------------------------------------------


def quartile_cells(scores):
    """Cell index 0..15 per instance: ``4 * uncertainty_quartile + probability_quartile``.

    Both splits rank by ``(value, id)`` and use near-equal contiguous chunks,
    so every cell holds ``n / 16`` instances within one.
    """
    cells = np.empty(len(scores), dtype=np.int64)
    for uq, chunk in enumerate(np.array_split(_rank_order(scores.variance, scores.ids), 4)):
        inner = chunk[_rank_order(scores.probs[chunk], scores.ids[chunk])]
        for pq, sub in enumerate(np.array_split(inner, 4)):
            cells[sub] = 4 * uq + pq
    return cells


def cell_deltas(baseline, improved, cells):
    """AUC change when each cell alone takes its ``improved`` probabilities."""
    if not np.array_equal(baseline.ids, improved.ids):
        raise EvaluationError("baseline and improved scores must list the same instances")
    base_auc = auc(baseline.labels, baseline.probs)
    deltas = np.full(16, np.nan)
    for c in range(16):
        sel = cells == c
        if not sel.any():
            continue
        probs = np.where(sel, improved.probs, baseline.probs)
        deltas[c] = auc(baseline.labels, probs) - base_auc
    return base_auc, deltas


@dataclass
class GridReport:
    baseline_retention: float
    baseline_auc: list  # per model
    deltas: np.ndarray  # (n_models, 16)
    cell_sizes: np.ndarray  # (n_models, 16)

    @property
    def mean(self):
        return np.nanmean(self.deltas, axis=0) if len(self.deltas) else np.full(16, np.nan)

    @property
    def std(self):
        return np.nanstd(self.deltas, axis=0) if len(self.deltas) else np.full(16, np.nan)

    def peak_cell(self):
        """``(uncertainty_quartile, probability_quartile)`` of the largest mean delta, 1-based."""
        c = int(np.nanargmax(self.mean))
        return c // 4 + 1, c % 4 + 1


def quartile_grid_analysis(models, test_records, schema, baseline_retention=0.5, seed=0, T=100, eval_seed=0):
    """Per model: score everyone at ``baseline_retention``, build the 16 cells
    from those scores, then swap in full-data scores one cell at a time."""
    base_aucs, deltas, sizes = [], [], []
    for m_idx, model in enumerate(models):
        recs = injected_records(test_records, baseline_retention, seed, m_idx)
        base = score_records(model, recs, schema, T=T, seed=eval_seed)
        full = score_records(model, test_records, schema, T=T, seed=eval_seed)
        cells = quartile_cells(base)
        b, d = cell_deltas(base, full, cells)
        base_aucs.append(b)
        deltas.append(d)
        sizes.append(np.bincount(cells, minlength=16))
    return GridReport(float(baseline_retention), base_aucs, np.array(deltas), np.array(sizes))
