import numpy as np
import pytest
from helpers import pairwise_auc

from aleatoric_ehr import eval as E
from aleatoric_ehr.data import build_dataset, generate_synthetic, reference_schema
from aleatoric_ehr.errors import EvaluationError, UndefinedMetricError


def scores(var, probs=None, labels=None, ids=None):
    n = len(var)
    return E.Scores(
        np.arange(n) if ids is None else np.asarray(ids),
        np.arange(n) % 2 if labels is None else np.asarray(labels),
        np.linspace(0.1, 0.9, n) if probs is None else np.asarray(probs, float),
        np.asarray(var, float),
    )


class TestAuc:
    def test_separated(self):
        assert E.auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_all_tied(self):
        assert E.auc([0, 1, 0, 1, 1], [0.3] * 5) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            E.auc([1, 1], [0.2, 0.4])

    def test_undefined_is_evaluation_error(self):
        assert issubclass(UndefinedMetricError, EvaluationError)

    def test_matches_pairwise_oracle_exactly(self):
        rng = np.random.default_rng(0)
        done = 0
        while done < 200:
            n = int(rng.integers(2, 101))
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                continue
            s = rng.integers(0, 8, n) / 8.0  # coarse grid forces ties
            assert E.auc(y, s) == pairwise_auc(y, s)
            done += 1

    def test_monotone_invariance(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, 300)
        s = rng.standard_normal(300)
        assert E.auc(y, s) == E.auc(y, np.exp(3 * s) + 7) == E.auc(y, np.arctan(s))

    def test_instances(self):
        sc = scores([0.0] * 4, probs=[0.1, 0.4, 0.35, 0.8], labels=[0, 0, 1, 1])
        assert E.auc_of(sc.instances()) == 0.75

    def test_roc_points(self):
        fpr, tpr = E.roc_points([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])
        assert fpr[0] == tpr[0] == 0 and fpr[-1] == tpr[-1] == 1
        assert np.trapezoid(tpr, fpr) == pytest.approx(0.75)

    def test_mean_std(self):
        vals = [0.81, 0.84, 0.86]
        m, s = E.mean_std(vals)
        assert abs(m - sum(vals) / 3) < 1e-12
        assert abs(s - (sum((v - m) ** 2 for v in vals) / 3) ** 0.5) < 1e-12
        assert E.mean_std([0.8]) == (0.8, 0.0)


class TestMedianSplit:
    def test_basic(self):
        lo, hi = E.median_split(scores([1, 2, 3, 4]))
        assert sorted(lo) == [0, 1] and sorted(hi) == [2, 3]

    def test_ties_by_id(self):
        lo, hi = E.median_split(scores([5.0] * 6, ids=[9, 3, 7, 1, 5, 2]))
        assert len(lo) == len(hi) == 3
        assert sorted(np.array([9, 3, 7, 1, 5, 2])[lo]) == [1, 2, 3]

    def test_odd_size_partition(self):
        sc = scores(np.random.default_rng(2).random(11))
        lo, hi = E.median_split(sc)
        assert abs(len(lo) - len(hi)) <= 1 and sorted(np.r_[lo, hi]) == list(range(11))

    def test_analysis(self):
        sc = scores([1, 2, 3, 4, 5, 6, 7, 8], probs=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], labels=[0, 1, 0, 1, 1, 0, 1, 0])
        out = E.median_split_analysis(sc, demographics={i: {"age": 50 + i} for i in range(8)})
        assert out["low"]["n"] == out["high"]["n"] == 4
        assert out["low"]["auc"] == pairwise_auc([0, 1, 0, 1], [0.1, 0.2, 0.3, 0.4])
        assert out["high"]["positives"] == 2 and out["low"]["mean_age"] == 51.5

    def test_half_without_both_classes(self):
        sc = scores([1, 2, 3, 4], labels=[0, 0, 1, 0])
        with pytest.raises(UndefinedMetricError, match="low"):
            E.median_split_analysis(sc)


class TestGrid:
    def test_partition_sizes(self):
        rng = np.random.default_rng(3)
        for n in (16, 100, 163):
            sc = scores(np.round(rng.random(n), 1), probs=np.round(rng.random(n), 1))
            cells = E.quartile_cells(sc)
            counts = np.bincount(cells, minlength=16)
            assert counts.sum() == n and counts.max() - counts.min() <= 1

    def test_cells_ordered(self):
        rng = np.random.default_rng(4)
        sc = scores(rng.random(64), probs=rng.random(64))
        cells = E.quartile_cells(sc)
        uq = cells // 4
        assert all(sc.variance[uq == k].max() < sc.variance[uq == k + 1].min() for k in range(3))
        for k in range(4):
            pq = cells[uq == k] % 4
            p = sc.probs[uq == k]
            assert all(p[pq == j].max() < p[pq == j + 1].min() for j in range(3))

    def test_no_op_substitution(self):
        rng = np.random.default_rng(5)
        sc = scores(rng.random(80), probs=rng.random(80), labels=rng.integers(0, 2, 80))
        base, d = E.cell_deltas(sc, sc, E.quartile_cells(sc))
        assert base == E.auc(sc.labels, sc.probs) and np.all(d == 0.0)

    def test_delta_by_hand(self):
        # 16 instances, one per cell; improving the cell of the mis-ranked positive helps
        sc = scores(np.arange(16.0), probs=np.r_[np.full(8, 0.2), np.full(8, 0.6)], labels=[1] + [0] * 14 + [1])
        better = E.Scores(sc.ids, sc.labels, np.where(sc.ids == 0, 0.9, sc.probs), sc.variance)
        base, d = E.cell_deltas(sc, better, E.quartile_cells(sc))
        assert d[0] == E.auc(sc.labels, better.probs) - base > 0
        assert np.all(d[1:] == 0)

    def test_mismatched_ids(self):
        a = scores([1.0, 2.0])
        with pytest.raises(EvaluationError):
            E.cell_deltas(a, scores([1.0, 2.0], ids=[5, 6]), np.zeros(2, int))

    def test_report_aggregates(self):
        rng = np.random.default_rng(6)
        deltas = rng.standard_normal((3, 16))
        rep = E.GridReport(0.5, [0.8, 0.8, 0.8], deltas, np.ones((3, 16)))
        assert np.max(np.abs(rep.mean - deltas.mean(axis=0))) < 1e-12
        assert np.max(np.abs(rep.std - deltas.std(axis=0))) < 1e-12
        c = int(np.argmax(deltas.mean(axis=0)))
        assert rep.peak_cell() == (c // 4 + 1, c % 4 + 1)


class StubModel:
    """Scores from the fraction of observed bins and one value channel, so
    removing data visibly changes both outputs."""

    def predict(self, X, ids, T=100, seed=0, bayesian=True):
        density = X[:, -17:].mean(axis=(1, 2))
        z = X[:, 0:12].mean(axis=(1, 2))
        p = 1 / (1 + np.exp(-(z + density)))
        return np.stack([1 - p, p], axis=1), 1.0 - density


@pytest.fixture(scope="module")
def corpus():
    s = reference_schema()
    return generate_synthetic(120, s, seed=4), s


class TestSweepAndGrid:
    def test_full_retention_equals_plain_eval(self, corpus):
        recs, s = corpus
        rep = E.retention_sweep([StubModel()], recs, s, retentions=(1.0,))
        plain = E.score_records(StubModel(), recs, s)
        assert rep.per_model[0][1.0]["auc"] == E.auc(plain.labels, plain.probs)

    def test_nested_injection(self, corpus):
        recs, _ = corpus
        a = E.injected_records(recs, 0.3, 0, 1)
        b = E.injected_records(recs, 0.7, 0, 1)
        for x, y in zip(a, b):
            assert set(x.hours.tolist()) <= set(y.hours.tolist())

    def test_sweep_is_deterministic_and_aggregates(self, corpus):
        recs, s = corpus
        a = E.retention_sweep([StubModel(), StubModel()], recs, s, retentions=(0.9, 0.3))
        b = E.retention_sweep([StubModel(), StubModel()], recs, s, retentions=(0.9, 0.3))
        assert a == b
        for r in (0.9, 0.3):
            m, sd = E.mean_std([pm[r]["auc"] for pm in a.per_model])
            assert a.aggregate[r]["auc_mean"] == m and a.aggregate[r]["auc_std"] == sd
        # the stub's variance is one minus mask density, so it rises as data are removed
        assert a.aggregate[0.3]["median_variance_mean"] > a.aggregate[0.9]["median_variance_mean"]

    def test_grid_report(self, corpus):
        recs, s = corpus
        g = E.quartile_grid_analysis([StubModel()], recs, s)
        assert g.deltas.shape == (1, 16) and g.cell_sizes.sum() == len(recs)
        assert g.cell_sizes.max() - g.cell_sizes.min() <= 1

    def test_grid_same_retention_is_zero(self, corpus):
        recs, s = corpus
        g = E.quartile_grid_analysis([StubModel()], recs, s, baseline_retention=1.0)
        assert np.all(g.deltas == 0.0)


def test_score_dataset_shapes(corpus):
    recs, s = corpus
    d = build_dataset(recs, s)
    sc = E.score_dataset(StubModel(), d)
    assert len(sc) == 120 and np.array_equal(sc.ids, d.ids)
