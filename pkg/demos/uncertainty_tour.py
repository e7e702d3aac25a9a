"""Library-level walk through one Bayesian model.

Trains a single model on a synthetic cohort, then shows how the predicted
aleatoric variance relates to how densely each stay was charted and how it
moves when raw events are removed before imputation.

    python demos/uncertainty_tour.py [n_patients]
"""

import sys

import numpy as np

from aleatoric_ehr import eval as E
from aleatoric_ehr.data import build_dataset, fit_normalization, generate_synthetic, reference_schema, split
from aleatoric_ehr.training import TrainConfig, train

n = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
schema = reference_schema()
records = generate_synthetic(n, schema, seed=0)
tr, va, te = split(records, seed=0)
fitted = fit_normalization(tr, schema)
print(f"{n} patients, {sum(r.label for r in records)} positive; split {len(tr)}/{len(va)}/{len(te)}")

ckpt = train(build_dataset(tr, fitted), build_dataset(va, fitted), TrainConfig(max_epochs=8, patience=3))
print(f"best epoch {ckpt.epoch}, validation AUC {ckpt.val_auc:.3f}")

scores = E.score_records(ckpt.model, te, fitted, T=100)
print(f"test AUC {E.auc(scores.labels, scores.probs):.3f}")

# variance by charting density: quintiles of the raw event count
events = np.array([r.n_events for r in te])
edges = np.quantile(events, [0.2, 0.4, 0.6, 0.8])
bucket = np.searchsorted(edges, events)
print("\nevents quintile  mean events  median variance")
for q in range(5):
    sel = bucket == q
    print(f"{q + 1:>15}  {events[sel].mean():>11.0f}  {np.median(scores.variance[sel]):>15.4f}")

split_report = E.median_split_analysis(scores)
print("\nmedian split: AUC low {:.3f} / high {:.3f}, positives {} / {}".format(
    split_report["low"]["auc"], split_report["high"]["auc"],
    split_report["low"]["positives"], split_report["high"]["positives"]))

sweep = E.retention_sweep([ckpt.model], te, fitted, retentions=(1.0, 0.7, 0.4, 0.1), T=100)
print("\nretention  median variance  AUC")
for r in sweep.retentions:
    a = sweep.aggregate[r]
    print(f"{r:>9.1f}  {a['median_variance_mean']:>15.4f}  {a['auc_mean']:.3f}")
