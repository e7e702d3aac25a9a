"""Shared test oracles."""

import numpy as np


def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at array ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        up = f()
        x.flat[i] = old - h
        down = f()
        x.flat[i] = old
        g.flat[i] = (up - down) / (2 * h)
    return g


def max_rel_error(analytic, numeric, floor=1e-7):
    """Largest ``|a - n| / max(|a|, |n|)``; entries where both sides are
    below ``floor`` are numerically zero and skipped."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = np.maximum(np.abs(a), np.abs(n))
    keep = scale > floor
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(a - n)[keep] / scale[keep]))


def pairwise_auc(labels, scores):
    """O(n^2) Mann-Whitney oracle: (concordant + 0.5 * tied) / (pos * neg)."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    hits = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                hits += 1.0
            elif p == q:
                hits += 0.5
    return hits / (len(pos) * len(neg))


def conv_loop(x, kernels, bias):
    """Direct same-padded cross-correlation, x (C, T)."""
    c, t = x.shape
    o, _, w = kernels.shape
    pad = w // 2
    xp = np.zeros((c, t + 2 * pad))
    xp[:, pad : pad + t] = x
    out = np.zeros((o, t))
    for oc in range(o):
        for tt in range(t):
            acc = bias[oc]
            for ic in range(c):
                for k in range(w):
                    acc += kernels[oc, ic, k] * xp[ic, tt + k]
            out[oc, tt] = acc
    return out


def gauss_hermite_bayes_ce(logits, sigma, label, nodes=64):
    """-log E_eps[softmax(logits + sigma * eps)[label]] for 2 classes by a
    tensor-product Gauss-Hermite rule over both noise coordinates."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    e0, e1 = np.meshgrid(x, x, indexing="ij")
    z0 = logits[0] + sigma * e0
    z1 = logits[1] + sigma * e1
    zy = z0 if label == 0 else z1
    p = np.exp(zy - np.logaddexp(z0, z1))
    return float(-np.log(np.sum(np.outer(w, w) * p)))
