"""Heteroscedastic logit corruption and the Monte Carlo Bayesian cross-entropy.

A second dense layer on the penultimate features predicts ``s = log sigma^2``.
The class logits ``z = W x + b`` are corrupted by isotropic Gaussian noise,
``z_t = z + sigma * eps_t`` with ``eps_t ~ N(0, I)``, and the Bayesian
categorical cross-entropy is the negative log of the MC-averaged true-class
softmax::

    L = log T - logsumexp_t( z_t[y] - logsumexp_c z_t[c] )

Gradients reach both heads through the reparameterized ``sigma * eps`` term.
Functions named ``*_batch`` work on (N, ...) arrays and are what training
uses; the rest mirror them for a single feature vector.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .tensor import RngStream, as_tensor, check_finite, log_sum_exp, softmax


@dataclass
class BayesHeadParams:
    logit_weights: np.ndarray  # (C, d)
    logit_bias: np.ndarray  # (C,)
    sigma_weights: np.ndarray  # (1, d), or (C, d) for per-class noise
    sigma_bias: np.ndarray  # (1,) or (C,)

    def __post_init__(self):
        for name in ("logit_weights", "logit_bias", "sigma_weights", "sigma_bias"):
            setattr(self, name, as_tensor(getattr(self, name)))
        c, d = self.logit_weights.shape
        k = self.sigma_weights.shape[0]
        if self.logit_bias.shape != (c,):
            raise DimensionError("logit_bias must have one entry per class")
        if self.sigma_weights.shape[1] != d or k not in (1, c) or self.sigma_bias.shape != (k,):
            raise DimensionError("sigma head must map d features to 1 or C log-variances")

    @property
    def n_classes(self):
        return self.logit_weights.shape[0]


@dataclass
class Prediction:
    probs: np.ndarray
    aleatoric_variance: float
    mc_samples: int


def _check_label(label, n_classes):
    if not 0 <= int(label) < n_classes or int(label) != label:
        raise DomainError(f"label {label} outside [0, {n_classes})")
    return int(label)


# -- single instance -----------------------------------------------------------


def logits_of(x, params):
    return params.logit_weights @ as_tensor(x) + params.logit_bias


def log_variance_of(x, params):
    return params.sigma_weights @ as_tensor(x) + params.sigma_bias


def sigma_of(x, params):
    """Noise scale ``exp(s / 2)`` with ``s`` the predicted log-variance.

    Returns a float for the isotropic head, an array for the per-class one.
    """
    s = log_variance_of(check_finite(as_tensor(x), "features"), params)
    sigma = check_finite(np.exp(s / 2.0), "sigma")
    return float(sigma[0]) if sigma.shape == (1,) else sigma


def mc_corrupt_logits(x, params, T, rng):
    """``T`` corrupted logit vectors ``W x + sigma * eps_t``, shape (T, C)."""
    if T < 1:
        raise DomainError("need at least one Monte Carlo sample")
    z = logits_of(x, params)
    sigma = np.atleast_1d(sigma_of(x, params))
    eps = rng.standard_normal((int(T), params.n_classes))
    return z[None, :] + sigma[None, :] * eps


def bayes_ce_loss(corrupted, label):
    """Negative log of the MC-mean true-class softmax over the rows of ``corrupted``."""
    corrupted = as_tensor(corrupted)
    if corrupted.ndim != 2:
        raise DimensionError("corrupted logits must be (T, C)")
    y = _check_label(label, corrupted.shape[1])
    a = corrupted[:, y] - log_sum_exp(corrupted, axis=1)
    return float(np.log(corrupted.shape[0]) - log_sum_exp(a))


def standard_ce(logits, label):
    logits = as_tensor(logits)
    y = _check_label(label, logits.shape[0])
    return float(log_sum_exp(logits) - logits[y])


def combined_loss(x, label, params, T, rng, w_bayes=0.2, w_ce=1.0):
    """``w_bayes * bayes_ce + w_ce * standard_ce`` for one feature vector.

    The standard term uses the uncorrupted logits.
    """
    if w_bayes < 0 or w_ce < 0:
        raise DomainError("loss weights must be non-negative")
    total = w_ce * standard_ce(logits_of(x, params), label)
    if w_bayes > 0:
        total += w_bayes * bayes_ce_loss(mc_corrupt_logits(x, params, T, rng), label)
    return total


def predict(x, params, T=100, seed=0, instance_id=0):
    """MC-mean class probabilities and the aleatoric variance ``sigma^2``.

    Noise is drawn from the same per-instance stream as :func:`predict_batch`,
    so repeated calls, and batched calls, agree exactly.
    """
    rng = RngStream(seed).child("mc", instance_id)
    corrupted = mc_corrupt_logits(x, params, T, rng)
    clean = softmax(logits_of(x, params))
    # averaging offsets from the clean softmax keeps sigma = 0 exact
    probs = clean + (softmax(corrupted, axis=1) - clean).mean(axis=0)
    sigma = np.atleast_1d(sigma_of(x, params))
    return Prediction(probs=probs, aleatoric_variance=float(np.mean(sigma**2)), mc_samples=int(T))


# -- batched -------------------------------------------------------------------


def corrupt_batch(logits, log_var, eps):
    """(N, C) logits, (N, k) log-variances, (N, T, C) noise -> (N, T, C)."""
    sigma = np.exp(log_var / 2.0)
    return logits[:, None, :] + sigma[:, None, :] * eps


def bayes_ce_batch(corrupted, labels):
    """Per-instance Bayesian CE and its gradient w.r.t. the corrupted logits."""
    n, t, c = corrupted.shape
    lse_c = log_sum_exp(corrupted, axis=2, keepdims=True)
    logp = corrupted - lse_c  # (N, T, C)
    a = logp[np.arange(n), :, labels]  # (N, T)
    lse_t = log_sum_exp(a, axis=1, keepdims=True)
    loss = np.log(t) - lse_t[:, 0]
    w = np.exp(a - lse_t)  # weights over samples, rows sum to 1
    onehot = np.zeros((n, 1, c))
    onehot[np.arange(n), 0, labels] = 1.0
    grad = -w[:, :, None] * (onehot - np.exp(logp))
    return loss, grad


def standard_ce_batch(logits, labels):
    n = logits.shape[0]
    logp = logits - log_sum_exp(logits, axis=1, keepdims=True)
    loss = -logp[np.arange(n), labels]
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad


def combined_loss_batch(logits, log_var, labels, eps, w_bayes=0.2, w_ce=1.0, sample_weights=None):
    """Weighted-mean combined loss over a batch with its gradients.

    Returns ``(loss, grad_logits, grad_log_var)``. ``eps`` holds the frozen
    standard-normal draws, shape (N, T, C); it may be ``None`` when
    ``w_bayes == 0``.
    """
    n = logits.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    wts = np.full(n, 1.0 / n) if sample_weights is None else sample_weights / np.sum(sample_weights)
    ce, d_logits = standard_ce_batch(logits, labels)
    total = w_ce * ce
    d_logits = w_ce * d_logits
    d_log_var = np.zeros_like(log_var)
    if w_bayes > 0:
        corrupted = corrupt_batch(logits, log_var, eps)
        bl, d_corr = bayes_ce_batch(corrupted, labels)
        total = total + w_bayes * bl
        d_logits = d_logits + w_bayes * d_corr.sum(axis=1)
        d_sigma = (d_corr * eps).sum(axis=1)  # (N, C)
        if log_var.shape[1] == 1:
            d_sigma = d_sigma.sum(axis=1, keepdims=True)
        d_log_var = w_bayes * d_sigma * np.exp(log_var / 2.0) / 2.0
    loss = float(np.dot(wts, total))
    return loss, d_logits * wts[:, None], d_log_var * wts[:, None]


def predict_batch(logits, log_var, ids, T, seed):
    """MC-mean probabilities and variances for a batch.

    Noise for each instance comes from ``RngStream(seed).child("mc", id)``,
    so a prediction depends only on that instance's features, never on which
    other instances share the batch.
    """
    n, c = logits.shape
    k = log_var.shape[1]
    root = RngStream(seed).child("mc")
    eps = np.empty((n, T, c))
    for i, pid in enumerate(ids):
        eps[i] = root.child(pid).standard_normal((T, c))
    corrupted = corrupt_batch(logits, log_var, eps)
    clean = softmax(logits, axis=1)
    probs = clean + (softmax(corrupted, axis=2) - clean[:, None, :]).mean(axis=1)
    sigma = np.exp(log_var / 2.0)
    variance = (sigma**2).mean(axis=1) if k > 1 else sigma[:, 0] ** 2
    return probs, variance
