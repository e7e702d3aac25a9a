"""The five-stage 1-D CNN with a logit head and a log-variance head.

input (N, C_in, T)
  -> conv(n_filters, width) -> ReLU
  -> conv(n_filters, width) -> ReLU
  -> dropout -> pool over time -> batch norm      (one composite stage)
  -> dense logits (n_classes) and dense log-variance (1 or n_classes)

Parameters live in a flat ``dict`` keyed by dotted names so that the
optimizer, checkpoints and gradient checks can treat them uniformly.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import layers as L
from .bayes import BayesHeadParams, predict_batch
from .errors import ConfigError, DimensionError
from .tensor import as_tensor, check_finite

PARAM_NAMES = (
    "conv1.kernels",
    "conv1.bias",
    "conv2.kernels",
    "conv2.bias",
    "bn.gamma",
    "bn.beta",
    "head.logit_weights",
    "head.logit_bias",
    "head.sigma_weights",
    "head.sigma_bias",
)
SIGMA_PARAMS = ("head.sigma_weights", "head.sigma_bias")
BUFFER_NAMES = ("bn.running_mean", "bn.running_var")


@dataclass
class ModelConfig:
    in_channels: int = 76
    n_filters: int = 50
    kernel_width: int = 3
    n_classes: int = 2
    keep_prob: float = 1.0
    pool: str = "max"  # "max" | "mean"
    per_class_sigma: bool = False
    sigma_bias_init: float = 0.0
    sigma_weight_scale: float = 0.0  # multiplies the sigma head's init range; 0 starts sigma constant

    def __post_init__(self):
        if self.pool not in ("max", "mean"):
            raise ConfigError(f"unknown pool kind {self.pool!r}")
        if self.kernel_width % 2 != 1:
            raise ConfigError("kernel_width must be odd")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError("keep_prob must lie in (0, 1]")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")

    def to_dict(self):
        return asdict(self)


class CNN:
    def __init__(self, config, params, buffers):
        self.config = config
        self.params = params
        self.buffers = buffers

    @classmethod
    def initialize(cls, config, rng):
        f, w = config.n_filters, config.kernel_width
        c1 = L.init_conv1d(rng.child("conv1"), config.in_channels, f, w)
        c2 = L.init_conv1d(rng.child("conv2"), f, f, w)
        k = config.n_classes if config.per_class_sigma else 1
        # dense heads: fan-in scaled uniform without the ReLU gain
        bound = np.sqrt(3.0 / f)
        head = rng.child("head").generator
        params = {
            "conv1.kernels": c1.kernels,
            "conv1.bias": c1.bias,
            "conv2.kernels": c2.kernels,
            "conv2.bias": c2.bias,
            "bn.gamma": np.ones(f),
            "bn.beta": np.zeros(f),
            "head.logit_weights": head.uniform(-bound, bound, (config.n_classes, f)),
            "head.logit_bias": np.zeros(config.n_classes),
            "head.sigma_weights": config.sigma_weight_scale * head.uniform(-bound, bound, (k, f)),
            "head.sigma_bias": np.full(k, float(config.sigma_bias_init)),
        }
        buffers = {"bn.running_mean": np.zeros(f), "bn.running_var": np.ones(f)}
        return cls(config, params, buffers)

    def head_params(self):
        p = self.params
        return BayesHeadParams(
            p["head.logit_weights"], p["head.logit_bias"], p["head.sigma_weights"], p["head.sigma_bias"]
        )

    def copy(self):
        return CNN(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    # -- forward / backward -------------------------------------------------------

    def features(self, x, training=False, rng=None, dropout_mask=None, cache=None):
        """Penultimate feature vectors, shape (N, n_filters)."""
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1] != self.config.in_channels:
            raise DimensionError(f"expected (N, {self.config.in_channels}, T) input, got {x.shape}")
        p = self.params
        sub = (lambda k: cache.setdefault(k, {})) if cache is not None else (lambda k: None)
        h = L.conv1d_forward(x, L.Conv1dParams(p["conv1.kernels"], p["conv1.bias"]), sub("conv1"))
        h = L.relu_forward(h, sub("relu1"))
        h = L.conv1d_forward(h, L.Conv1dParams(p["conv2.kernels"], p["conv2.bias"]), sub("conv2"))
        h = L.relu_forward(h, sub("relu2"))
        h = L.dropout_forward(
            h,
            self.config.keep_prob,
            rng=rng if training else None,
            training=training,
            cache=sub("dropout"),
            mask=dropout_mask,
        )
        if self.config.pool == "max":
            h = L.max_pool1d_forward(h, None, sub("pool"))
        else:
            h = L.avg_pool1d_forward(h, sub("pool"))
        bn = L.BatchNormState(p["bn.gamma"], p["bn.beta"], self.buffers["bn.running_mean"], self.buffers["bn.running_var"])
        h = L.batch_norm1d_forward(h, bn, training=training, cache=sub("bn"))
        if training:
            self.buffers["bn.running_mean"] = bn.running_mean
            self.buffers["bn.running_var"] = bn.running_var
        return h

    def forward(self, x, training=False, rng=None, dropout_mask=None, cache=None):
        """Returns ``(logits, log_var)`` of shapes (N, C) and (N, k)."""
        h = self.features(x, training, rng, dropout_mask, cache)
        p = self.params
        sub = (lambda k: cache.setdefault(k, {})) if cache is not None else (lambda k: None)
        logits = L.dense_forward(h, p["head.logit_weights"], p["head.logit_bias"], sub("logit"))
        log_var = L.dense_forward(h, p["head.sigma_weights"], p["head.sigma_bias"], sub("sigma"))
        return logits, log_var

    def backward(self, d_logits, d_log_var, cache):
        grads = {}
        dh, grads["head.logit_weights"], grads["head.logit_bias"] = L.dense_backward(d_logits, cache["logit"])
        dh2, grads["head.sigma_weights"], grads["head.sigma_bias"] = L.dense_backward(d_log_var, cache["sigma"])
        dh = dh + dh2
        dh, grads["bn.gamma"], grads["bn.beta"] = L.batch_norm1d_backward(dh, cache["bn"])
        if self.config.pool == "max":
            dh = L.max_pool1d_backward(dh, cache["pool"])
        else:
            dh = L.avg_pool1d_backward(dh, cache["pool"])
        dh = L.dropout_backward(dh, cache["dropout"])
        dh = L.relu_backward(dh, cache["relu2"])
        dh, g2 = L.conv1d_backward(dh, cache["conv2"])
        dh = L.relu_backward(dh, cache["relu1"])
        _, g1 = L.conv1d_backward(dh, cache["conv1"], input_grad=False)
        grads["conv1.kernels"], grads["conv1.bias"] = g1.kernels, g1.bias
        grads["conv2.kernels"], grads["conv2.bias"] = g2.kernels, g2.bias
        return grads

    # -- inference -----------------------------------------------------------------

    def predict(self, x, ids, T=100, seed=0, bayesian=True, batch_size=512):
        """MC-mean class probabilities and aleatoric variances, in chunks.

        Returns ``(probs (N, C), variance (N,))``. The benchmark model has no
        noise head, so with ``bayesian=False`` probabilities are the plain
        softmax and the variance is reported as zero.
        """
        x = as_tensor(x)
        ids = list(ids)
        probs, var = [], []
        for s in range(0, len(x), batch_size):
            logits, log_var = self.forward(x[s : s + batch_size], training=False)
            if bayesian:
                pr, v = predict_batch(logits, log_var, ids[s : s + batch_size], T, seed)
            else:
                z = logits - logits.max(axis=1, keepdims=True)
                pr = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
                v = np.zeros(len(pr))
            probs.append(pr)
            var.append(v)
        if not probs:
            return np.zeros((0, self.config.n_classes)), np.zeros(0)
        probs = check_finite(np.concatenate(probs), "predicted probabilities")
        return probs, check_finite(np.concatenate(var), "predicted variance")
