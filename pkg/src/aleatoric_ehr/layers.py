"""Forward and backward passes for the layers of the 1-D CNN.

Every layer is a pair of functions ``*_forward(x, ..., cache)`` and
``*_backward(grad, cache)``. The forward pass writes whatever the backward
pass needs into the caller-supplied ``cache`` dict (pass ``None`` to skip
caching, e.g. at inference). Activations are batched: ``(N, C, T)`` for
temporal feature maps and ``(N, D)`` for flat feature vectors.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, DomainError, StateError
from .tensor import as_tensor, softmax  # noqa: F401  (softmax re-exported)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class Conv1dParams:
    kernels: np.ndarray  # (out_ch, in_ch, width)
    bias: np.ndarray  # (out_ch,)

    def __post_init__(self):
        self.kernels = as_tensor(self.kernels)
        self.bias = as_tensor(self.bias)
        if self.kernels.ndim != 3:
            raise DimensionError("kernels must be (out_ch, in_ch, width)")
        if self.kernels.shape[0] < 1:
            raise DomainError("conv layer needs at least one output channel")
        if self.kernels.shape[2] % 2 != 1:
            raise DomainError("kernel width must be odd for same padding")
        if self.bias.shape != (self.kernels.shape[0],):
            raise DimensionError("bias length must equal out_ch")


def he_uniform(rng, shape, fan_in):
    """Fan-in scaled uniform init with the ReLU gain sqrt(2)."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.generator.uniform(-bound, bound, size=shape)


def init_conv1d(rng, in_ch, out_ch, width=3):
    k = he_uniform(rng, (out_ch, in_ch, width), in_ch * width)
    return Conv1dParams(k, np.zeros(out_ch))


def _need(cache, *keys):
    if cache is None or any(k not in cache for k in keys):
        raise StateError("backward called without a matching forward cache")


# -- convolution ---------------------------------------------------------------


def conv1d_forward(x, params, cache=None):
    """Same-padded 1-D cross-correlation along the time axis.

    ``out[n, o, t] = bias[o] + sum_{i, w} kernels[o, i, w] * xpad[n, i, t + w]``
    where ``xpad`` is ``x`` zero-padded by ``width // 2`` on both sides.
    Accepts ``(C, T)`` or ``(N, C, T)`` input.
    """
    x = as_tensor(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise DimensionError(f"conv1d expects (N, C, T) input, got {x.shape}")
    n, c, t = x.shape
    out_ch, in_ch, width = params.kernels.shape
    if c != in_ch:
        raise DimensionError(f"input has {c} channels, kernels expect {in_ch}")
    if t < width:
        raise DomainError(f"time length {t} shorter than kernel width {width}")
    pad = width // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = sliding_window_view(xp, width, axis=2)  # (N, C, T, W)
    cols = cols.transpose(0, 2, 1, 3).reshape(n * t, c * width)
    kflat = params.kernels.reshape(out_ch, c * width)
    out = cols @ kflat.T + params.bias
    out = np.ascontiguousarray(out.reshape(n, t, out_ch).transpose(0, 2, 1))
    if cache is not None:
        cache["cols"] = cols
        cache["x_shape"] = (n, c, t)
        cache["kernels"] = params.kernels
        cache["single"] = single
    return out[0] if single else out


def conv1d_backward(grad_out, cache, input_grad=True):
    """Gradients of :func:`conv1d_forward` w.r.t. its input and parameters.

    Returns ``(grad_input, Conv1dParams(grad_kernels, grad_bias))``;
    ``grad_input`` is ``None`` when ``input_grad`` is false.
    """
    _need(cache, "cols", "x_shape", "kernels")
    n, c, t = cache["x_shape"]
    kernels = cache["kernels"]
    out_ch, _, width = kernels.shape
    g = as_tensor(grad_out)
    if cache["single"]:
        g = g[None]
    g2 = g.transpose(0, 2, 1).reshape(n * t, out_ch)
    dk = (g2.T @ cache["cols"]).reshape(out_ch, c, width)
    db = g2.sum(axis=0)
    dx = None
    if input_grad:
        dcols = (g2 @ kernels.reshape(out_ch, c * width)).reshape(n, t, c, width)
        pad = width // 2
        dxp = np.zeros((n, c, t + 2 * pad))
        for w in range(width):
            dxp[:, :, w : w + t] += dcols[:, :, :, w].transpose(0, 2, 1)
        dx = dxp[:, :, pad : pad + t]
        if cache["single"]:
            dx = dx[0]
    return dx, Conv1dParams(dk, db)


# -- elementwise / dense --------------------------------------------------------


def relu_forward(x, cache=None):
    x = as_tensor(x)
    pos = x > 0
    if cache is not None:
        cache["pos"] = pos
    return np.where(pos, x, 0.0)


def relu_backward(grad, cache):
    _need(cache, "pos")
    return np.where(cache["pos"], grad, 0.0)


def dense_forward(x, weight, bias, cache=None):
    """``x @ weight.T + bias`` for ``x`` of shape (N, D) and weight (out, D)."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"dense input width {x.shape[-1]} != weight fan-in {weight.shape[1]}")
    if cache is not None:
        cache["x"] = x
        cache["weight"] = weight
    return x @ weight.T + bias


def dense_backward(grad, cache):
    """Returns ``(grad_x, grad_weight, grad_bias)``."""
    _need(cache, "x", "weight")
    grad = as_tensor(grad)
    x = cache["x"]
    if x.ndim == 1:
        return grad @ cache["weight"], np.outer(grad, x), grad
    return grad @ cache["weight"], grad.T @ x, grad.sum(axis=0)


# -- pooling --------------------------------------------------------------------


def max_pool1d_forward(x, window=None, cache=None):
    """Non-overlapping max pooling over time.

    ``window=None`` pools the whole temporal axis, mapping (N, C, T) to (N, C).
    Ties go to the lowest time index. Trailing steps that do not fill a
    window are dropped.
    """
    x = as_tensor(x)
    n, c, t = x.shape
    full = window is None
    w = t if full else int(window)
    if w < 1 or w > t:
        raise DomainError(f"pool window {w} invalid for length {t}")
    k = t // w
    blocks = x[:, :, : k * w].reshape(n, c, k, w)
    arg = np.argmax(blocks, axis=3)  # first maximum wins
    out = np.take_along_axis(blocks, arg[..., None], axis=3)[..., 0]
    if cache is not None:
        cache["arg"] = arg
        cache["shape"] = x.shape
        cache["w"] = w
        cache["full"] = full
    return out[:, :, 0] if full else out


def max_pool1d_backward(grad, cache):
    _need(cache, "arg", "shape", "w")
    n, c, t = cache["shape"]
    w = cache["w"]
    arg = cache["arg"]
    k = arg.shape[2]
    g = grad[:, :, None] if cache["full"] else grad
    dblocks = np.zeros((n, c, k, w))
    np.put_along_axis(dblocks, arg[..., None], g[..., None], axis=3)
    dx = np.zeros((n, c, t))
    dx[:, :, : k * w] = dblocks.reshape(n, c, k * w)
    return dx


def avg_pool1d_forward(x, cache=None):
    """Mean over the whole temporal axis, (N, C, T) -> (N, C)."""
    x = as_tensor(x)
    if cache is not None:
        cache["shape"] = x.shape
    return x.mean(axis=2)


def avg_pool1d_backward(grad, cache):
    _need(cache, "shape")
    n, c, t = cache["shape"]
    return np.broadcast_to(grad[:, :, None] / t, (n, c, t)).copy()


# -- dropout --------------------------------------------------------------------


def dropout_forward(x, keep_prob, rng=None, training=True, cache=None, mask=None):
    """Inverted dropout.

    In training mode each unit survives with probability ``keep_prob`` and is
    scaled by ``1 / keep_prob``; a pre-drawn ``mask`` (already scaled) can be
    supplied to freeze the pattern. Inference mode is the identity and must
    not be given an RNG.
    """
    x = as_tensor(x)
    if not 0.0 < keep_prob <= 1.0:
        raise DomainError("keep_prob must lie in (0, 1]")
    if not training:
        if rng is not None:
            raise ContractError("dropout in inference mode does not consume randomness")
        if cache is not None:
            cache["mask"] = None
        return x
    if mask is None:
        if keep_prob == 1.0:
            mask = None
        else:
            if rng is None:
                raise ContractError("training-mode dropout needs an RngStream")
            mask = (rng.random(x.shape) < keep_prob) / keep_prob
    if cache is not None:
        cache["mask"] = mask
    return x if mask is None else x * mask


def dropout_backward(grad, cache):
    _need(cache, "mask")
    mask = cache["mask"]
    return grad if mask is None else grad * mask


# -- batch normalization ---------------------------------------------------------


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels):
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels))


def _bn_view(v, ndim):
    return v if ndim == 2 else v[:, None]


def batch_norm1d_forward(x, state, training=True, cache=None, eps=BN_EPS, momentum=BN_MOMENTUM):
    """Batch normalization over the channel axis of (N, C) or (N, C, T) input.

    Training mode normalizes with the biased batch statistics and moves the
    running estimates by ``momentum``; inference uses the running estimates.
    ``eps`` is added to the variance, so a constant channel maps to ``beta``.
    """
    x = as_tensor(x)
    axes = (0,) if x.ndim == 2 else (0, 2)
    if training:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        state.running_mean = (1 - momentum) * state.running_mean + momentum * mean
        state.running_var = (1 - momentum) * state.running_var + momentum * var
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - _bn_view(mean, x.ndim)) * _bn_view(inv_std, x.ndim)
    if cache is not None:
        cache["xhat"] = xhat
        cache["inv_std"] = inv_std
        cache["gamma"] = state.gamma
        cache["axes"] = axes
        cache["training"] = training
    return _bn_view(state.gamma, x.ndim) * xhat + _bn_view(state.beta, x.ndim)


def batch_norm1d_backward(grad, cache):
    """Returns ``(grad_x, grad_gamma, grad_beta)``."""
    _need(cache, "xhat", "inv_std", "gamma", "axes")
    xhat, axes, nd = cache["xhat"], cache["axes"], grad.ndim
    dgamma = np.sum(grad * xhat, axis=axes)
    dbeta = np.sum(grad, axis=axes)
    dxhat = grad * _bn_view(cache["gamma"], nd)
    inv_std = _bn_view(cache["inv_std"], nd)
    if not cache["training"]:
        return dxhat * inv_std, dgamma, dbeta
    m = grad.size // grad.shape[1]
    s1 = _bn_view(np.sum(dxhat, axis=axes), nd)
    s2 = _bn_view(np.sum(dxhat * xhat, axis=axes), nd)
    dx = inv_std / m * (m * dxhat - s1 - xhat * s2)
    return dx, dgamma, dbeta
