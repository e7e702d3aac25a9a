"""Dense float64 arrays and seeded random streams.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The helpers here
add the checks the rest of the package relies on: shape validation, overflow
detection, and reproducible sampling.

Random numbers come from :class:`RngStream`, a thin wrapper over numpy's
PCG64 bit generator seeded through ``SeedSequence``. Child streams are derived
by appending integer keys to the seed sequence's ``spawn_key``; string names
are mapped to integers with CRC-32, so ``RngStream(7).child("dropout")`` is
the same stream on every machine and every run. numpy documents PCG64 output
and ``Generator.standard_normal`` as stable across platforms.
"""

import zlib

import numpy as np

from .errors import DimensionError, DomainError, NumericalError

DTYPE = np.float64


def as_tensor(x):
    """Return ``x`` as a C-contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=DTYPE)


def check_finite(x, what="tensor"):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values in {what}")
    return x


def matmul(a, b):
    """Matrix product of ``a`` (m×k) and ``b`` (k×n).

    Raises DimensionError on mismatched inner extents and NumericalError if
    the product overflows.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return check_finite(out, "matmul result")


def log_sum_exp(x, axis=None, keepdims=False):
    """Numerically stable ``log(sum(exp(x)))``.

    Computed as ``max(x) + log(sum(exp(x - max(x))))`` so finite inputs never
    overflow. With ``axis=None`` the whole array is reduced to a scalar.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.size == 0 or (axis is not None and x.shape[axis] == 0):
        raise DomainError("log_sum_exp of an empty array")
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    if np.ndim(out) == 0:
        return float(out)
    return out


def softmax(logits, axis=-1):
    """Max-shifted softmax along ``axis``."""
    z = np.asarray(logits, dtype=DTYPE)
    e = np.exp(z - np.max(z, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def _key(name):
    if isinstance(name, (int, np.integer)):
        if name < 0:
            raise DomainError("stream keys must be non-negative")
        return int(name)
    if isinstance(name, float):
        # retentions and similar fractions; round so 0.1 and 0.1000000001 collide
        return zlib.crc32(f"{name:.12g}".encode())
    return zlib.crc32(str(name).encode())


class RngStream:
    """A reproducible random stream identified by ``(seed, path)``.

    >>> a = RngStream(42).standard_normal(3)
    >>> b = RngStream(42).standard_normal(3)
    >>> bool((a == b).all())
    True
    """

    def __init__(self, seed, path=()):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *names):
        """Independent sub-stream; does not advance this stream."""
        return RngStream(self.seed, self.path + tuple(_key(n) for n in names))

    def derive_seed(self, *names):
        """A 64-bit integer seed unique to ``names`` under this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path + tuple(_key(n) for n in names))
        return int(ss.generate_state(1, np.uint64)[0])

    def standard_normal(self, shape):
        return self.generator.standard_normal(shape)

    def random(self, shape=None):
        return self.generator.random(shape)

    def get_state(self):
        return self.generator.bit_generator.state

    def set_state(self, state):
        self.generator.bit_generator.state = state

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"


def sample_standard_normal(rng, shape):
    """I.i.d. N(0, 1) draws as a float64 tensor of the given shape."""
    shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise DomainError(f"invalid shape {shape}")
    return as_tensor(rng.standard_normal(shape))
