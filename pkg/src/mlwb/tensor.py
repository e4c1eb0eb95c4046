"""Shaped tensors, activations, and weight initializers.

Tensors are immutable float32 values (the browser-engine default
precision); heavier arithmetic upcasts to float64 internally and rounds
back on the way out. Initializers draw from numpy's Philox counter-based
generator so the same (name, params, seed, shape) is bit-reproducible on
every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError

ACTIVATION_NAMES = ("linear", "relu", "elu", "sigmoid", "tanh", "softmax")
INITIALIZER_NAMES = (
    "zeros",
    "ones",
    "constant",
    "glorot_uniform",
    "he_uniform",
    "random_normal",
    "random_uniform",
)


class Tensor:
    """A shaped, row-major float32 array. Immutable once constructed."""

    __slots__ = ("_data",)

    def __init__(self, data, shape: Sequence[int] | None = None):
        arr = np.array(data, dtype=np.float32, order="C")  # owning copy
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if arr.size != _size_of(shape):
                raise ShapeError(
                    f"data length {arr.size} does not match shape {list(shape)}"
                )
            arr = arr.reshape(shape)
        if any(s < 1 for s in arr.shape):
            raise ShapeError(f"shape entries must be >= 1, got {list(arr.shape)}")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Take ownership of a freshly built float32 array without copying."""
        t = object.__new__(cls)
        # np.ascontiguousarray would promote 0-d to 1-d; asarray keeps rank
        arr = np.asarray(arr, dtype=np.float32, order="C")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr, dtype=np.float32)
        arr.flags.writeable = False
        t._data = arr
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def rank(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def data(self) -> np.ndarray:
        """The underlying read-only float32 array."""
        return self._data

    def tolist(self):
        return self._data.tolist()

    def flat(self) -> list[float]:
        """Row-major values as Python floats (exact float32 -> float64)."""
        return [float(v) for v in self._data.reshape(-1)]

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {list(self.shape)}")
        return float(self._data.reshape(-1)[0])

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        shape = tuple(int(s) for s in shape)
        if _size_of(shape) != self.size:
            raise ShapeError(
                f"cannot reshape {list(self.shape)} ({self.size} elements) "
                f"to {list(shape)} ({_size_of(shape)} elements)"
            )
        return Tensor(self._data.reshape(shape))

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self._data, other._data
        )

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self):
        return f"Tensor(shape={list(self.shape)}, data={self._data.tolist()!r})"


def _size_of(shape: Iterable[int]) -> int:
    return int(math.prod(shape))


def tensor(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float32))


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActivationKind:
    """One of the supported activations; ``alpha`` is used by elu only."""

    name: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.name not in ACTIVATION_NAMES:
            raise ConfigError(
                f"unknown activation {self.name!r}; expected one of {list(ACTIVATION_NAMES)}"
            )
        if self.name == "elu" and not self.alpha > 0:
            raise ConfigError(f"elu alpha must be > 0, got {self.alpha}")


def activation_forward(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """Apply an activation to a raw array (any float dtype, preserved)."""
    name = kind.name
    if name == "linear":
        return x
    if name == "relu":
        return np.maximum(x, 0)
    if name == "elu":
        return np.where(x >= 0, x, kind.alpha * np.expm1(x))
    if name == "sigmoid":
        # tanh form for stability; clamped one float32 ulp inside (0,1) so
        # the open-interval range contract survives saturation + rounding
        y = 0.5 * (np.tanh(0.5 * x) + 1.0)
        return np.clip(y, 2.0**-149, 1.0 - 2.0**-24)
    if name == "tanh":
        return np.tanh(x)
    if name == "softmax":
        if x.ndim < 1:
            raise ShapeError("softmax requires rank >= 1")
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise ConfigError(f"unknown activation {name!r}")


def activation_backward(
    kind: ActivationKind, x: np.ndarray, y: np.ndarray, grad: np.ndarray
) -> np.ndarray:
    """d(activation)/dx given input x, output y, and upstream grad."""
    name = kind.name
    if name == "linear":
        return grad
    if name == "relu":
        return grad * (x > 0)
    if name == "elu":
        return grad * np.where(x >= 0, 1.0, y + kind.alpha)
    if name == "sigmoid":
        return grad * y * (1.0 - y)
    if name == "tanh":
        return grad * (1.0 - y * y)
    if name == "softmax":
        dot = (grad * y).sum(axis=-1, keepdims=True)
        return y * (grad - dot)
    raise ConfigError(f"unknown activation {name!r}")


def apply_activation(kind: ActivationKind, x: Tensor) -> Tensor:
    """Elementwise activation (per-row along the last axis for softmax)."""
    if kind.name == "softmax" and x.rank < 1:
        raise ShapeError("softmax requires rank >= 1")
    out = activation_forward(kind, x.data.astype(np.float64))
    return Tensor(out.astype(np.float32))


# ---------------------------------------------------------------------------
# Initializers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitializerKind:
    name: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.name not in INITIALIZER_NAMES:
            raise ConfigError(
                f"unknown initializer {self.name!r}; expected one of {list(INITIALIZER_NAMES)}"
            )
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"initializer seed must be >= 0, got {self.seed}")


def _fans(shape: tuple[int, ...]) -> tuple[int, int]:
    """(fan_in, fan_out) following the usual dense/conv conventions."""
    if len(shape) == 0:
        return 1, 1
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[0], shape[1]
    receptive = _size_of(shape[:-2])
    return receptive * shape[-2], receptive * shape[-1]


def initialize(kind: InitializerKind, shape) -> Tensor:
    """Produce a weight tensor; deterministic for a fixed seed."""
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ShapeError(f"shape entries must be >= 1, got {list(shape)}")
    name, params = kind.name, kind.params
    if name == "zeros":
        return Tensor(np.zeros(shape, dtype=np.float32))
    if name == "ones":
        return Tensor(np.ones(shape, dtype=np.float32))
    if name == "constant":
        if "value" not in params:
            raise ConfigError("constant initializer needs a 'value' param")
        return Tensor(np.full(shape, float(params["value"]), dtype=np.float32))

    rng = np.random.Generator(np.random.Philox(kind.seed or 0))
    if name == "glorot_uniform":
        fan_in, fan_out = _fans(shape)
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(rng.uniform(-limit, limit, size=shape).astype(np.float32))
    if name == "he_uniform":
        fan_in, _ = _fans(shape)
        limit = math.sqrt(6.0 / fan_in)
        return Tensor(rng.uniform(-limit, limit, size=shape).astype(np.float32))
    if name == "random_normal":
        mean = float(params.get("mean", 0.0))
        stddev = float(params.get("stddev", 0.05))
        return Tensor(rng.normal(mean, stddev, size=shape).astype(np.float32))
    if name == "random_uniform":
        lo = float(params.get("minval", -0.05))
        hi = float(params.get("maxval", 0.05))
        return Tensor(rng.uniform(lo, hi, size=shape).astype(np.float32))
    raise ConfigError(f"unknown initializer {name!r}")


# ---------------------------------------------------------------------------
# Raw array math shared by the tensor ops and the autodiff graph
# ---------------------------------------------------------------------------


def matmul_raw(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(
            f"matmul needs two rank-2 tensors, got shapes {list(a.shape)} and {list(b.shape)}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {list(a.shape)} x {list(b.shape)}"
        )
    return a @ b


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(matmul_raw(a.data.astype(np.float64), b.data.astype(np.float64)).astype(np.float32))


def conv_output_size(size: int, k: int, stride: int, padding: str) -> int:
    if padding == "valid":
        return (size - k) // stride + 1
    if padding == "same":
        return -(-size // stride)  # ceil
    raise ConfigError(f"unknown padding {padding!r}; expected 'valid' or 'same'")


def _same_pad(size: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def pad_for_conv(
    x: np.ndarray, kh: int, kw: int, stride: int, padding: str, fill: float = 0.0
) -> tuple[np.ndarray, tuple[int, int], tuple[int, int]]:
    """Pad the spatial dims of [n,h,w,c] input; returns (padded, pad_h, pad_w)."""
    if padding == "valid":
        return x, (0, 0), (0, 0)
    ph = _same_pad(x.shape[1], kh, stride)
    pw = _same_pad(x.shape[2], kw, stride)
    if ph == (0, 0) and pw == (0, 0):
        return x, ph, pw
    padded = np.pad(
        x, ((0, 0), ph, pw, (0, 0)), mode="constant", constant_values=fill
    )
    return padded, ph, pw


def im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """[n,H,W,c] -> [n,oh,ow,kh,kw,c] patch view copies."""
    n, H, W, c = xp.shape
    oh = (H - kh) // stride + 1
    ow = (W - kw) // stride + 1
    cols = np.empty((n, oh, ow, kh, kw, c), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[
                :, i : i + oh * stride : stride, j : j + ow * stride : stride, :
            ]
    return cols


def col2im(
    dcols: np.ndarray, padded_shape: tuple[int, ...], stride: int
) -> np.ndarray:
    """Scatter-add [n,oh,ow,kh,kw,c] gradients back to [n,H,W,c]."""
    n, oh, ow, kh, kw, c = dcols.shape
    dx = np.zeros(padded_shape, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :] += dcols[
                :, :, :, i, j, :
            ]
    return dx


def conv2d_raw(
    x: np.ndarray, kernels: np.ndarray, stride: int, padding: str
) -> np.ndarray:
    """Cross-correlation on a [n,h,w,c] batch with [kh,kw,c,f] kernels."""
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(
            f"conv2d needs [n,h,w,c] input and [kh,kw,c,f] kernels, "
            f"got {list(x.shape)} and {list(kernels.shape)}"
        )
    kh, kw, c, f = kernels.shape
    if x.shape[3] != c:
        raise ShapeError(
            f"conv2d channel mismatch: input {list(x.shape)} vs kernels {list(kernels.shape)}"
        )
    if stride < 1:
        raise ConfigError(f"conv2d stride must be >= 1, got {stride}")
    xp, _, _ = pad_for_conv(x, kh, kw, stride, padding)
    if kh > xp.shape[1] or kw > xp.shape[2]:
        raise ShapeError(
            f"kernel [{kh},{kw}] larger than {'padded ' if padding == 'same' else ''}input "
            f"[{x.shape[1]},{x.shape[2]}]"
        )
    cols = im2col(xp, kh, kw, stride)
    n, oh, ow = cols.shape[:3]
    out = cols.reshape(n, oh, ow, kh * kw * c) @ kernels.reshape(kh * kw * c, f)
    return out


def conv2d(input: Tensor, kernels: Tensor, stride: int = 1, padding: str = "valid") -> Tensor:
    """Single-image convolution: [h,w,c] x [kh,kw,c,f] -> [h',w',f]."""
    if input.rank != 3:
        raise ShapeError(f"conv2d input must be rank 3 [h,w,c], got {list(input.shape)}")
    x = input.data.astype(np.float64)[None]
    out = conv2d_raw(x, kernels.data.astype(np.float64), stride, padding)
    return Tensor(out[0].astype(np.float32))
