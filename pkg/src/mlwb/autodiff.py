"""Reverse-mode automatic differentiation over tensor expressions.

An expression is an acyclic record of nodes built eagerly: leaves carry
parameter/input values, interior nodes carry an op result plus a closure
that routes upstream gradients to the node's parents. Values propagate in
float64 (so gradients survive finite-difference scrutiny); results cross
back to float32 at the public Tensor boundary.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .tensor import (
    ActivationKind,
    Tensor,
    activation_backward,
    activation_forward,
    col2im,
    conv2d_raw,
    im2col,
    matmul_raw,
    pad_for_conv,
)


class Node:
    """One entry in a differentiable computation record."""

    __slots__ = ("value", "parents", "_backward", "grad", "name")

    def __init__(self, value: np.ndarray, parents=(), backward=None, name=None):
        self.value = value
        self.parents = tuple(parents)
        self._backward = backward
        self.grad = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        tag = self.name or ("leaf" if not self.parents else "op")
        return f"Node({tag}, shape={list(self.shape)})"


def leaf(data, name: str | None = None) -> Node:
    """A graph leaf (parameter or input)."""
    if isinstance(data, Tensor):
        arr = data.data.astype(np.float64)
    else:
        arr = np.asarray(data, dtype=np.float64)
    return Node(arr, name=name)


def constant(data) -> Node:
    """A leaf that never receives gradient requests by convention."""
    return leaf(data, name="const")


def gradient(loss: Node, wrt: Sequence[Node]) -> dict[Node, Tensor]:
    """d(loss)/d(leaf) for every requested leaf, as float32 tensors."""
    if loss.value.size != 1:
        raise ContractError(
            f"gradient needs a scalar loss node, got shape {list(loss.shape)}"
        )
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None or node._backward is None:
            continue
        node._backward(node.grad)
    out = {}
    for w in wrt:
        g = w.grad if w.grad is not None else np.zeros_like(w.value)
        out[w] = Tensor._wrap(g.astype(np.float32))
    return out


def _topo_order(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return order


def _accumulate(node: Node, g: np.ndarray) -> None:
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


# ---------------------------------------------------------------------------
# Elementwise / linear algebra ops
# ---------------------------------------------------------------------------


def add(a: Node, b: Node) -> Node:
    """a + b; b may be a bias broadcast along the last axis."""
    if a.shape != b.shape and not _bias_broadcastable(a.shape, b.shape):
        raise ShapeError(f"add shapes differ: {list(a.shape)} vs {list(b.shape)}")
    out = Node(a.value + b.value, (a, b))

    def backward(g):
        _accumulate(a, g)
        if b.shape == a.shape:
            _accumulate(b, g)
        else:
            axes = tuple(range(g.ndim - len(b.shape)))
            _accumulate(b, g.sum(axis=axes))

    out._backward = backward
    return out


def _bias_broadcastable(big: tuple, small: tuple) -> bool:
    return len(small) >= 1 and big[len(big) - len(small) :] == small


def sub(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {list(a.shape)} vs {list(b.shape)}")
    out = Node(a.value - b.value, (a, b))

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    out._backward = backward
    return out


def mul(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {list(a.shape)} vs {list(b.shape)}")
    out = Node(a.value * b.value, (a, b))

    def backward(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    out._backward = backward
    return out


def scale(a: Node, c: float) -> Node:
    out = Node(a.value * c, (a,))
    out._backward = lambda g: _accumulate(a, g * c)
    return out


def matmul(a: Node, b: Node) -> Node:
    out = Node(matmul_raw(a.value, b.value), (a, b))

    def backward(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    out._backward = backward
    return out


def reshape(a: Node, shape: Sequence[int]) -> Node:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.value.size:
        raise ShapeError(
            f"cannot reshape {list(a.shape)} to {list(shape)}: element counts differ"
        )
    out = Node(a.value.reshape(shape), (a,))
    out._backward = lambda g: _accumulate(a, g.reshape(a.shape))
    return out


def mean_all(a: Node) -> Node:
    out = Node(np.asarray(a.value.mean()), (a,))
    out._backward = lambda g: _accumulate(
        a, np.full_like(a.value, float(g) / a.value.size)
    )
    return out


def sum_all(a: Node) -> Node:
    out = Node(np.asarray(a.value.sum()), (a,))
    out._backward = lambda g: _accumulate(a, np.full_like(a.value, float(g)))
    return out


def square(a: Node) -> Node:
    out = Node(a.value * a.value, (a,))
    out._backward = lambda g: _accumulate(a, g * 2.0 * a.value)
    return out


def unit_mean(a: Node, unit: int) -> Node:
    """Mean of the slice at index ``unit`` along the last axis (scalar)."""
    if a.value.ndim < 1:
        raise ShapeError("unit_mean needs rank >= 1")
    if not 0 <= unit < a.shape[-1]:
        raise ContractError(
            f"unit {unit} out of range for last axis of size {a.shape[-1]}"
        )
    sliced = a.value[..., unit]
    n = max(sliced.size, 1)
    out = Node(np.asarray(sliced.mean()), (a,))

    def backward(g):
        full = np.zeros_like(a.value)
        full[..., unit] = float(g) / n
        _accumulate(a, full)

    out._backward = backward
    return out


def pick(a: Node, index: tuple[int, ...]) -> Node:
    """Select one element, producing a scalar node."""
    out = Node(np.asarray(a.value[index]), (a,))

    def backward(g):
        full = np.zeros_like(a.value)
        full[index] = float(g)
        _accumulate(a, full)

    out._backward = backward
    return out


def activation(kind: ActivationKind, a: Node) -> Node:
    if kind.name == "softmax" and a.value.ndim < 1:
        raise ShapeError("softmax requires rank >= 1")
    y = activation_forward(kind, a.value)
    out = Node(y, (a,))
    out._backward = lambda g: _accumulate(
        a, activation_backward(kind, a.value, y, g)
    )
    return out


# ---------------------------------------------------------------------------
# Convolution / pooling
# ---------------------------------------------------------------------------


def conv2d(x: Node, k: Node, stride: int, padding: str) -> Node:
    """Cross-correlation on [n,h,w,c] with kernels [kh,kw,c,f]."""
    value = conv2d_raw(x.value, k.value, stride, padding)
    out = Node(value, (x, k))
    kh, kw, c, f = k.shape

    def backward(g):
        xp, (pt, pb), (pl, pr) = pad_for_conv(x.value, kh, kw, stride, padding)
        cols = im2col(xp, kh, kw, stride)  # [n,oh,ow,kh,kw,c]
        n, oh, ow = g.shape[:3]
        gmat = g.reshape(n * oh * ow, f)
        dk = cols.reshape(n * oh * ow, kh * kw * c).T @ gmat
        _accumulate(k, dk.reshape(kh, kw, c, f))
        dcols = (gmat @ k.value.reshape(kh * kw * c, f).T).reshape(
            n, oh, ow, kh, kw, c
        )
        dxp = col2im(dcols, xp.shape, stride)
        if xp.shape != x.value.shape:  # strip same-padding
            dxp = dxp[:, pt : dxp.shape[1] - pb, pl : dxp.shape[2] - pr, :]
        _accumulate(x, dxp)

    out._backward = backward
    return out


def max_pool2d(x: Node, pool: tuple[int, int], stride: int, padding: str) -> Node:
    """Max pooling on [n,h,w,c]; ties route gradient to the first maximum."""
    ph, pw = pool
    xp, (pt, pb), (pl, pr) = pad_for_conv(x.value, ph, pw, stride, padding, fill=-np.inf)
    if ph > xp.shape[1] or pw > xp.shape[2]:
        raise ShapeError(
            f"pool [{ph},{pw}] larger than input [{x.shape[1]},{x.shape[2]}]"
        )
    cols = im2col(xp, ph, pw, stride)  # [n,oh,ow,ph,pw,c]
    n, oh, ow = cols.shape[:3]
    c = cols.shape[-1]
    flat = cols.reshape(n, oh, ow, ph * pw, c)
    idx = flat.argmax(axis=3)
    value = np.take_along_axis(flat, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    out = Node(value, (x,))

    def backward(g):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, idx[:, :, :, None, :], g[:, :, :, None, :], axis=3)
        dxp = col2im(dflat.reshape(n, oh, ow, ph, pw, c), xp.shape, stride)
        if xp.shape != x.value.shape:
            dxp = dxp[:, pt : dxp.shape[1] - pb, pl : dxp.shape[2] - pr, :]
        _accumulate(x, dxp)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Stochastic / normalization layers (training-time behavior)
# ---------------------------------------------------------------------------


def dropout(a: Node, rate: float, rng: np.random.Generator) -> Node:
    """Inverted dropout: kept activations are rescaled by 1/(1-rate)."""
    if not 0 <= rate < 1:
        raise ContractError(f"dropout rate must be in [0,1), got {rate}")
    if rate == 0:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    out = Node(a.value * mask, (a,))
    out._backward = lambda g: _accumulate(a, g * mask)
    return out


def gaussian_noise(a: Node, stddev: float, rng: np.random.Generator) -> Node:
    if stddev < 0:
        raise ContractError(f"noise stddev must be >= 0, got {stddev}")
    if stddev == 0:
        return a
    out = Node(a.value + rng.normal(0.0, stddev, a.shape), (a,))
    out._backward = lambda g: _accumulate(a, g)
    return out


def batch_norm_train(
    x: Node, gamma: Node, beta: Node, eps: float
) -> tuple[Node, np.ndarray, np.ndarray]:
    """Normalize over all axes but the last using batch statistics.

    Returns the output node plus the (biased) batch mean/variance so the
    caller can update the layer's moving averages.
    """
    axes = tuple(range(x.value.ndim - 1))
    m = x.value.size // x.shape[-1]
    mu = x.value.mean(axis=axes)
    xc = x.value - mu
    var = (xc * xc).mean(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = Node(gamma.value * xhat + beta.value, (x, gamma, beta))

    def backward(g):
        _accumulate(gamma, (g * xhat).sum(axis=axes))
        _accumulate(beta, g.sum(axis=axes))
        dxhat = g * gamma.value
        dvar = (dxhat * xc).sum(axis=axes) * -0.5 * inv_std**3
        dmu = (dxhat * -inv_std).sum(axis=axes) + dvar * (-2.0 * xc).mean(axis=axes)
        _accumulate(x, dxhat * inv_std + dvar * 2.0 * xc / m + dmu / m)

    out._backward = backward
    return out, mu, var


def batch_norm_infer(
    x: Node, gamma: Node, beta: Node, mean: np.ndarray, var: np.ndarray, eps: float
) -> Node:
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mean) * inv_std
    out = Node(gamma.value * xhat + beta.value, (x, gamma, beta))
    axes = tuple(range(x.value.ndim - 1))

    def backward(g):
        _accumulate(x, g * gamma.value * inv_std)
        _accumulate(gamma, (g * xhat).sum(axis=axes))
        _accumulate(beta, g.sum(axis=axes))

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Losses and regularization penalties
# ---------------------------------------------------------------------------

CROSSENTROPY_CLIP = 1e-7


def mse(pred: Node, target: np.ndarray) -> Node:
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(
            f"mse shapes differ: predicted {list(pred.shape)} vs target {list(target.shape)}"
        )
    diff = pred.value - target
    n = max(diff.size, 1)
    out = Node(np.asarray((diff * diff).mean()), (pred,))
    out._backward = lambda g: _accumulate(pred, float(g) * 2.0 * diff / n)
    return out


def categorical_crossentropy(pred: Node, target: np.ndarray) -> Node:
    """Mean over rows of -sum(target * log(clip(pred)))."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(
            f"crossentropy shapes differ: predicted {list(pred.shape)} "
            f"vs target {list(target.shape)}"
        )
    if pred.value.ndim < 1:
        raise ShapeError("crossentropy requires rank >= 1")
    clipped = np.clip(pred.value, CROSSENTROPY_CLIP, 1.0 - CROSSENTROPY_CLIP)
    rows = max(pred.value.size // pred.shape[-1], 1)
    out = Node(np.asarray(-(target * np.log(clipped)).sum() / rows), (pred,))

    def backward(g):
        inside = (pred.value > CROSSENTROPY_CLIP) & (
            pred.value < 1.0 - CROSSENTROPY_CLIP
        )
        _accumulate(pred, float(g) * np.where(inside, -target / clipped, 0.0) / rows)

    out._backward = backward
    return out


def l1_penalty(w: Node, lam: float) -> Node:
    out = Node(np.asarray(lam * np.abs(w.value).sum()), (w,))
    out._backward = lambda g: _accumulate(w, float(g) * lam * np.sign(w.value))
    return out


def l2_penalty(w: Node, lam: float) -> Node:
    out = Node(np.asarray(lam * (w.value * w.value).sum()), (w,))
    out._backward = lambda g: _accumulate(w, float(g) * 2.0 * lam * w.value)
    return out
