"""Explainability probes: feature maps by input-space gradient ascent,
GradCAM heatmaps, per-layer data-flow capture, and loss comparison.

All operations are pure over a weight snapshot, so they can run while
training continues on newer snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .compiled import CompiledModel, build_forward
from .errors import ContractError
from .tensor import Tensor
from .training import loss_categorical_crossentropy, loss_mse

FEATURE_MAP_STEPS = 100
FEATURE_MAP_STEP_SIZE = 0.1
NOISE_LOW, NOISE_HIGH = 0.45, 0.55
TRACE_TOLERANCE = 1e-6


@dataclass
class FeatureMapResult:
    optimized: Tensor  # same shape as the model input
    trace: list[float]  # objective before ascent plus one entry per step
    layer_index: int
    unit: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "optimized": self.optimized.tolist(),
            "trace": self.trace,
            "layer_index": self.layer_index,
            "unit": self.unit,
            "converged": self.converged,
        }


@dataclass
class Heatmap:
    values: Tensor  # [h, w] in [0,1]
    input_shape: tuple[int, ...]
    class_index: int
    conv_layer_index: int

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "input_shape": list(self.input_shape),
            "class_index": self.class_index,
            "conv_layer_index": self.conv_layer_index,
        }


@dataclass
class LayerIOEntry:
    index: int
    kind: str
    input: Tensor
    output: Tensor
    kernels: Tensor | None  # conv2d only

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "input": self.input.tolist(),
            "output": self.output.tolist(),
            "input_shape": list(self.input.shape),
            "output_shape": list(self.output.shape),
            "kernels": self.kernels.tolist() if self.kernels is not None else None,
        }


@dataclass
class LayerIO:
    entries: list[LayerIOEntry]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}


# ---------------------------------------------------------------------------
# Feature maps
# ---------------------------------------------------------------------------


def _unit_count(shape: tuple[int, ...]) -> int:
    """Addressable units of a layer output: channels for image-shaped
    outputs, elements otherwise."""
    return shape[-1] if shape else 1


def feature_map(
    compiled: CompiledModel,
    layer_index: int,
    unit: int,
    steps: int = FEATURE_MAP_STEPS,
    step_size: float = FEATURE_MAP_STEP_SIZE,
    seed: int = 0,
) -> FeatureMapResult:
    """Ascend the input toward maximal mean activation of one unit or
    channel, weights frozen. Image inputs are clamped to [0,1] each step."""
    n_layers = len(compiled.spec.layers)
    if not 0 <= layer_index < n_layers:
        raise ContractError(f"layer index {layer_index} out of range [0, {n_layers - 1}]")
    out_shape = compiled.shapes[layer_index][1]
    if not 0 <= unit < _unit_count(out_shape):
        raise ContractError(
            f"unit {unit} out of range for layer {layer_index} output "
            f"{list(out_shape)}"
        )
    if steps < 1:
        raise ContractError(f"steps must be >= 1, got {steps}")
    if step_size < 0:
        raise ContractError(f"step_size must be >= 0, got {step_size}")

    rng = np.random.default_rng(seed)
    in_shape = compiled.input_shape
    x = rng.uniform(NOISE_LOW, NOISE_HIGH, size=(1, *in_shape))
    clamp = compiled.spec.input.get("kind") == "image"

    def objective_and_grad(arr):
        node = ad.leaf(arr, name="probe")
        fp = build_forward(compiled, node, training=False)
        target = ad.unit_mean(fp.post[layer_index], unit)
        g = ad.gradient(target, [node])[node]
        return float(target.value), g.data.astype(np.float64)

    value, grad = objective_and_grad(x)
    trace = [value]
    for _ in range(steps):
        if step_size > 0:
            x = x + step_size * grad
            if clamp:
                x = np.clip(x, 0.0, 1.0)
        value, grad = objective_and_grad(x)
        trace.append(value)

    tail = max(1, steps // 10)
    monotone_tail = all(
        trace[i + 1] >= trace[i] - TRACE_TOLERANCE
        for i in range(len(trace) - 1 - tail, len(trace) - 1)
    )
    converged = monotone_tail and trace[-1] >= trace[0]
    optimized = Tensor._wrap(np.ascontiguousarray(x[0].astype(np.float32)))
    return FeatureMapResult(optimized, trace, layer_index, unit, converged)


# ---------------------------------------------------------------------------
# GradCAM
# ---------------------------------------------------------------------------


def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners bilinear interpolation of a rank-2 array."""
    h, w = arr.shape
    if (h, w) == (out_h, out_w):
        return arr.astype(np.float64)
    src = arr.astype(np.float64)
    ys = np.linspace(0, h - 1, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0, w - 1, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bottom = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def _final_score_node(compiled: CompiledModel, fp, class_index: int) -> ad.Node:
    """Class score for attribution: the pre-activation logit of the last
    layer, so positive rescaling of the head leaves the map unchanged."""
    out_shape = compiled.output_shape
    if len(out_shape) != 1:
        raise ContractError(
            f"class attribution needs a vector output, got {list(out_shape)}"
        )
    if not 0 <= class_index < out_shape[0]:
        raise ContractError(
            f"class index {class_index} out of range for output {list(out_shape)}"
        )
    return ad.pick(fp.pre[-1], (0, class_index))


def gradcam(
    compiled: CompiledModel,
    x,
    class_index: int,
    conv_layer_index: int | None = None,
) -> Heatmap:
    """Standard GradCAM at the chosen (default last) conv layer."""
    conv_layers = [
        i for i, layer in enumerate(compiled.spec.layers) if layer.kind == "conv2d"
    ]
    if not conv_layers:
        raise ContractError("GradCAM needs at least one conv2d layer")
    if conv_layer_index is None:
        conv_layer_index = conv_layers[-1]
    if conv_layer_index not in conv_layers:
        raise ContractError(f"layer {conv_layer_index} is not a conv2d layer")

    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    if arr.shape == compiled.input_shape:
        arr = arr[None, ...]
    if arr.shape != (1, *compiled.input_shape):
        raise ContractError(
            f"gradcam expects a single input shaped {list(compiled.input_shape)}, "
            f"got {list(arr.shape[1:] if arr.ndim > 1 else arr.shape)}"
        )

    # activations at the conv layer, then the rest of the net from a cut leaf
    base = build_forward(compiled, arr, training=False)
    activations = base.post[conv_layer_index].value  # [1, oh, ow, f]
    cut = ad.leaf(activations, name="cam_cut")
    head = build_forward(compiled, cut, training=False, start=conv_layer_index + 1)
    score = _final_score_node(compiled, head, class_index)
    grads = ad.gradient(score, [cut])[cut].data.astype(np.float64)  # [1, oh, ow, f]

    channel_weights = grads[0].mean(axis=(0, 1))  # [f]
    cam = np.maximum((activations[0] * channel_weights).sum(axis=-1), 0.0)  # [oh, ow]
    cam = bilinear_resize(cam, compiled.input_shape[0], compiled.input_shape[1])

    lo, hi = float(cam.min()), float(cam.max())
    if hi - lo > 0:
        cam = (cam - lo) / (hi - lo)
    else:
        cam = np.zeros_like(cam)  # constant maps normalize to all-zeros
    values = Tensor._wrap(np.ascontiguousarray(cam.astype(np.float32)))
    return Heatmap(values, compiled.input_shape, class_index, conv_layer_index)


# ---------------------------------------------------------------------------
# Layer data flow
# ---------------------------------------------------------------------------


def layer_io(compiled: CompiledModel, x) -> LayerIO:
    """Capture every layer's input and output (inference mode), plus conv
    kernels. Chaining is exact: output[i] is input[i+1]."""
    fp = build_forward(compiled, x, training=False)
    entries = []
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    if arr.shape == compiled.input_shape:
        arr = arr[None, ...]
    prev = np.asarray(arr, dtype=np.float64)
    for i, layer in enumerate(compiled.spec.layers):
        out_value = fp.post[i].value
        kernels = (
            compiled.weights[i]["kernel"] if layer.kind == "conv2d" else None
        )
        entry_in = Tensor._wrap(np.ascontiguousarray(prev.astype(np.float32)))
        entry_out = Tensor._wrap(np.ascontiguousarray(out_value.astype(np.float32)))
        entries.append(LayerIOEntry(i, layer.kind, entry_in, entry_out, kernels))
        prev = out_value
    return LayerIO(entries)


# ---------------------------------------------------------------------------
# Loss comparison
# ---------------------------------------------------------------------------


def loss_comparison(y: Tensor, y_hat: Tensor) -> dict:
    """Evaluate every applicable loss on the same data; inapplicable ones
    are reported with a reason instead of a value."""
    out: dict[str, dict] = {}
    if y.shape == y_hat.shape:
        out["mse"] = {"value": loss_mse(y, y_hat)}
    else:
        out["mse"] = {
            "omitted": f"shapes {list(y.shape)} and {list(y_hat.shape)} differ"
        }
    one_hot = (
        y.rank == 2
        and bool(np.all((y.data == 0) | (y.data == 1)))
        and bool(np.all(y.data.sum(axis=1) == 1))
    )
    if y.shape != y_hat.shape:
        out["categorical_crossentropy"] = {
            "omitted": f"shapes {list(y.shape)} and {list(y_hat.shape)} differ"
        }
    elif not one_hot:
        out["categorical_crossentropy"] = {"omitted": "targets are not one-hot rows"}
    else:
        out["categorical_crossentropy"] = {
            "value": loss_categorical_crossentropy(y, y_hat)
        }
    return out
