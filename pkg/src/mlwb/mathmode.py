"""Equation rendering for vector-input models (the Math view): activation
and loss definitions, per-layer matrix equations with fixed 5-decimal
weights, LaTeX serialization, and red/green/black weight-delta coloring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compiled import CompiledModel
from .errors import ContractError, ShapeError
from .model import ModelSpec, input_shape_of
from .tensor import Tensor

DECIMALS = 5
DELTA_EPSILON = 1e-12

# the kinds an equation view can express; anything image-shaped cannot
RENDERABLE_KINDS = (
    "dense",
    "flatten",
    "reshape",
    "dropout",
    "activation",
    "batch_norm",
    "gaussian_noise",
)

ACTIVATION_DEFINITIONS = {
    "linear": r"\mathrm{linear}(x) = x",
    "relu": r"\mathrm{relu}(x) = \max(0, x)",
    "elu": r"\mathrm{elu}(x) = \begin{cases} x & x \geq 0 \\ \alpha (e^{x} - 1) & x < 0 \end{cases}",
    "sigmoid": r"\sigma(x) = \frac{1}{1 + e^{-x}}",
    "tanh": r"\tanh(x) = \frac{e^{x} - e^{-x}}{e^{x} + e^{-x}}",
    "softmax": r"\mathrm{softmax}(x)_i = \frac{e^{x_i}}{\sum_j e^{x_j}}",
}

LOSS_DEFINITIONS = {
    "mse": r"\mathrm{MSE} = \frac{1}{n} \sum_{i} (y_i - \hat{y}_i)^2",
    "categorical_crossentropy": r"\mathrm{CCE} = -\frac{1}{n} \sum_{i} \sum_{k} y_{ik} \log \hat{y}_{ik}",
}


def eligible(spec: ModelSpec) -> tuple[bool, str]:
    """Math view applies iff the input is a vector and every layer kind is
    representable as a vector equation."""
    if not spec.layers:
        return False, "model has no layers"
    for i, layer in enumerate(spec.layers):
        if layer.kind not in RENDERABLE_KINDS:
            return False, f"layer {i} ({layer.kind}) has no vector equation form"
    try:
        in_shape = input_shape_of(spec.input)
    except Exception:
        return False, "input descriptor is invalid"
    if len(in_shape) != 1:
        return False, f"input {list(in_shape)} is not a vector"
    return True, ""


def format_number(v: float) -> str:
    out = f"{float(v):.{DECIMALS}f}"
    return "0.00000" if out == "-0.00000" else out


def _matrix_rows(arr: np.ndarray) -> list[list[str]]:
    mat = arr if arr.ndim == 2 else arr.reshape(1, -1)
    return [[format_number(v) for v in row] for row in mat]


def _latex_matrix(rows: list[list[str]]) -> str:
    body = r" \\ ".join(" & ".join(row) for row in rows)
    return r"\begin{pmatrix} " + body + r" \end{pmatrix}"


@dataclass
class LayerEquation:
    index: int
    kind: str
    lhs: str  # symbol this layer defines
    rhs_latex: str
    rhs_text: str
    activation: str | None = None
    matrices: dict[str, list[list[str]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "lhs": self.lhs,
            "rhs_latex": self.rhs_latex,
            "rhs_text": self.rhs_text,
            "activation": self.activation,
            "matrices": self.matrices,
        }


@dataclass
class EquationDoc:
    activations: dict[str, str]  # name -> definition (only those used)
    loss_name: str
    loss_definition: str
    layers: list[LayerEquation]

    def to_dict(self) -> dict:
        return {
            "activations": self.activations,
            "loss_name": self.loss_name,
            "loss_definition": self.loss_definition,
            "layers": [e.to_dict() for e in self.layers],
        }

    def latex(self) -> str:
        parts = list(self.activations.values())
        parts.append(self.loss_definition)
        parts.extend(f"{e.lhs} = {e.rhs_latex}" for e in self.layers)
        return "\n".join(parts)


def _symbols(n_layers: int) -> list[str]:
    """Input is x, intermediate vectors h_1.., the final output y."""
    out = []
    for i in range(n_layers):
        out.append("y" if i == n_layers - 1 else f"h_{{{i + 1}}}")
    return out


def render(compiled: CompiledModel) -> EquationDoc:
    ok, reason = eligible(compiled.spec)
    if not ok:
        raise ContractError(f"model has no equation form: {reason}")

    spec = compiled.spec
    used: dict[str, str] = {}
    symbols = _symbols(len(spec.layers))
    equations: list[LayerEquation] = []

    for i, layer in enumerate(spec.layers):
        source = "x" if i == 0 else symbols[i - 1]
        lhs = symbols[i]
        p = layer.params
        act = None
        matrices: dict[str, list[list[str]]] = {}

        if layer.kind == "dense":
            act = p["activation"]["name"]
            used.setdefault(act, ACTIVATION_DEFINITIONS[act])
            w = compiled.weights[i]["kernel"].data
            matrices["W"] = _matrix_rows(w)
            w_latex = _latex_matrix(matrices["W"])
            rhs_core = f"{source} \\times {w_latex}"
            rhs_text = f"{source} x W{i}"
            if "bias" in compiled.weights[i]:
                matrices["b"] = _matrix_rows(compiled.weights[i]["bias"].data)
                rhs_core += " + " + _latex_matrix(matrices["b"])
                rhs_text += f" + b{i}"
            rhs_latex = rf"\mathrm{{{act}}}\left( {rhs_core} \right)"
            rhs_text = f"{act}({rhs_text})"
        elif layer.kind == "activation":
            act = p["activation"]["name"]
            used.setdefault(act, ACTIVATION_DEFINITIONS[act])
            rhs_latex = rf"\mathrm{{{act}}}\left( {source} \right)"
            rhs_text = f"{act}({source})"
        elif layer.kind == "batch_norm":
            g = compiled.weights[i]["gamma"].data
            b = compiled.weights[i]["beta"].data
            matrices["gamma"] = _matrix_rows(g)
            matrices["beta"] = _matrix_rows(b)
            rhs_latex = (
                rf"{_latex_matrix(matrices['gamma'])} \odot "
                rf"\frac{{{source} - \mu}}{{\sqrt{{\sigma^2 + \epsilon}}}} + "
                rf"{_latex_matrix(matrices['beta'])}"
            )
            rhs_text = f"gamma{i} * ({source} - mean) / sqrt(var + eps) + beta{i}"
        elif layer.kind == "dropout":
            rhs_latex = rf"{source} \quad \text{{(dropout, inference pass-through)}}"
            rhs_text = f"{source}  (dropout, inference pass-through)"
        elif layer.kind == "gaussian_noise":
            rhs_latex = rf"{source} \quad \text{{(noise, inference pass-through)}}"
            rhs_text = f"{source}  (noise, inference pass-through)"
        else:  # flatten / reshape on a vector: identity up to shape
            rhs_latex = source
            rhs_text = source
        equations.append(
            LayerEquation(i, layer.kind, lhs, rhs_latex, rhs_text, act, matrices)
        )

    loss = spec.loss
    return EquationDoc(used, loss, LOSS_DEFINITIONS[loss], equations)


# ---------------------------------------------------------------------------
# Weight delta coloring
# ---------------------------------------------------------------------------


def classify_deltas(prev: Tensor, curr: Tensor, eps: float = DELTA_EPSILON):
    """green where curr-prev > eps, red where < -eps, black otherwise.
    Returns a nested list matching the tensor shape."""
    if prev.shape != curr.shape:
        raise ShapeError(
            f"delta shapes differ: {list(prev.shape)} vs {list(curr.shape)}"
        )
    if eps < 0:
        raise ContractError(f"epsilon must be >= 0, got {eps}")
    diff = curr.data.astype(np.float64) - prev.data.astype(np.float64)
    colors = np.where(diff > eps, "green", np.where(diff < -eps, "red", "black"))
    return colors.tolist()


def classify_model_deltas(
    prev: tuple[dict[str, Tensor], ...],
    curr: tuple[dict[str, Tensor], ...],
    eps: float = DELTA_EPSILON,
) -> list[dict[str, list]]:
    """Per-layer, per-slot coloring between two weight snapshots."""
    if len(prev) != len(curr):
        raise ShapeError("snapshots have different layer counts")
    out = []
    for prev_slots, curr_slots in zip(prev, curr):
        if prev_slots.keys() != curr_slots.keys():
            raise ShapeError("snapshots have different weight slots")
        out.append(
            {name: classify_deltas(prev_slots[name], curr_slots[name], eps) for name in prev_slots}
        )
    return out
