"""Editable sequential model: layer specs, shape inference, validation,
mode-aware editing with undo/redo, and output-layer adaptation.

A ModelSpec is plain JSON-shaped data (dicts, lists, scalars) so that
edits, persistence, and structural equality stay exact. Typed activation
and initializer objects are only materialized at compile time.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from .errors import ContractError, EditRejected, ParseError, ShapeError
from .tensor import ACTIVATION_NAMES, INITIALIZER_NAMES, conv_output_size

LAYER_KINDS = (
    "dense",
    "conv2d",
    "max_pool2d",
    "flatten",
    "reshape",
    "dropout",
    "activation",
    "batch_norm",
    "gaussian_noise",
)

GROUP_TAGS = {
    "conv2d": "feature_detection",
    "max_pool2d": "feature_detection",
    "flatten": "dimensionality",
    "reshape": "dimensionality",
    "dense": "classification",
    "activation": "classification",
    "dropout": "regularization",
    "gaussian_noise": "regularization",
    "batch_norm": "regularization",
}

LOSS_NAMES = ("mse", "categorical_crossentropy")


class Mode(str, Enum):
    """Guidance level governing how edits are corrected or flagged."""

    INTRODUCTORY = "introductory"
    BEGINNER = "beginner"
    EXPERT = "expert"


DEFAULT_MODE = Mode.BEGINNER


# ---------------------------------------------------------------------------
# Canonical param values
# ---------------------------------------------------------------------------


def normalize_activation(value) -> Any:
    """Coerce 'relu' / {'name': 'relu'} to the canonical dict form."""
    if isinstance(value, str):
        value = {"name": value}
    if isinstance(value, dict) and "name" in value:
        out = {"name": value["name"]}
        if value["name"] == "elu":
            out["alpha"] = value.get("alpha", 1.0)
        return out
    return value


def normalize_initializer(value) -> Any:
    if isinstance(value, str):
        value = {"name": value}
    if isinstance(value, dict) and "name" in value:
        keep = ("name", "value", "mean", "stddev", "minval", "maxval", "seed")
        return {k: value[k] for k in keep if k in value}
    return value


def normalize_regularizer(value) -> Any:
    if value is None:
        return {"name": "none"}
    if isinstance(value, str):
        value = {"name": value}
    if isinstance(value, dict) and "name" in value:
        out = {"name": value["name"]}
        if value["name"] in ("l1", "l2"):
            out["lambda"] = value.get("lambda", 0.01)
        return out
    return value


# --- per-param schemas: type check + range check + auto-fix target ---------


class _Param:
    def __init__(self, default):
        self.default = default

    def fresh_default(self):
        return copy.deepcopy(self.default)

    def check(self, value) -> str | None:
        raise NotImplementedError

    def fix(self, value):
        """Corrected value used by beginner-mode auto-fixes."""
        return self.fresh_default()

    def normalize(self, value):
        return value


class _Int(_Param):
    def __init__(self, default, min=None, max=None):
        super().__init__(default)
        self.min, self.max = min, max

    def check(self, value):
        if isinstance(value, bool) or not isinstance(value, int):
            return "must be an integer"
        if self.min is not None and value < self.min:
            return f"must be >= {self.min}"
        if self.max is not None and value > self.max:
            return f"must be <= {self.max}"
        return None

    def fix(self, value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return self.fresh_default()
        try:
            value = int(value)
        except (OverflowError, ValueError):
            return self.fresh_default()
        if self.min is not None and value < self.min:
            return self.min
        if self.max is not None and value > self.max:
            return self.max
        return value


class _Float(_Param):
    """Closed bounds clamp; violating an open bound falls back to
    ``open_fallback`` (the midpointed default, e.g. dropout -> 0.5)."""

    def __init__(self, default, min=None, max=None, min_open=False, max_open=False, open_fallback=None):
        super().__init__(default)
        self.min, self.max = min, max
        self.min_open, self.max_open = min_open, max_open
        self.open_fallback = open_fallback if open_fallback is not None else default

    def check(self, value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return "must be a number"
        v = float(value)
        if v != v or v in (float("inf"), float("-inf")):
            return "must be a finite number"
        if self.min is not None and (v <= self.min if self.min_open else v < self.min):
            return f"must be {'>' if self.min_open else '>='} {self.min}"
        if self.max is not None and (v >= self.max if self.max_open else v > self.max):
            return f"must be {'<' if self.max_open else '<='} {self.max}"
        return None

    def fix(self, value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return self.fresh_default()
        v = float(value)
        if v != v or v in (float("inf"), float("-inf")):
            return self.fresh_default()
        if self.min is not None and v < self.min:
            return self.open_fallback if self.min_open else self.min
        if self.min is not None and self.min_open and v <= self.min:
            return self.open_fallback
        if self.max is not None and v > self.max:
            return self.open_fallback if self.max_open else self.max
        if self.max is not None and self.max_open and v >= self.max:
            return self.open_fallback
        return v


class _Bool(_Param):
    def check(self, value):
        return None if isinstance(value, bool) else "must be true or false"


class _Enum(_Param):
    def __init__(self, default, options):
        super().__init__(default)
        self.options = options

    def check(self, value):
        if value not in self.options:
            return f"must be one of {list(self.options)}"
        return None


class _IntPair(_Param):
    def __init__(self, default, min=1):
        super().__init__(default)
        self.min = min

    def check(self, value):
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, int) for v in value)
        ):
            return "must be a pair of integers"
        if any(v < self.min for v in value):
            return f"entries must be >= {self.min}"
        return None

    def fix(self, value):
        if isinstance(value, (list, tuple)) and len(value) == 2:
            fixed = []
            for v in value:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    return self.fresh_default()
                try:
                    fixed.append(max(int(v), self.min))
                except (OverflowError, ValueError):
                    return self.fresh_default()
            return fixed
        return self.fresh_default()

    def normalize(self, value):
        if isinstance(value, tuple):
            return list(value)
        if isinstance(value, int) and not isinstance(value, bool):
            return [value, value]
        return value


class _IntList(_Param):
    def check(self, value):
        if not isinstance(value, (list, tuple)) or len(value) == 0:
            return "must be a non-empty list of integers"
        if any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in value):
            return "entries must be integers >= 1"
        return None

    def normalize(self, value):
        return list(value) if isinstance(value, tuple) else value


class _Activation(_Param):
    def check(self, value):
        value = normalize_activation(value)
        if not isinstance(value, dict) or "name" not in value:
            return "must name an activation"
        if value["name"] not in ACTIVATION_NAMES:
            return f"unknown activation {value['name']!r}"
        if value["name"] == "elu":
            alpha = value.get("alpha", 1.0)
            if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or alpha <= 0:
                return "elu alpha must be > 0"
        return None

    def normalize(self, value):
        return normalize_activation(value)


class _Initializer(_Param):
    def check(self, value):
        value = normalize_initializer(value)
        if not isinstance(value, dict) or "name" not in value:
            return "must name an initializer"
        if value["name"] not in INITIALIZER_NAMES:
            return f"unknown initializer {value['name']!r}"
        if value["name"] == "constant" and "value" not in value:
            return "constant initializer needs a 'value'"
        seed = value.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            return "seed must be a non-negative integer"
        return None

    def normalize(self, value):
        return normalize_initializer(value)


class _Regularizer(_Param):
    def check(self, value):
        value = normalize_regularizer(value)
        if not isinstance(value, dict) or value.get("name") not in ("none", "l1", "l2"):
            return "must be none, l1, or l2"
        if value["name"] in ("l1", "l2"):
            lam = value.get("lambda", 0.0)
            if isinstance(lam, bool) or not isinstance(lam, (int, float)) or lam < 0:
                return "lambda must be >= 0"
        return None

    def normalize(self, value):
        return normalize_regularizer(value)


PARAM_SCHEMAS: dict[str, dict[str, _Param]] = {
    "dense": {
        "units": _Int(8, min=1),
        "activation": _Activation({"name": "linear"}),
        "use_bias": _Bool(True),
        "trainable": _Bool(True),
        "kernel_initializer": _Initializer({"name": "glorot_uniform"}),
        "bias_initializer": _Initializer({"name": "zeros"}),
        "kernel_regularizer": _Regularizer({"name": "none"}),
        "bias_regularizer": _Regularizer({"name": "none"}),
    },
    "conv2d": {
        "filters": _Int(4, min=1),
        "kernel_size": _IntPair([3, 3]),
        "stride": _Int(1, min=1),
        "padding": _Enum("valid", ("valid", "same")),
        "activation": _Activation({"name": "linear"}),
        "trainable": _Bool(True),
    },
    "max_pool2d": {
        "pool_size": _IntPair([2, 2]),
        "stride": _Int(2, min=1),
        "padding": _Enum("valid", ("valid", "same")),
    },
    "flatten": {},
    "reshape": {"target": _IntList([1])},
    "dropout": {"rate": _Float(0.5, min=0.0, max=1.0, max_open=True, open_fallback=0.5)},
    "activation": {"activation": _Activation({"name": "linear"})},
    "batch_norm": {
        "momentum": _Float(0.99, min=0.0, max=1.0, min_open=True, max_open=True),
        "epsilon": _Float(1e-3, min=0.0, min_open=True),
        "trainable": _Bool(True),
    },
    "gaussian_noise": {"stddev": _Float(0.1, min=0.0)},
}

OPTIMIZER_SCHEMAS: dict[str, dict[str, _Param]] = {
    "sgd": {"learning_rate": _Float(0.01, min=0.0, min_open=True)},
    "adam": {
        "learning_rate": _Float(0.01, min=0.0, min_open=True),
        "beta1": _Float(0.9, min=0.0, max=1.0, min_open=True, max_open=True),
        "beta2": _Float(0.999, min=0.0, max=1.0, min_open=True, max_open=True),
        "epsilon": _Float(1e-8, min=0.0, min_open=True),
    },
}


# ---------------------------------------------------------------------------
# Spec data types
# ---------------------------------------------------------------------------


@dataclass
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def group_tag(self) -> str:
        return GROUP_TAGS.get(self.kind, "classification")

    def clone(self) -> "LayerSpec":
        return LayerSpec(self.kind, copy.deepcopy(self.params))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": copy.deepcopy(self.params)}


@dataclass
class ModelSpec:
    input: dict
    layers: list[LayerSpec]
    loss: str = "mse"
    optimizer: dict = field(default_factory=lambda: optimizer_spec("adam"))

    def clone(self) -> "ModelSpec":
        return ModelSpec(
            copy.deepcopy(self.input),
            [l.clone() for l in self.layers],
            self.loss,
            copy.deepcopy(self.optimizer),
        )

    def to_dict(self) -> dict:
        return {
            "input": copy.deepcopy(self.input),
            "layers": [l.to_dict() for l in self.layers],
            "loss": self.loss,
            "optimizer": copy.deepcopy(self.optimizer),
        }


def make_layer(kind: str, **overrides) -> LayerSpec:
    """Build a layer with canonical, fully populated params."""
    if kind not in PARAM_SCHEMAS:
        raise ContractError(f"unknown layer kind {kind!r}; expected one of {list(LAYER_KINDS)}")
    schema = PARAM_SCHEMAS[kind]
    params = {}
    for name, p in schema.items():
        value = overrides.pop(name, None)
        params[name] = p.normalize(value) if value is not None else p.fresh_default()
    if overrides:
        raise ContractError(f"unknown params for {kind}: {sorted(overrides)}")
    return LayerSpec(kind, params)


def dense(units: int = 8, activation="linear", **kw) -> LayerSpec:
    return make_layer("dense", units=units, activation=activation, **kw)


def conv2d_layer(filters: int = 4, kernel_size=(3, 3), **kw) -> LayerSpec:
    return make_layer("conv2d", filters=filters, kernel_size=kernel_size, **kw)


def max_pool2d_layer(pool_size=(2, 2), **kw) -> LayerSpec:
    return make_layer("max_pool2d", pool_size=pool_size, **kw)


def flatten_layer() -> LayerSpec:
    return make_layer("flatten")


def reshape_layer(target) -> LayerSpec:
    return make_layer("reshape", target=target)


def dropout_layer(rate: float = 0.5) -> LayerSpec:
    return make_layer("dropout", rate=rate)


def activation_layer(activation) -> LayerSpec:
    return make_layer("activation", activation=activation)


def batch_norm_layer(**kw) -> LayerSpec:
    return make_layer("batch_norm", **kw)


def gaussian_noise_layer(stddev: float = 0.1) -> LayerSpec:
    return make_layer("gaussian_noise", stddev=stddev)


def image_input(height: int, width: int) -> dict:
    return {"kind": "image", "height": height, "width": width, "channels": 3}


def columns_input(n: int) -> dict:
    return {"kind": "columns", "n": n}


def custom_input(shape: Sequence[int]) -> dict:
    return {"kind": "custom", "shape": [int(s) for s in shape]}


def optimizer_spec(kind: str = "adam", **overrides) -> dict:
    if kind not in OPTIMIZER_SCHEMAS:
        raise ContractError(f"unknown optimizer {kind!r}; expected one of {list(OPTIMIZER_SCHEMAS)}")
    out = {"kind": kind}
    for name, p in OPTIMIZER_SCHEMAS[kind].items():
        out[name] = overrides.pop(name, p.fresh_default())
    if overrides:
        raise ContractError(f"unknown optimizer params: {sorted(overrides)}")
    return out


def input_shape_of(descriptor: dict) -> tuple[int, ...]:
    kind = descriptor.get("kind")
    if kind == "image":
        return (int(descriptor["height"]), int(descriptor["width"]), int(descriptor.get("channels", 3)))
    if kind == "columns":
        return (int(descriptor["n"]),)
    if kind == "custom":
        return tuple(int(s) for s in descriptor["shape"])
    raise ContractError(f"unknown input descriptor kind {kind!r}")


# ---------------------------------------------------------------------------
# Shape inference
# ---------------------------------------------------------------------------


def infer_layer_shape(layer: LayerSpec, shape: tuple[int, ...], index: int) -> tuple[int, ...]:
    kind, p = layer.kind, layer.params
    where = f"layer {index} ({kind})"
    if kind == "dense":
        if len(shape) != 1:
            raise ShapeError(
                f"{where}: dense requires a rank-1 input, got {list(shape)} "
                "(insert a flatten layer first)"
            )
        return (int(p["units"]),)
    if kind == "conv2d":
        if len(shape) != 3:
            raise ShapeError(f"{where}: conv2d requires [h,w,c] input, got {list(shape)}")
        kh, kw = p["kernel_size"]
        stride, padding = int(p["stride"]), p["padding"]
        if padding == "valid" and (kh > shape[0] or kw > shape[1]):
            raise ShapeError(
                f"{where}: kernel [{kh},{kw}] larger than input [{shape[0]},{shape[1]}]"
            )
        return (
            conv_output_size(shape[0], kh, stride, padding),
            conv_output_size(shape[1], kw, stride, padding),
            int(p["filters"]),
        )
    if kind == "max_pool2d":
        if len(shape) != 3:
            raise ShapeError(f"{where}: max_pool2d requires [h,w,c] input, got {list(shape)}")
        ph, pw = p["pool_size"]
        stride, padding = int(p["stride"]), p["padding"]
        if padding == "valid" and (ph > shape[0] or pw > shape[1]):
            raise ShapeError(
                f"{where}: pool [{ph},{pw}] larger than input [{shape[0]},{shape[1]}]"
            )
        return (
            conv_output_size(shape[0], ph, stride, padding),
            conv_output_size(shape[1], pw, stride, padding),
            shape[2],
        )
    if kind == "flatten":
        total = 1
        for s in shape:
            total *= s
        return (total,)
    if kind == "reshape":
        target = tuple(int(s) for s in p["target"])
        total = 1
        for s in shape:
            total *= s
        target_total = 1
        for s in target:
            target_total *= s
        if total != target_total:
            raise ShapeError(
                f"{where}: reshape to {list(target)} does not conserve "
                f"{total} elements of {list(shape)}"
            )
        return target
    if kind in ("dropout", "activation", "batch_norm", "gaussian_noise"):
        return shape
    raise ShapeError(f"{where}: unknown layer kind")


def infer_shapes(spec: ModelSpec) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """(input_shape, output_shape) per layer; raises naming the first
    failing layer."""
    shape = input_shape_of(spec.input)
    out = []
    for i, layer in enumerate(spec.layers):
        next_shape = infer_layer_shape(layer, shape, i)
        out.append((shape, next_shape))
        shape = next_shape
    return out


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class Finding:
    layer_index: int | None  # None = model-level
    field: str
    severity: str  # "error" | "warning"
    message: str
    fix: "EditOp | None" = None

    def to_dict(self) -> dict:
        return {
            "layer_index": self.layer_index,
            "field": self.field,
            "severity": self.severity,
            "message": self.message,
            "fix": self.fix.to_dict() if self.fix else None,
        }


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {"findings": [f.to_dict() for f in self.findings], "ok": self.ok}


def validate(spec: ModelSpec, mode: Mode = DEFAULT_MODE) -> ValidationReport:
    """Range/type/shape checks. Error findings carry an auto-fix EditOp
    whenever one is derivable; beginner flows apply them, expert flows
    only report."""
    findings: list[Finding] = []

    kind = spec.input.get("kind") if isinstance(spec.input, dict) else None
    if kind not in ("image", "columns", "custom"):
        findings.append(Finding(None, "input.kind", "error", f"unknown input kind {kind!r}"))
    else:
        _check_input_fields(spec.input, findings)

    if not spec.layers:
        findings.append(Finding(None, "layers", "error", "model must have at least one layer"))

    for i, layer in enumerate(spec.layers):
        if layer.kind not in PARAM_SCHEMAS:
            findings.append(
                Finding(i, "kind", "error", f"unknown layer kind {layer.kind!r}")
            )
            continue
        schema = PARAM_SCHEMAS[layer.kind]
        for name, p in schema.items():
            if name not in layer.params:
                findings.append(
                    Finding(
                        i, name, "error", "missing parameter",
                        fix=EditOp.set_param(i, name, p.fresh_default()),
                    )
                )
                continue
            msg = p.check(layer.params[name])
            if msg:
                findings.append(
                    Finding(
                        i, name, "error", msg,
                        fix=EditOp.set_param(i, name, p.fix(layer.params[name])),
                    )
                )
        for name in layer.params:
            if name not in schema:
                findings.append(Finding(i, name, "error", f"unknown parameter for {layer.kind}"))

    if spec.loss not in LOSS_NAMES:
        findings.append(
            Finding(None, "loss", "error", f"unknown loss {spec.loss!r}",
                    fix=EditOp.set_loss("mse"))
        )

    _check_optimizer(spec.optimizer, findings)

    # shape pass only when params are individually sound
    if not any(f.severity == "error" for f in findings):
        _check_shapes(spec, findings)

    return ValidationReport(findings)


def _check_input_fields(descriptor: dict, findings: list[Finding]) -> None:
    kind = descriptor["kind"]
    def bad_dim(v):
        return isinstance(v, bool) or not isinstance(v, int) or v < 1

    if kind == "image":
        fixed = dict(descriptor)
        wrong = False
        for key in ("height", "width"):
            if bad_dim(descriptor.get(key)):
                wrong = True
                fixed[key] = max(int(descriptor[key]), 1) if isinstance(descriptor.get(key), (int, float)) and not isinstance(descriptor.get(key), bool) else 16
        if descriptor.get("channels", 3) != 3:
            wrong = True
            fixed["channels"] = 3
        if wrong:
            findings.append(
                Finding(None, "input", "error", "image input needs height/width >= 1 and 3 channels",
                        fix=EditOp.set_input_descriptor(fixed))
            )
    elif kind == "columns":
        if bad_dim(descriptor.get("n")):
            findings.append(
                Finding(None, "input.n", "error", "column count must be an integer >= 1",
                        fix=EditOp.set_input_descriptor(columns_input(1)))
            )
    elif kind == "custom":
        shape = descriptor.get("shape")
        if not isinstance(shape, (list, tuple)) or not shape or any(bad_dim(s) for s in shape):
            findings.append(
                Finding(None, "input.shape", "error", "custom shape entries must be integers >= 1",
                        fix=EditOp.set_input_descriptor(custom_input([1])))
            )


def _check_optimizer(optimizer: dict, findings: list[Finding]) -> None:
    kind = optimizer.get("kind") if isinstance(optimizer, dict) else None
    if kind not in OPTIMIZER_SCHEMAS:
        findings.append(
            Finding(None, "optimizer.kind", "error", f"unknown optimizer {kind!r}",
                    fix=EditOp.set_optimizer(optimizer_spec("adam")))
        )
        return
    schema = OPTIMIZER_SCHEMAS[kind]
    fixed = {"kind": kind}
    wrong = False
    for name, p in schema.items():
        if name not in optimizer:
            wrong = True
            fixed[name] = p.fresh_default()
            findings.append(Finding(None, f"optimizer.{name}", "error", "missing parameter"))
            continue
        msg = p.check(optimizer[name])
        fixed[name] = p.fix(optimizer[name]) if msg else optimizer[name]
        if msg:
            wrong = True
            findings.append(Finding(None, f"optimizer.{name}", "error", msg))
    if wrong:
        # one combined fix so a single edit repairs the optimizer
        for f in findings:
            if f.field.startswith("optimizer.") and f.fix is None:
                f.fix = EditOp.set_optimizer(fixed)


def _check_shapes(spec: ModelSpec, findings: list[Finding]) -> None:
    shape = input_shape_of(spec.input)
    for i, layer in enumerate(spec.layers):
        try:
            shape = infer_layer_shape(layer, shape, i)
        except ShapeError as e:
            fix = None
            if layer.kind == "dense" and len(shape) > 1:
                fix = EditOp.add_layer(i, flatten_layer())
            elif layer.kind == "reshape":
                fix = EditOp.set_param(i, "target", list(shape))
            elif layer.kind == "conv2d":
                kh, kw = layer.params["kernel_size"]
                if len(shape) == 3 and (kh > shape[0] or kw > shape[1]):
                    fix = EditOp.set_param(
                        i, "kernel_size", [min(kh, shape[0]), min(kw, shape[1])]
                    )
            elif layer.kind == "max_pool2d":
                ph, pw = layer.params["pool_size"]
                if len(shape) == 3 and (ph > shape[0] or pw > shape[1]):
                    fix = EditOp.set_param(
                        i, "pool_size", [min(ph, shape[0]), min(pw, shape[1])]
                    )
            findings.append(Finding(i, "shape", "error", str(e), fix=fix))
            return  # downstream shapes unknowable


# ---------------------------------------------------------------------------
# Edits, undo/redo
# ---------------------------------------------------------------------------

EDIT_KINDS = (
    "add_layer",
    "remove_layer",
    "move_layer",
    "set_param",
    "set_input_descriptor",
    "set_loss",
    "set_optimizer",
)


@dataclass
class EditOp:
    kind: str
    payload: dict

    # constructors ---------------------------------------------------------
    @staticmethod
    def add_layer(index: int, layer: LayerSpec) -> "EditOp":
        return EditOp("add_layer", {"index": index, "layer": layer.to_dict()})

    @staticmethod
    def remove_layer(index: int) -> "EditOp":
        return EditOp("remove_layer", {"index": index})

    @staticmethod
    def move_layer(from_index: int, to_index: int) -> "EditOp":
        return EditOp("move_layer", {"from_index": from_index, "to_index": to_index})

    @staticmethod
    def set_param(index: int, name: str, value) -> "EditOp":
        return EditOp("set_param", {"index": index, "name": name, "value": value})

    @staticmethod
    def set_input_descriptor(descriptor: dict) -> "EditOp":
        return EditOp("set_input_descriptor", {"input": descriptor})

    @staticmethod
    def set_loss(loss: str) -> "EditOp":
        return EditOp("set_loss", {"loss": loss})

    @staticmethod
    def set_optimizer(optimizer: dict) -> "EditOp":
        return EditOp("set_optimizer", {"optimizer": optimizer})

    def to_dict(self) -> dict:
        return {"kind": self.kind, "payload": copy.deepcopy(self.payload)}

    @staticmethod
    def from_dict(d: dict) -> "EditOp":
        if not isinstance(d, dict) or d.get("kind") not in EDIT_KINDS:
            raise ParseError(f"unknown edit kind {d.get('kind') if isinstance(d, dict) else d!r}")
        payload = d.get("payload")
        if not isinstance(payload, dict):
            raise ParseError("edit payload must be an object")
        return EditOp(d["kind"], copy.deepcopy(payload))


def raw_apply(spec: ModelSpec, op: EditOp) -> tuple[ModelSpec, EditOp]:
    """Apply one structurally well-formed op; returns (new spec, inverse)."""
    new = spec.clone()
    k, p = op.kind, op.payload
    if k == "add_layer":
        idx = _index(p.get("index"), len(new.layers), insert=True)
        layer_d = p.get("layer")
        if not isinstance(layer_d, dict) or "kind" not in layer_d:
            raise ContractError("add_layer payload needs a layer {kind, params}")
        new.layers.insert(
            idx, LayerSpec(layer_d["kind"], copy.deepcopy(layer_d.get("params", {})))
        )
        return new, EditOp.remove_layer(idx)
    if k == "remove_layer":
        idx = _index(p.get("index"), len(new.layers))
        removed = new.layers.pop(idx)
        return new, EditOp.add_layer(idx, removed)
    if k == "move_layer":
        src = _index(p.get("from_index"), len(new.layers))
        dst = _index(p.get("to_index"), len(new.layers))
        layer = new.layers.pop(src)
        new.layers.insert(dst, layer)
        return new, EditOp.move_layer(dst, src)
    if k == "set_param":
        idx = _index(p.get("index"), len(new.layers))
        name = p.get("name")
        if not isinstance(name, str):
            raise ContractError("set_param payload needs a param name")
        layer = new.layers[idx]
        if name not in layer.params:
            schema = PARAM_SCHEMAS.get(layer.kind, {})
            if name not in schema:
                raise ContractError(f"layer {idx} ({layer.kind}) has no parameter {name!r}")
        old = copy.deepcopy(layer.params.get(name))
        schema = PARAM_SCHEMAS.get(layer.kind, {})
        value = p.get("value")
        if name in schema:
            value = schema[name].normalize(value)
        layer.params[name] = copy.deepcopy(value)
        return new, EditOp.set_param(idx, name, old)
    if k == "set_input_descriptor":
        if not isinstance(p.get("input"), dict):
            raise ContractError("set_input_descriptor payload needs an input object")
        old = copy.deepcopy(new.input)
        new.input = copy.deepcopy(p["input"])
        return new, EditOp.set_input_descriptor(old)
    if k == "set_loss":
        old = new.loss
        if not isinstance(p.get("loss"), str):
            raise ContractError("set_loss payload needs a loss name")
        new.loss = p["loss"]
        return new, EditOp.set_loss(old)
    if k == "set_optimizer":
        if not isinstance(p.get("optimizer"), dict):
            raise ContractError("set_optimizer payload needs an optimizer object")
        old = copy.deepcopy(new.optimizer)
        new.optimizer = copy.deepcopy(p["optimizer"])
        return new, EditOp.set_optimizer(old)
    raise ContractError(f"unknown edit kind {k!r}")


def _index(value, length: int, insert: bool = False) -> int:
    hi = length if insert else length - 1
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= hi:
        raise ContractError(f"layer index {value!r} out of range [0, {hi}]")
    return value


@dataclass
class AppliedEdit:
    spec: ModelSpec
    applied: list[EditOp]  # main op plus any beginner auto-fixes
    report: ValidationReport


MAX_AUTOFIX_ROUNDS = 16


def apply_edit(
    spec: ModelSpec,
    edit: EditOp,
    mode: Mode = DEFAULT_MODE,
    history: "EditHistory | None" = None,
) -> AppliedEdit:
    """Pure edit application. Beginner mode chases auto-fixes until the
    model validates (or rejects the edit); expert mode applies verbatim.
    Removing the last remaining layer is rejected in every mode."""
    if edit.kind == "remove_layer" and len(spec.layers) <= 1:
        report = ValidationReport(
            [Finding(None, "layers", "error", "model must have at least one layer")]
        )
        raise EditRejected("cannot remove the only layer", report)

    new_spec, inverse = raw_apply(spec, edit)
    group = [(edit, inverse)]

    if mode == Mode.EXPERT:
        report = validate(new_spec, mode)
    else:
        report = validate(new_spec, mode)
        rounds = 0
        while not report.ok and rounds < MAX_AUTOFIX_ROUNDS:
            fixable = next((f for f in report.errors if f.fix is not None), None)
            if fixable is None:
                raise EditRejected(
                    "edit would leave the model invalid: "
                    + "; ".join(f.message for f in report.errors),
                    report,
                )
            new_spec, inv = raw_apply(new_spec, fixable.fix)
            group.append((fixable.fix, inv))
            report = validate(new_spec, mode)
            rounds += 1
        if not report.ok:
            raise EditRejected("edit could not be auto-corrected", report)

    if history is not None:
        history.record(group)
    return AppliedEdit(new_spec, [op for op, _ in group], report)


class EditHistory:
    """Undo/redo log of applied edit groups (a user edit + its fixes)."""

    def __init__(self):
        self._undo: list[list[tuple[EditOp, EditOp]]] = []
        self._redo: list[list[tuple[EditOp, EditOp]]] = []

    def record(self, group: list[tuple[EditOp, EditOp]]) -> None:
        self._undo.append(group)
        self._redo.clear()

    @property
    def can_undo(self) -> bool:
        return bool(self._undo)

    @property
    def can_redo(self) -> bool:
        return bool(self._redo)

    def undo(self, spec: ModelSpec) -> ModelSpec:
        if not self._undo:
            raise ContractError("nothing to undo")
        group = self._undo.pop()
        for _, inverse in reversed(group):
            spec, _ = raw_apply(spec, inverse)
        self._redo.append(group)
        return spec

    def redo(self, spec: ModelSpec) -> ModelSpec:
        if not self._redo:
            raise ContractError("nothing to redo")
        group = self._redo.pop()
        for op, _ in group:
            spec, _ = raw_apply(spec, op)
        self._undo.append(group)
        return spec


# ---------------------------------------------------------------------------
# Output-layer adaptation
# ---------------------------------------------------------------------------


def adapt_output_layer(spec: ModelSpec, dataset, mode: Mode = DEFAULT_MODE) -> ModelSpec:
    """Match the final layer to the dataset: category count + softmax +
    crossentropy for labeled data, target column count + linear + mse
    otherwise. Appends a dense layer in beginner mode when the model
    does not end in one."""
    if dataset.Y.rank < 2:
        raise ContractError("dataset targets must be [n, k] shaped")
    k = dataset.Y.shape[1]
    categorical = bool(getattr(dataset, "category_labels", None)) or _rows_one_hot(dataset.Y)

    new = spec.clone()
    if not new.layers or new.layers[-1].kind != "dense":
        if mode == Mode.EXPERT:
            raise ContractError(
                "the last layer is not dense; append a dense output layer to adapt"
            )
        new.layers.append(dense(units=k))
    last = new.layers[-1]
    last.params["units"] = k
    if categorical:
        last.params["activation"] = {"name": "softmax"}
        new.loss = "categorical_crossentropy"
    else:
        last.params["activation"] = {"name": "linear"}
        new.loss = "mse"
    return new


def _rows_one_hot(y) -> bool:
    data = y.data
    if data.ndim != 2:
        return False
    if not np.all((data == 0) | (data == 1)):
        return False
    return bool(np.all(data.sum(axis=1) == 1))


def default_spec() -> ModelSpec:
    """The starter network new sessions open with: two numeric inputs
    through 8-relu / 4-relu hidden layers to one sigmoid output."""
    return ModelSpec(
        input=columns_input(2),
        layers=[
            dense(8, activation="relu"),
            dense(4, activation="relu"),
            dense(1, activation="sigmoid"),
        ],
        loss="mse",
        optimizer=optimizer_spec("adam", learning_rate=0.01),
    )
