"""Compilation of a ModelSpec into runnable weights, the forward pass
over autodiff nodes, weight-retaining recompilation, and the JSON model
file (save/load, bit-exact weight round-trip)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ParseError
from .model import (
    LOSS_NAMES,
    OPTIMIZER_SCHEMAS,
    PARAM_SCHEMAS,
    LayerSpec,
    Mode,
    ModelSpec,
    infer_shapes,
    validate,
)
from .tensor import ActivationKind, InitializerKind, Tensor, initialize

FORMAT_VERSION = 1

# moving batch-norm statistics are state, not trainable parameters
NON_TRAINABLE_SLOTS = ("moving_mean", "moving_variance")


def derived_seed(model_seed: int, layer_index: int, slot: int) -> int:
    """Per-weight seed when the initializer carries none. Mixing constants
    are arbitrary but frozen: changing them changes every saved model."""
    return (model_seed * 2_654_435_761 + layer_index * 9_176 + slot * 131 + 7) % (2**31)


def weight_slots(layer: LayerSpec, in_shape: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every weight array the layer owns."""
    p = layer.params
    if layer.kind == "dense":
        slots = {"kernel": (in_shape[0], int(p["units"]))}
        if p.get("use_bias", True):
            slots["bias"] = (int(p["units"]),)
        return slots
    if layer.kind == "conv2d":
        kh, kw = p["kernel_size"]
        return {
            "kernel": (int(kh), int(kw), in_shape[2], int(p["filters"])),
            "bias": (int(p["filters"]),),
        }
    if layer.kind == "batch_norm":
        c = (in_shape[-1],)
        return {"gamma": c, "beta": c, "moving_mean": c, "moving_variance": c}
    return {}


def _initializer_for(layer: LayerSpec, name: str) -> dict:
    if layer.kind == "dense":
        key = "kernel_initializer" if name == "kernel" else "bias_initializer"
        return dict(layer.params[key])
    if layer.kind == "conv2d":
        return {"name": "glorot_uniform"} if name == "kernel" else {"name": "zeros"}
    # batch_norm state
    if name in ("gamma", "moving_variance"):
        return {"name": "ones"}
    return {"name": "zeros"}


def _init_layer_weights(
    layer: LayerSpec, in_shape: tuple[int, ...], layer_index: int, model_seed: int
) -> dict[str, Tensor]:
    out = {}
    for slot, (name, shape) in enumerate(weight_slots(layer, in_shape).items()):
        init = _initializer_for(layer, name)
        seed = init.pop("seed", None)
        if seed is None:
            seed = derived_seed(model_seed, layer_index, slot)
        kind = InitializerKind(init.pop("name"), params=init, seed=seed)
        out[name] = initialize(kind, shape)
    return out


@dataclass(frozen=True)
class CompiledModel:
    """Spec + inferred shapes + instantiated weights. Immutable: training
    steps produce a new instance sharing unchanged tensors."""

    spec: ModelSpec
    seed: int
    shapes: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    weights: tuple[dict[str, Tensor], ...]

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.shapes[0][0] if self.shapes else ()

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1][1] if self.shapes else ()

    def with_weights(self, weights) -> "CompiledModel":
        return CompiledModel(self.spec, self.seed, self.shapes, tuple(weights))

    def trainable_mask(self) -> list[dict[str, bool]]:
        out = []
        for layer, slots in zip(self.spec.layers, self.weights):
            trainable = bool(layer.params.get("trainable", True))
            out.append(
                {name: trainable and name not in NON_TRAINABLE_SLOTS for name in slots}
            )
        return out


def compile_model(spec: ModelSpec, seed: int = 0) -> CompiledModel:
    report = validate(spec, Mode.EXPERT)
    if not report.ok:
        first = report.errors[0]
        raise ConfigError(f"cannot compile an invalid model: {first.message}")
    shapes = infer_shapes(spec)
    weights = tuple(
        _init_layer_weights(layer, shapes[i][0], i, seed)
        for i, layer in enumerate(spec.layers)
    )
    return CompiledModel(spec.clone(), seed, tuple(shapes), weights)


def recompile(old: CompiledModel, new_spec: ModelSpec, seed: int | None = None) -> CompiledModel:
    """Rebuild for an edited spec. A layer at the same position with the
    same kind and the same weight shapes keeps its weight tensors
    bit-exact; everything else is freshly initialized."""
    fresh = compile_model(new_spec, old.seed if seed is None else seed)
    carried = []
    for i, layer in enumerate(fresh.spec.layers):
        if i < len(old.spec.layers) and old.spec.layers[i].kind == layer.kind:
            old_shapes = {n: t.shape for n, t in old.weights[i].items()}
            new_shapes = {n: t.shape for n, t in fresh.weights[i].items()}
            if old_shapes == new_shapes:
                carried.append(old.weights[i])
                continue
        carried.append(fresh.weights[i])
    return fresh.with_weights(carried)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


@dataclass
class ForwardPass:
    output: ad.Node
    pre: list[ad.Node]  # pre-activation per layer (== post when none applies)
    post: list[ad.Node]
    weight_nodes: list[dict[str, ad.Node]]
    bn_batch_stats: list[dict | None]
    reg_penalty: ad.Node | None


def _as_batch(x, in_shape: tuple[int, ...]) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    if arr.shape == tuple(in_shape):
        arr = arr[None, ...]
    if arr.shape[1:] != tuple(in_shape):
        raise ConfigError(
            f"input shape {list(arr.shape[1:])} does not match the model input "
            f"{list(in_shape)}"
        )
    return arr


def build_forward(
    compiled: CompiledModel,
    x,
    training: bool = False,
    rng: np.random.Generator | None = None,
    start: int = 0,
) -> ForwardPass:
    """Run layers [start:] over autodiff nodes. ``x`` may be raw data
    (batched or a single sample) or an existing Node to differentiate
    through, shaped [n, *input_shape_of(start)]."""
    if isinstance(x, ad.Node):
        node = x
    else:
        in_shape = compiled.shapes[start][0] if compiled.shapes else ()
        node = ad.leaf(_as_batch(x, in_shape), name="input")
    if training and rng is None:
        rng = np.random.default_rng(compiled.seed)

    pre: list[ad.Node] = []
    post: list[ad.Node] = []
    weight_nodes: list[dict[str, ad.Node]] = []
    bn_stats: list[dict | None] = []
    penalty: ad.Node | None = None

    for i in range(start, len(compiled.spec.layers)):
        layer = compiled.spec.layers[i]
        slots = compiled.weights[i]
        nodes = {name: ad.leaf(t, name=f"{layer.kind}{i}.{name}") for name, t in slots.items()}
        weight_nodes.append(nodes)
        stats = None
        p = layer.params

        if layer.kind == "dense":
            h = ad.matmul(node, nodes["kernel"])
            if "bias" in nodes:
                h = ad.add(h, nodes["bias"])
            head = h
            node = ad.activation(_act(p["activation"]), h)
            penalty = _add_penalty(penalty, nodes["kernel"], p.get("kernel_regularizer"))
            if "bias" in nodes:
                penalty = _add_penalty(penalty, nodes["bias"], p.get("bias_regularizer"))
        elif layer.kind == "conv2d":
            h = ad.conv2d(node, nodes["kernel"], int(p["stride"]), p["padding"])
            h = ad.add(h, nodes["bias"])
            head = h
            node = ad.activation(_act(p["activation"]), h)
        elif layer.kind == "max_pool2d":
            node = ad.max_pool2d(node, tuple(p["pool_size"]), int(p["stride"]), p["padding"])
            head = node
        elif layer.kind == "flatten":
            n = node.shape[0]
            size = int(np.prod(node.shape[1:], dtype=np.int64)) if len(node.shape) > 1 else 1
            node = ad.reshape(node, (n, size))
            head = node
        elif layer.kind == "reshape":
            node = ad.reshape(node, (node.shape[0], *[int(s) for s in p["target"]]))
            head = node
        elif layer.kind == "dropout":
            node = ad.dropout(node, float(p["rate"]), rng) if training else node
            head = node
        elif layer.kind == "activation":
            head = node
            node = ad.activation(_act(p["activation"]), node)
        elif layer.kind == "gaussian_noise":
            node = ad.gaussian_noise(node, float(p["stddev"]), rng) if training else node
            head = node
        elif layer.kind == "batch_norm":
            eps = float(p["epsilon"])
            if training:
                node, mu, var = ad.batch_norm_train(node, nodes["gamma"], nodes["beta"], eps)
                stats = {"mean": mu, "variance": var}
            else:
                node = ad.batch_norm_infer(
                    node,
                    nodes["gamma"],
                    nodes["beta"],
                    slots["moving_mean"].data,
                    slots["moving_variance"].data,
                    eps,
                )
            head = node
        else:
            raise ConfigError(f"unknown layer kind {layer.kind!r}")

        pre.append(head)
        post.append(node)
        bn_stats.append(stats)

    return ForwardPass(node, pre, post, weight_nodes, bn_stats, penalty)


def _act(value: dict) -> ActivationKind:
    return ActivationKind(value["name"], float(value.get("alpha", 1.0)))


def _add_penalty(acc, w: ad.Node, reg) -> ad.Node | None:
    if not reg or reg.get("name") in (None, "none"):
        return acc
    lam = float(reg.get("lambda", 0.0))
    if lam == 0.0:
        return acc
    term = ad.l1_penalty(w, lam) if reg["name"] == "l1" else ad.l2_penalty(w, lam)
    return term if acc is None else ad.add(acc, term)


# ---------------------------------------------------------------------------
# Model file (UTF-8 JSON, format_version 1)
# ---------------------------------------------------------------------------


def spec_from_dict(d, path: str = "model") -> ModelSpec:
    """Parse the architecture portion, raising ParseError with the JSON
    path of the first violation."""
    if not isinstance(d, dict):
        raise ParseError("model must be a JSON object", path=path)
    for key in ("input", "layers"):
        if key not in d:
            raise ParseError(f"missing key {key!r}", path=path)
    if not isinstance(d["input"], dict) or "kind" not in d["input"]:
        raise ParseError("input descriptor must be an object with a 'kind'", path=f"{path}.input")
    if not isinstance(d["layers"], list):
        raise ParseError("layers must be an array", path=f"{path}.layers")
    layers = []
    for i, entry in enumerate(d["layers"]):
        lpath = f"{path}.layers[{i}]"
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ParseError("layer must be an object with a 'kind'", path=lpath)
        kind = entry["kind"]
        if kind not in PARAM_SCHEMAS:
            raise ParseError(f"unknown layer kind {kind!r}", path=f"{lpath}.kind")
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise ParseError("params must be an object", path=f"{lpath}.params")
        full = {}
        schema = PARAM_SCHEMAS[kind]
        for name, p in schema.items():
            full[name] = p.normalize(params[name]) if name in params else p.fresh_default()
        for name in params:
            if name not in schema:
                raise ParseError(
                    f"unknown parameter {name!r} for {kind}", path=f"{lpath}.params.{name}"
                )
        layers.append(LayerSpec(kind, full))
    loss = d.get("loss", "mse")
    if loss not in LOSS_NAMES:
        raise ParseError(f"unknown loss {loss!r}", path=f"{path}.loss")
    optimizer = d.get("optimizer")
    if optimizer is None:
        optimizer = {"kind": "adam"}
    if not isinstance(optimizer, dict) or optimizer.get("kind") not in OPTIMIZER_SCHEMAS:
        raise ParseError("unknown optimizer", path=f"{path}.optimizer")
    full_opt = {"kind": optimizer["kind"]}
    for name, p in OPTIMIZER_SCHEMAS[optimizer["kind"]].items():
        full_opt[name] = optimizer.get(name, p.fresh_default())
    return ModelSpec(dict(d["input"]), layers, loss, full_opt)


def save_model(compiled: CompiledModel) -> bytes:
    """Architecture + weights as one JSON document. Weight values are
    float32 widened to JSON numbers, which round-trips bit-exact."""
    doc = compiled.spec.to_dict()
    doc = {"format_version": FORMAT_VERSION, **doc}
    doc["weights"] = [
        [
            {
                "name": name,
                "shape": list(t.shape),
                "values": t.data.ravel(order="C").tolist(),
            }
            for name, t in slots.items()
        ]
        for slots in compiled.weights
    ]
    return json.dumps(doc, indent=1).encode("utf-8")


def load_model(data: bytes | str) -> tuple[ModelSpec, list[dict[str, Tensor]]]:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError("model file is not UTF-8", position=e.start) from e
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", position=e.pos) from e
    if not isinstance(doc, dict):
        raise ParseError("model file must hold a JSON object", path="model")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version!r}", path="model.format_version")
    spec = spec_from_dict(doc)
    raw = doc.get("weights")
    if not isinstance(raw, list) or len(raw) != len(spec.layers):
        raise ParseError("weights must list one entry per layer", path="model.weights")

    shapes = infer_shapes(spec)
    weights: list[dict[str, Tensor]] = []
    for i, entries in enumerate(raw):
        wpath = f"model.weights[{i}]"
        if not isinstance(entries, list):
            raise ParseError("layer weights must be an array", path=wpath)
        expected = weight_slots(spec.layers[i], shapes[i][0])
        slots: dict[str, Tensor] = {}
        for j, entry in enumerate(entries):
            epath = f"{wpath}[{j}]"
            if not isinstance(entry, dict) or not {"name", "shape", "values"} <= entry.keys():
                raise ParseError("weight entry needs name/shape/values", path=epath)
            name, shape, values = entry["name"], entry["shape"], entry["values"]
            if name not in expected:
                raise ParseError(
                    f"unexpected weight {name!r} for {spec.layers[i].kind}", path=f"{epath}.name"
                )
            if tuple(shape) != expected[name]:
                raise ParseError(
                    f"weight {name!r} shape {shape} does not match expected "
                    f"{list(expected[name])}",
                    path=f"{epath}.shape",
                )
            size = int(np.prod(expected[name], dtype=np.int64)) if expected[name] else 1
            if not isinstance(values, list) or len(values) != size:
                raise ParseError(
                    f"weight {name!r} needs {size} values", path=f"{epath}.values"
                )
            arr = np.asarray(values, dtype=np.float64).astype(np.float32)
            slots[name] = Tensor._wrap(np.ascontiguousarray(arr.reshape(expected[name])))
        missing = sorted(set(expected) - set(slots))
        if missing:
            raise ParseError(f"missing weights {missing}", path=wpath)
        weights.append(slots)
    return spec, weights


def load_compiled(data: bytes | str, seed: int = 0) -> CompiledModel:
    spec, weights = load_model(data)
    return compile_model(spec, seed).with_weights(weights)
