"""Deterministic Python script generation and bundle export.

The script targets the tf.keras Sequential API and is assembled from
plain strings with an explicit indentation model; weights travel in the
model file next to the script, not as source literals.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass

from .compiled import CompiledModel, save_model
from .data_import import Dataset, save_dataset, serialize_csv
from .errors import ContractError, UnsupportedConstructError
from .model import LOSS_NAMES, Mode, ModelSpec, input_shape_of, validate
from .training import TrainConfig

TF_REQUIREMENT = "tensorflow>=2.13,<3"

_LOSS_NAMES = {
    "mse": "mean_squared_error",
    "categorical_crossentropy": "categorical_crossentropy",
}


@dataclass(frozen=True)
class GeneratedProgram:
    source: str
    instructions: str
    manifest: tuple  # (layer index, construct name) per layer, in order


class _Writer:
    """Line assembler with an explicit indentation level."""

    def __init__(self):
        self.lines = []
        self.level = 0

    def line(self, text: str = ""):
        self.lines.append(" " * 4 * self.level + text if text else "")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _py_number(value) -> str:
    if isinstance(value, bool):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _py_tuple(values) -> str:
    inner = ", ".join(str(int(v)) for v in values)
    return f"({inner},)" if len(values) == 1 else f"({inner})"


def _activation_arg(act: dict) -> str | None:
    name = act["name"]
    if name == "linear":
        return None
    if name == "elu" and float(act.get("alpha", 1.0)) != 1.0:
        alpha = _py_number(act["alpha"])
        return f"(lambda x: tf.keras.activations.elu(x, alpha={alpha}))"
    return repr(name)


def _regularizer_arg(reg: dict) -> str | None:
    if reg["name"] == "none":
        return None
    cls = {"l1": "L1", "l2": "L2"}[reg["name"]]
    return f"tf.keras.regularizers.{cls}({_py_number(reg['lambda'])})"


def _layer_construct(layer) -> tuple[str, str]:
    """(construct name, full constructor expression) for one layer."""
    kind, p = layer.kind, layer.params
    args = []

    def kwarg(name, value):
        if value is not None:
            args.append(f"{name}={value}")

    if kind == "dense":
        cls = "Dense"
        args.append(str(p["units"]))
        kwarg("activation", _activation_arg(p["activation"]))
        if not p["use_bias"]:
            args.append("use_bias=False")
        kwarg("kernel_regularizer", _regularizer_arg(p["kernel_regularizer"]))
        kwarg("bias_regularizer", _regularizer_arg(p["bias_regularizer"]))
        if not p["trainable"]:
            args.append("trainable=False")
    elif kind == "conv2d":
        cls = "Conv2D"
        args.append(str(p["filters"]))
        args.append(f"kernel_size={_py_tuple(p['kernel_size'])}")
        args.append(f"strides=({p['stride']}, {p['stride']})")
        args.append(f"padding={p['padding']!r}")
        kwarg("activation", _activation_arg(p["activation"]))
        if not p["trainable"]:
            args.append("trainable=False")
    elif kind == "max_pool2d":
        cls = "MaxPooling2D"
        args.append(f"pool_size={_py_tuple(p['pool_size'])}")
        args.append(f"strides=({p['stride']}, {p['stride']})")
        args.append(f"padding={p['padding']!r}")
    elif kind == "flatten":
        cls = "Flatten"
    elif kind == "reshape":
        cls = "Reshape"
        args.append(_py_tuple(p["target"]))
    elif kind == "dropout":
        cls = "Dropout"
        args.append(_py_number(p["rate"]))
    elif kind == "activation":
        cls = "Activation"
        arg = _activation_arg(p["activation"])
        args.append(arg if arg is not None else "'linear'")
    elif kind == "batch_norm":
        cls = "BatchNormalization"
        args.append(f"momentum={_py_number(p['momentum'])}")
        args.append(f"epsilon={_py_number(p['epsilon'])}")
        if not p["trainable"]:
            args.append("trainable=False")
    elif kind == "gaussian_noise":
        cls = "GaussianNoise"
        args.append(_py_number(p["stddev"]))
    else:
        raise UnsupportedConstructError(
            f"no generated construct for layer kind {kind!r}"
        )
    name = f"tf.keras.layers.{cls}"
    return name, f"{name}({', '.join(args)})"


def _optimizer_expr(opt: dict) -> str:
    kind = opt["kind"]
    lr = _py_number(opt["learning_rate"])
    if kind == "sgd":
        return f"tf.keras.optimizers.SGD(learning_rate={lr})"
    if kind == "adam":
        return (
            f"tf.keras.optimizers.Adam(learning_rate={lr}, "
            f"beta_1={_py_number(opt['beta1'])}, "
            f"beta_2={_py_number(opt['beta2'])}, "
            f"epsilon={_py_number(opt['epsilon'])})"
        )
    raise UnsupportedConstructError(f"no generated construct for optimizer {kind!r}")


def generate_python(spec: ModelSpec, config: TrainConfig) -> GeneratedProgram:
    """Standalone tf.keras script for the model; pure string assembly."""
    report = validate(spec, mode=Mode.EXPERT)
    if not report.ok:
        raise ContractError(
            f"cannot generate code for an invalid model: {report.errors[0].message}"
        )
    if spec.loss not in _LOSS_NAMES:
        raise UnsupportedConstructError(
            f"no generated loss for {spec.loss!r}; expected one of {list(LOSS_NAMES)}"
        )

    manifest = []
    constructs = []
    for i, layer in enumerate(spec.layers):
        name, expr = _layer_construct(layer)
        manifest.append((i, name))
        constructs.append(expr)

    in_shape = input_shape_of(spec.input)
    classification = spec.loss == "categorical_crossentropy"

    w = _Writer()
    w.line("#!/usr/bin/env python3")
    w.line('"""Train or run the exported neural network.')
    w.line()
    w.line("The network architecture below was written out by the workbench;")
    w.line("weights live in the model file next to this script. See README.txt")
    w.line('for environment setup.')
    w.line('"""')
    w.line()
    w.line("import argparse")
    w.line("import json")
    w.line("import pathlib")
    w.line()
    w.line("import numpy as np")
    w.line("import tensorflow as tf")
    w.line()
    w.line(f"INPUT_SHAPE = {_py_tuple(in_shape)}")
    w.line(f"LOSS = {_LOSS_NAMES[spec.loss]!r}")
    w.line()
    w.line()
    w.line("def build_model():")
    w.level += 1
    w.line("model = tf.keras.Sequential()")
    for expr in constructs:
        w.line(f"model.add({expr})")
    w.line("model.build(input_shape=(None,) + INPUT_SHAPE)")
    metrics = ", metrics=['accuracy']" if classification else ""
    w.line(f"model.compile(loss=LOSS, optimizer={_optimizer_expr(spec.optimizer)}{metrics})")
    w.line("return model")
    w.level -= 1
    w.line()
    w.line()
    w.line("def load_weights(model, path):")
    w.level += 1
    w.line('"""Copy weights from the workbench model file into the layers."""')
    w.line("doc = json.loads(pathlib.Path(path).read_text(encoding='utf-8'))")
    w.line("for layer, saved in zip(model.layers, doc['layers']):")
    w.level += 1
    w.line("weights = saved.get('weights', [])")
    w.line("if weights:")
    w.level += 1
    w.line("layer.set_weights([")
    w.level += 1
    w.line("np.asarray(entry['values'], dtype=np.float32).reshape(entry['shape'])")
    w.line("for entry in weights")
    w.level -= 1
    w.line("])")
    w.level -= 3
    w.line()
    w.line()
    w.line("def load_data(path):")
    w.level += 1
    w.line('"""Load training data as (x, y) arrays.')
    w.line()
    w.line("The default reader understands the dataset.json layout exported")
    w.line("next to this script. To train on your own local data, replace the")
    w.line("body of this function with anything that returns two numpy arrays:")
    w.line(f"x shaped [n, {', '.join(str(d) for d in in_shape)}] and y shaped [n, outputs].")
    w.line('"""')
    w.line("doc = json.loads(pathlib.Path(path).read_text(encoding='utf-8'))")
    w.line("x = np.asarray(doc['x'], dtype=np.float32).reshape(doc['x_shape'])")
    w.line("y = np.asarray(doc['y'], dtype=np.float32).reshape(doc['y_shape'])")
    w.line("return x, y")
    w.level -= 1
    w.line()
    w.line()
    w.line("def main():")
    w.level += 1
    w.line("parser = argparse.ArgumentParser(description=__doc__)")
    w.line("parser.add_argument('--weights', default='model.json',")
    w.line("                    help='workbench model file holding the weights')")
    w.line("parser.add_argument('--data', default='dataset.json',")
    w.line("                    help='dataset file; see load_data for the layout')")
    w.line("parser.add_argument('--train', action='store_true',")
    w.line("                    help='fit on the dataset before predicting')")
    w.line(f"parser.add_argument('--epochs', type=int, default={config.epochs})")
    w.line(f"parser.add_argument('--batch-size', type=int, default={config.batch_size})")
    w.line("parser.add_argument('--predict', default=None,")
    w.line("                    help='JSON array to run through the model')")
    w.line("args = parser.parse_args()")
    w.line()
    w.line("model = build_model()")
    w.line("weights = pathlib.Path(args.weights)")
    w.line("if weights.exists():")
    w.level += 1
    w.line("load_weights(model, weights)")
    w.level -= 1
    w.line()
    w.line("if args.train:")
    w.level += 1
    w.line("x, y = load_data(args.data)")
    shuffle = "True" if config.shuffle else "False"
    w.line(f"model.fit(x, y, epochs=args.epochs, batch_size=args.batch_size, shuffle={shuffle})")
    w.line("model.save_weights('trained.weights.h5')")
    w.level -= 1
    w.line()
    w.line("if args.predict is not None:")
    w.level += 1
    w.line("x = np.asarray(json.loads(args.predict), dtype=np.float32)")
    w.line("print(json.dumps(model.predict(x, verbose=0).tolist()))")
    w.level -= 1
    w.line("elif not args.train:")
    w.level += 1
    w.line("x, y = load_data(args.data)")
    w.line("scores = model.evaluate(x, y, verbose=0)")
    w.line("loss = scores[0] if isinstance(scores, list) else scores")
    w.line("print(json.dumps({'loss': float(loss)}))")
    w.level -= 2
    w.line()
    w.line()
    w.line("if __name__ == '__main__':")
    w.level += 1
    w.line("main()")
    w.level -= 1

    instructions = _instructions(config)
    return GeneratedProgram(w.text(), instructions, tuple(manifest))


def _instructions(config: TrainConfig) -> str:
    return (
        "Running the exported model\n"
        "==========================\n"
        "\n"
        "1. Create a virtual environment:   python3 -m venv .venv\n"
        "2. Activate it:                    source .venv/bin/activate\n"
        f"3. Install dependencies:           pip install '{TF_REQUIREMENT}' numpy\n"
        "4. Run the script:                 python train.py --help\n"
        "\n"
        f"The script targets the tf.keras Sequential API ({TF_REQUIREMENT}).\n"
        "\n"
        "Common invocations:\n"
        "  python train.py                          evaluate on the bundled dataset\n"
        '  python train.py --predict "[[0, 1]]"     run one input through the model\n'
        f"  python train.py --train --epochs {config.epochs}       retrain from the saved weights\n"
        "\n"
        "To apply the model to your own data, edit load_data() in train.py;\n"
        "its docstring states the array shapes the model expects.\n"
    )


# ---------------------------------------------------------------------------
# Bundle export
# ---------------------------------------------------------------------------

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def export_bundle(
    spec: ModelSpec,
    compiled: CompiledModel,
    dataset: Dataset | None = None,
    config: TrainConfig | None = None,
) -> bytes:
    """ZIP with model.json, train.py, README.txt, and the dataset when
    given; fixed entry metadata so identical inputs give identical bytes."""
    program = generate_python(spec, config or TrainConfig())
    entries = {
        "README.txt": program.instructions.encode("utf-8"),
        "model.json": save_model(compiled),
        "train.py": program.source.encode("utf-8"),
    }
    if dataset is not None:
        entries["dataset.json"] = save_dataset(dataset)
        if dataset.X.rank == 2 and dataset.Y.rank == 2:
            entries["dataset.csv"] = serialize_csv(dataset).encode("utf-8")

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, entries[name])
    return buf.getvalue()
