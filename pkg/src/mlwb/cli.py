"""Command line: serve the workbench, or run train / predict / export /
visualize headlessly against saved model files.

Any contract violation (bad file, shape mismatch, unknown option value)
exits with status 2 and a message on stderr.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import pathlib
import sys

from .codegen import export_bundle, generate_python
from .compiled import load_compiled, load_model, save_model
from .data_import import (
    CsvImportConfig,
    load_dataset,
    parse_csv,
    parse_tensor_literal,
)
from .diagram import diagram, diagram_svg
from .errors import ConfigError, WorkbenchError
from .mathmode import eligible, render
from .session import _png_base64
from .training import TrainConfig, predict, train

DEFAULT_PORT = 7007
DEFAULT_HOST = "127.0.0.1"


def _load_compiled(path: str):
    return load_compiled(pathlib.Path(path).read_bytes())


def _load_dataset_file(path: str, args):
    text = pathlib.Path(path).read_text(encoding="utf-8")
    if path.endswith(".csv"):
        if not args.inputs or not args.targets:
            raise ConfigError("--inputs and --targets are required for CSV data")
        config = CsvImportConfig(
            input_columns=tuple(args.inputs.split(",")),
            target_columns=tuple(args.targets.split(",")),
            separator=args.separator,
        )
        return parse_csv(text, config)
    return load_dataset(text)


def resolve_port(flag_value: int) -> int:
    """MLWB_PORT beats the --port flag when set."""
    raw = os.environ.get("MLWB_PORT", "").strip()
    if not raw:
        return flag_value
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"MLWB_PORT must be an integer, got {raw!r}") from None


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = resolve_port(args.port)
    app = create_app(state_dir=args.state_dir, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def _cmd_train(args) -> int:
    compiled = _load_compiled(args.model)
    dataset = _load_dataset_file(args.data, args)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        shuffle=not args.no_shuffle,
        seed=args.seed,
        validation_split=args.validation_split,
    )

    def sink(event):
        if event.kind == "epoch_end":
            m = event.metrics
            parts = [f"epoch {event.epoch + 1}/{config.epochs}", f"loss {m.loss:.6f}"]
            if m.accuracy is not None:
                parts.append(f"acc {m.accuracy:.4f}")
            if m.val_loss is not None:
                parts.append(f"val_loss {m.val_loss:.6f}")
            print("  ".join(parts))

    result = train(compiled, dataset, config, sink=sink)
    out = args.out or str(pathlib.Path(args.model).with_suffix(".trained.json"))
    pathlib.Path(out).write_bytes(save_model(result))
    print(f"saved trained model to {out}")
    return 0


def _cmd_export_python(args) -> int:
    raw = pathlib.Path(args.model).read_bytes()
    compiled = load_compiled(raw)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size)
    program = generate_python(compiled.spec, config)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "train.py").write_text(program.source, encoding="utf-8")
    (out / "README.txt").write_text(program.instructions, encoding="utf-8")
    (out / "model.json").write_bytes(save_model(compiled))
    print(f"wrote train.py, README.txt, model.json to {out}")
    return 0


def _cmd_predict(args) -> int:
    compiled = _load_compiled(args.model)
    x = parse_tensor_literal(args.input)
    print(json.dumps(predict(compiled, x).tolist()))
    return 0


def _cmd_visualize(args) -> int:
    compiled = _load_compiled(args.model)
    kind = args.kind
    if kind in ("fcnn", "lenet"):
        svg = diagram_svg(diagram(compiled.spec, kind))
        _write_text(args.out, svg, default_suffix=".svg")
        return 0
    if kind == "mathmode":
        ok, reason = eligible(compiled.spec)
        if not ok:
            raise ConfigError(f"math mode unavailable: {reason}")
        _write_text(args.out, render(compiled).latex(), default_suffix=".tex")
        return 0
    if kind == "featuremap":
        from .explain import feature_map

        result = feature_map(
            compiled, layer_index=args.layer_index, unit=args.unit, seed=args.seed
        )
        _write_png(args.out or "featuremap.png", result.optimized.data)
        print(f"converged: {result.converged}  objective: {result.trace[-1]:.6f}")
        return 0
    if kind == "gradcam":
        from .explain import gradcam

        if not args.input:
            raise ConfigError("--input is required for gradcam")
        x = parse_tensor_literal(args.input)
        heatmap = gradcam(compiled, x, class_index=args.class_index)
        _write_png(args.out or "gradcam.png", heatmap.values.data)
        print(f"conv layer: {heatmap.conv_layer_index}")
        return 0
    if kind == "layerio":
        from .explain import layer_io

        if not args.input:
            raise ConfigError("--input is required for layerio")
        x = parse_tensor_literal(args.input)
        print(json.dumps(layer_io(compiled, x).to_dict()))
        return 0
    raise ConfigError(f"unknown visualization kind {kind!r}")


def _write_text(out: str | None, text: str, default_suffix: str) -> None:
    if out:
        pathlib.Path(out).write_text(text, encoding="utf-8")
        print(f"wrote {out}")
    else:
        print(text)


def _write_png(out: str, arr) -> None:
    data = base64.b64decode(_png_base64(arr))
    pathlib.Path(out).write_bytes(data)
    print(f"wrote {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlwb", description="no-code neural network workbench"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the local service")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--host", default=DEFAULT_HOST)
    p.add_argument("--state-dir", default=None,
                   help="persist sessions here and restore them on restart")
    p.add_argument("--static-dir", default=None,
                   help="serve this directory as the web UI")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("train", help="train a saved model on a dataset file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True,
                   help="dataset .json, or .csv with --inputs/--targets")
    p.add_argument("--inputs", default=None, help="CSV input column names, comma separated")
    p.add_argument("--targets", default=None, help="CSV target column names")
    p.add_argument("--separator", default=",")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--validation-split", type=float, default=0.0)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--out", default=None, help="where to save the trained model")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("export-python", help="write train.py + README + model file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=_cmd_export_python)

    p = sub.add_parser("predict", help="run a tensor literal through a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help='tensor literal, e.g. "[[true, false]]"')
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("visualize", help="produce SVG/PNG/text artifacts")
    p.add_argument("--model", required=True)
    p.add_argument("--kind", required=True,
                   choices=["fcnn", "lenet", "mathmode", "featuremap", "gradcam", "layerio"])
    p.add_argument("--out", default=None)
    p.add_argument("--input", default=None, help="tensor literal input")
    p.add_argument("--layer-index", type=int, default=0)
    p.add_argument("--unit", type=int, default=0)
    p.add_argument("--class-index", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_visualize)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WorkbenchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
