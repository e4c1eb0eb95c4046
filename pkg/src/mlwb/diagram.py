"""Network diagrams as structured JSON plus a small SVG writer.

Two styles: fcnn (node columns, fully connected) and lenet (labeled
boxes in sequence). Rendering layout is left to the consumer; the SVG
writer here serves the CLI.
"""

from __future__ import annotations

import math

from .errors import ContractError
from .model import ModelSpec, infer_shapes, input_shape_of

NODE_CAP = 16

_TIMES = "×"  # multiplication sign used in size labels


def _size_label(dims) -> str:
    return _TIMES.join(str(int(d)) for d in dims)


def _count(shape: tuple[int, ...]) -> int:
    return int(math.prod(shape)) if shape else 1


def _lenet_label(layer) -> str:
    p = layer.params
    if layer.kind == "conv2d":
        kh, kw = p["kernel_size"]
        return f"{p['filters']} @ {kh}{_TIMES}{kw}"
    if layer.kind == "max_pool2d":
        a, b = p["pool_size"]
        return f"pool {a}{_TIMES}{b}"
    if layer.kind == "dense":
        return f"dense {p['units']}"
    if layer.kind == "dropout":
        return f"dropout {p['rate']:g}"
    if layer.kind == "activation":
        return p["activation"]["name"]
    if layer.kind == "batch_norm":
        return "batch norm"
    if layer.kind == "gaussian_noise":
        return f"noise {p['stddev']:g}"
    if layer.kind == "reshape":
        return f"reshape {_size_label(p['target'])}"
    return layer.kind  # flatten


def diagram(spec: ModelSpec, style: str, node_cap: int = NODE_CAP) -> dict:
    """Pure, deterministic graph description of the network."""
    if style not in ("fcnn", "lenet"):
        raise ContractError(f"unknown diagram style {style!r}; expected fcnn or lenet")
    if node_cap < 1:
        raise ContractError(f"node cap must be >= 1, got {node_cap}")
    shapes = infer_shapes(spec)  # raises if the model does not chain

    if style == "lenet":
        boxes = [
            {
                "layer_index": None,
                "kind": "input",
                "label": f"input {_size_label(input_shape_of(spec.input))}",
                "shape": list(input_shape_of(spec.input)),
            }
        ]
        for i, layer in enumerate(spec.layers):
            boxes.append(
                {
                    "layer_index": i,
                    "kind": layer.kind,
                    "label": _lenet_label(layer),
                    "shape": list(shapes[i][1]),
                }
            )
        return {"format_version": 1, "style": "lenet", "boxes": boxes}

    columns = [
        {
            "layer_index": None,
            "label": "input",
            "units": _count(input_shape_of(spec.input)),
        }
    ]
    for i, layer in enumerate(spec.layers):
        columns.append(
            {"layer_index": i, "label": layer.kind, "units": _count(shapes[i][1])}
        )
    for col in columns:
        col["shown"] = min(col["units"], node_cap)
        col["ellipsis"] = col["units"] > node_cap
    edges = []
    for k in range(len(columns) - 1):
        pairs = [
            [i, j]
            for i in range(columns[k]["shown"])
            for j in range(columns[k + 1]["shown"])
        ]
        edges.append({"from_column": k, "to_column": k + 1, "pairs": pairs})
    return {
        "format_version": 1,
        "style": "fcnn",
        "columns": columns,
        "edges": edges,
    }


# ---------------------------------------------------------------------------
# SVG writer (CLI artifact)
# ---------------------------------------------------------------------------

_COL_GAP = 120
_NODE_GAP = 28
_MARGIN = 40


def _esc(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def diagram_svg(desc: dict) -> str:
    """Render a diagram description to a standalone SVG document."""
    lines = []
    if desc["style"] == "fcnn":
        columns = desc["columns"]
        tallest = max(c["shown"] for c in columns)
        height = 2 * _MARGIN + (tallest - 1) * _NODE_GAP + 40
        width = 2 * _MARGIN + (len(columns) - 1) * _COL_GAP

        def center_y(col):
            return _MARGIN + (tallest - col["shown"]) * _NODE_GAP / 2

        positions = []
        for k, col in enumerate(columns):
            x = _MARGIN + k * _COL_GAP
            y0 = center_y(col)
            positions.append(
                [(x, y0 + i * _NODE_GAP) for i in range(col["shown"])]
            )
        for edge in desc["edges"]:
            a, b = positions[edge["from_column"]], positions[edge["to_column"]]
            for i, j in edge["pairs"]:
                (x1, y1), (x2, y2) = a[i], b[j]
                lines.append(
                    f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                    'stroke="#99b" stroke-width="0.5"/>'
                )
        for k, col in enumerate(columns):
            for x, y in positions[k]:
                lines.append(
                    f'<circle cx="{x}" cy="{y}" r="8" fill="#fff" stroke="#335"/>'
                )
            x = _MARGIN + k * _COL_GAP
            label = col["label"] + (" …" if col["ellipsis"] else "")
            lines.append(
                f'<text x="{x}" y="{height - 12}" text-anchor="middle" '
                f'font-size="12" font-family="sans-serif">{_esc(label)}</text>'
            )
    else:
        boxes = desc["boxes"]
        box_w, box_h, gap = 150, 48, 30
        width = 2 * _MARGIN + len(boxes) * box_w + (len(boxes) - 1) * gap
        height = 2 * _MARGIN + box_h
        for k, box in enumerate(boxes):
            x = _MARGIN + k * (box_w + gap)
            y = _MARGIN
            lines.append(
                f'<rect x="{x}" y="{y}" width="{box_w}" height="{box_h}" '
                'fill="#eef" stroke="#335" rx="6"/>'
            )
            lines.append(
                f'<text x="{x + box_w / 2}" y="{y + box_h / 2 + 4}" '
                'text-anchor="middle" font-size="12" '
                f'font-family="sans-serif">{_esc(box["label"])}</text>'
            )
            if k:
                lines.append(
                    f'<line x1="{x - gap}" y1="{y + box_h / 2}" x2="{x}" '
                    f'y2="{y + box_h / 2}" stroke="#335" marker-end="url(#arrow)"/>'
                )
    body = "\n ".join(lines)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        "<defs><marker id=\"arrow\" markerWidth=\"8\" markerHeight=\"8\" "
        'refX="8" refY="4" orient="auto"><path d="M0,0 L8,4 L0,8 z" '
        'fill="#335"/></marker></defs>\n '
        f"{body}\n</svg>\n"
    )
