"""Dataset construction from CSV text, image files, and typed tensor
literals, plus previews and JSON persistence."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, ContractError, ParseError
from .tensor import Tensor


@dataclass(frozen=True)
class Dataset:
    X: Tensor
    Y: Tensor
    source: str  # csv | images | tensor | generated
    input_column_names: tuple[str, ...] | None = None
    target_column_names: tuple[str, ...] | None = None
    category_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.X.rank < 1 or self.Y.rank < 1:
            raise ContractError("dataset tensors need a leading sample dimension")
        if self.X.shape[0] != self.Y.shape[0]:
            raise ContractError(
                f"dataset has {self.X.shape[0]} inputs but {self.Y.shape[0]} targets"
            )
        if self.X.shape[0] < 1:
            raise ContractError("dataset must hold at least one sample")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def to_dict(self) -> dict:
        return {
            "x": self.X.tolist(),
            "y": self.Y.tolist(),
            "x_shape": list(self.X.shape),
            "y_shape": list(self.Y.shape),
            "source": self.source,
            "input_column_names": list(self.input_column_names) if self.input_column_names else None,
            "target_column_names": list(self.target_column_names) if self.target_column_names else None,
            "category_labels": list(self.category_labels) if self.category_labels else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "Dataset":
        try:
            x = np.asarray(d["x"], dtype=np.float64).astype(np.float32)
            y = np.asarray(d["y"], dtype=np.float64).astype(np.float32)
        except (KeyError, ValueError) as e:
            raise ParseError(f"dataset arrays malformed: {e}", path="dataset") from e
        if "x_shape" in d:
            x = x.reshape(d["x_shape"])
        if "y_shape" in d:
            y = y.reshape(d["y_shape"])

        def names(key):
            v = d.get(key)
            return tuple(v) if v else None

        return Dataset(
            Tensor._wrap(np.ascontiguousarray(x)),
            Tensor._wrap(np.ascontiguousarray(y)),
            d.get("source", "generated"),
            names("input_column_names"),
            names("target_column_names"),
            names("category_labels"),
        )


def xor_dataset() -> Dataset:
    """The classic two-bit toy problem used by the starter model."""
    return Dataset(
        Tensor([[0, 0], [0, 1], [1, 0], [1, 1]]),
        Tensor([[0], [1], [1], [0]]),
        source="generated",
        input_column_names=("a", "b"),
        target_column_names=("xor",),
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvImportConfig:
    input_columns: tuple[str, ...]
    target_columns: tuple[str, ...]
    separator: str = ","
    divisors: dict | None = None  # column name -> nonzero divisor

    def __post_init__(self):
        if len(self.separator) != 1:
            raise ConfigError(f"separator must be a single character, got {self.separator!r}")
        if not self.input_columns or not self.target_columns:
            raise ConfigError("input and target column lists must be non-empty")
        overlap = set(self.input_columns) & set(self.target_columns)
        if overlap:
            raise ConfigError(f"columns cannot be both input and target: {sorted(overlap)}")
        for col, d in (self.divisors or {}).items():
            if not isinstance(d, (int, float)) or d == 0 or d != d:
                raise ConfigError(f"divisor for column {col!r} must be a nonzero number")


_BOOL_CELLS = {"true": 1.0, "false": 0.0}


def _parse_cell(raw: str, row_number: int, column: str) -> float:
    text = raw.strip()
    if text.lower() in _BOOL_CELLS:
        return _BOOL_CELLS[text.lower()]
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"row {row_number}, column {column!r}: {raw!r} is not a number",
            path=f"row {row_number}",
        ) from None


def parse_csv(text: str, config: CsvImportConfig) -> Dataset:
    """First line is the header; every referenced cell becomes a real
    number divided by its column's divisor."""
    reader = csv.reader(io.StringIO(text), delimiter=config.separator, quotechar='"')
    rows = list(reader)
    rows = [r for r in rows if r != []]  # ignore blank lines
    if not rows:
        raise ParseError("CSV has no header line", position=0)
    header = [h.strip() for h in rows[0]]
    for col in (*config.input_columns, *config.target_columns):
        if col not in header:
            raise ConfigError(f"column {col!r} not found in header {header}")
    for col in (config.divisors or {}):
        if col not in header:
            raise ConfigError(f"divisor references unknown column {col!r}")
    if len(rows) < 2:
        raise ParseError("CSV has a header but no data rows", position=len(text))

    index = {name: i for i, name in enumerate(header)}
    divisors = config.divisors or {}
    x_rows, y_rows = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(
                f"row {r} has {len(row)} cells, expected {len(header)}",
                path=f"row {r}",
            )

        def cell(col):
            value = _parse_cell(row[index[col]], r, col)
            return value / float(divisors.get(col, 1.0))

        x_rows.append([cell(c) for c in config.input_columns])
        y_rows.append([cell(c) for c in config.target_columns])

    return Dataset(
        Tensor(np.asarray(x_rows, dtype=np.float64).astype(np.float32)),
        Tensor(np.asarray(y_rows, dtype=np.float64).astype(np.float32)),
        source="csv",
        input_column_names=tuple(config.input_columns),
        target_column_names=tuple(config.target_columns),
    )


def serialize_csv(dataset: Dataset, separator: str = ",") -> str:
    """Header from the dataset's column names (or generated x0../y0..),
    full-precision values; parse_csv round-trips this exactly."""
    if dataset.X.rank != 2 or dataset.Y.rank != 2:
        raise ContractError("only tabular datasets serialize to CSV")
    in_names = dataset.input_column_names or tuple(
        f"x{i}" for i in range(dataset.X.shape[1])
    )
    out_names = dataset.target_column_names or tuple(
        f"y{i}" for i in range(dataset.Y.shape[1])
    )
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=separator, quotechar='"', lineterminator="\n")
    writer.writerow([*in_names, *out_names])
    for xi, yi in zip(dataset.X.data, dataset.Y.data):
        writer.writerow([repr(float(v)) for v in (*xi, *yi)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Tensor literals
# ---------------------------------------------------------------------------

_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


class _LiteralParser:
    """value := number | true | false | '[' value (',' value)* ']'"""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> ParseError:
        return ParseError(message, position=self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def parse(self):
        self.skip_ws()
        value = self.value()
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error(f"trailing characters after the literal: {self.text[self.pos:self.pos + 10]!r}")
        return value

    def value(self):
        self.skip_ws()
        if self.pos >= len(self.text):
            raise self.error("unexpected end of input")
        ch = self.text[self.pos]
        if ch == "[":
            return self.list_value()
        if self.text.startswith("true", self.pos):
            self.pos += 4
            return 1.0
        if self.text.startswith("false", self.pos):
            self.pos += 5
            return 0.0
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            raise self.error(f"expected a number, boolean, or '[', found {ch!r}")
        self.pos = m.end()
        return float(m.group())

    def list_value(self):
        self.pos += 1  # consume '['
        items = [self.value()]
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                raise self.error("unclosed '['")
            ch = self.text[self.pos]
            if ch == "]":
                self.pos += 1
                return items
            if ch != ",":
                raise self.error(f"expected ',' or ']', found {ch!r}")
            self.pos += 1
            items.append(self.value())


def _check_rectangular(value, path: str) -> tuple[int, ...]:
    """Shape of the nested lists; raises naming the first ragged index."""
    if not isinstance(value, list):
        return ()
    shapes = []
    for i, item in enumerate(value):
        shapes.append((i, _check_rectangular(item, f"{path}[{i}]")))
    first = shapes[0][1]
    for i, shape in shapes[1:]:
        if shape != first:
            raise ParseError(
                f"ragged literal: element at {path or 'root'}[{i}] has shape "
                f"{list(shape)}, expected {list(first)}",
                path=f"{path}[{i}]",
            )
    return (len(value), *first)


def parse_tensor_literal(text: str) -> Tensor:
    """Bracketed lists over numbers and booleans; true=1, false=0."""
    value = _LiteralParser(text).parse()
    shape = _check_rectangular(value, "")
    arr = np.asarray(value, dtype=np.float64).astype(np.float32, order="C")
    assert arr.shape == shape
    return Tensor._wrap(arr)


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------


def _decode_image(data: bytes, target_h: int, target_w: int) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    img.load()
    if "A" in img.getbands():
        # composite transparency on white before dropping alpha
        rgba = img.convert("RGBA")
        white = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        img = Image.alpha_composite(white, rgba)
    rgb = img.convert("RGB")
    resized = rgb.resize((target_w, target_h), Image.BILINEAR)
    return np.asarray(resized, dtype=np.float32) / 255.0


def import_images(files, target_h: int, target_w: int) -> Dataset:
    """files: iterable of (label, image bytes) or (label, bytes, name).
    Output X is [n, target_h, target_w, 3] in [0,1]; Y is one-hot over
    lexicographically sorted labels."""
    if target_h < 1 or target_w < 1:
        raise ConfigError(f"target size must be >= 1, got {target_h}x{target_w}")
    entries = []
    for i, item in enumerate(files):
        label, data = item[0], item[1]
        name = item[2] if len(item) > 2 and item[2] else f"file {i} (label {label!r})"
        try:
            entries.append((str(label), _decode_image(data, target_h, target_w)))
        except (UnidentifiedImageError, OSError) as e:
            raise ParseError(f"{name} cannot be decoded as PNG or JPEG") from e
    if not entries:
        raise ConfigError("no images supplied")
    labels = sorted({label for label, _ in entries})
    if len(labels) < 2:
        raise ConfigError(
            f"image classification needs at least 2 distinct labels, got {labels}"
        )
    one_hot = np.eye(len(labels), dtype=np.float32)
    label_index = {label: i for i, label in enumerate(labels)}
    x = np.stack([arr for _, arr in entries])
    y = np.stack([one_hot[label_index[label]] for label, _ in entries])
    return Dataset(
        Tensor._wrap(np.ascontiguousarray(x)),
        Tensor._wrap(np.ascontiguousarray(y)),
        source="images",
        category_labels=tuple(labels),
    )


# ---------------------------------------------------------------------------
# Preview / persistence
# ---------------------------------------------------------------------------


def preview(dataset: Dataset, k: int) -> dict:
    """First min(k, n) rows plus metadata; pure."""
    if k < 0:
        raise ConfigError(f"preview size must be >= 0, got {k}")
    count = min(k, dataset.n)
    return {
        "n": dataset.n,
        "shown": count,
        "x": dataset.X.data[:count].tolist(),
        "y": dataset.Y.data[:count].tolist(),
        "x_shape": list(dataset.X.shape),
        "y_shape": list(dataset.Y.shape),
        "source": dataset.source,
        "input_column_names": list(dataset.input_column_names or []) or None,
        "target_column_names": list(dataset.target_column_names or []) or None,
        "category_labels": list(dataset.category_labels or []) or None,
    }


def save_dataset(dataset: Dataset) -> bytes:
    return json.dumps(dataset.to_dict(), indent=1).encode("utf-8")


def load_dataset(data: bytes | str) -> Dataset:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", position=e.pos) from e
    return Dataset.from_dict(doc)
