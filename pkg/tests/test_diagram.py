"""Diagram descriptions (fcnn node columns, lenet box rows) and the SVG writer."""

import xml.etree.ElementTree as ET

import pytest

from mlwb.diagram import diagram, diagram_svg
from mlwb.errors import ContractError, ShapeError
from mlwb.model import (
    ModelSpec,
    columns_input,
    conv2d_layer,
    default_spec,
    dense,
    dropout_layer,
    flatten_layer,
    image_input,
    max_pool2d_layer,
)


def conv_spec():
    return ModelSpec(
        input=image_input(12, 12),
        layers=[
            conv2d_layer(filters=6, kernel_size=(5, 5), activation="relu"),
            max_pool2d_layer(pool_size=(2, 2)),
            flatten_layer(),
            dense(10, activation="softmax"),
        ],
        loss="categorical_crossentropy",
    )


def test_fcnn_columns_match_starter_network():
    desc = diagram(default_spec(), "fcnn")
    assert desc["style"] == "fcnn"
    assert [c["units"] for c in desc["columns"]] == [2, 8, 4, 1]
    assert [c["layer_index"] for c in desc["columns"]] == [None, 0, 1, 2]


def test_fcnn_fully_connected_edges():
    desc = diagram(default_spec(), "fcnn")
    sizes = [c["shown"] for c in desc["columns"]]
    assert len(desc["edges"]) == 3
    for k, edge in enumerate(desc["edges"]):
        assert edge["from_column"] == k and edge["to_column"] == k + 1
        pairs = edge["pairs"]
        assert len(pairs) == sizes[k] * sizes[k + 1]
        assert len({tuple(p) for p in pairs}) == len(pairs)


def test_fcnn_cap_and_ellipsis():
    spec = ModelSpec(
        input=columns_input(3),
        layers=[dense(20, activation="relu"), dense(1)],
        loss="mse",
    )
    desc = diagram(spec, "fcnn")
    col = desc["columns"][1]
    assert col["units"] == 20
    assert col["shown"] == 16
    assert col["ellipsis"] is True
    assert all(j < 16 for _, j in desc["edges"][0]["pairs"])


def test_fcnn_custom_cap():
    desc = diagram(default_spec(), "fcnn", node_cap=3)
    assert [c["shown"] for c in desc["columns"]] == [2, 3, 3, 1]
    assert desc["columns"][1]["ellipsis"] is True


def test_fcnn_image_input_counts_elements():
    desc = diagram(conv_spec(), "fcnn")
    assert desc["columns"][0]["units"] == 12 * 12 * 3


def test_lenet_conv_label():
    desc = diagram(conv_spec(), "lenet")
    assert desc["style"] == "lenet"
    labels = [b["label"] for b in desc["boxes"]]
    assert labels[0] == "input 12×12×3"
    assert labels[1] == "6 @ 5×5"
    assert labels[2] == "pool 2×2"
    assert labels[3] == "flatten"
    assert labels[4] == "dense 10"


def test_lenet_shapes_follow_inference():
    desc = diagram(conv_spec(), "lenet")
    assert desc["boxes"][1]["shape"] == [8, 8, 6]
    assert desc["boxes"][2]["shape"] == [4, 4, 6]
    assert desc["boxes"][3]["shape"] == [96]
    assert desc["boxes"][4]["shape"] == [10]


def test_lenet_dropout_label():
    spec = default_spec()
    spec.layers.insert(1, dropout_layer(0.25))
    desc = diagram(spec, "lenet")
    assert desc["boxes"][2]["label"] == "dropout 0.25"


def test_diagram_deterministic():
    assert diagram(conv_spec(), "fcnn") == diagram(conv_spec(), "fcnn")
    assert diagram(conv_spec(), "lenet") == diagram(conv_spec(), "lenet")


def test_diagram_rejects_bad_style_and_cap():
    with pytest.raises(ContractError):
        diagram(default_spec(), "sankey")
    with pytest.raises(ContractError):
        diagram(default_spec(), "fcnn", node_cap=0)


def test_diagram_requires_chaining_shapes():
    spec = ModelSpec(input=image_input(4, 4), layers=[dense(3)], loss="mse")
    with pytest.raises(ShapeError):
        diagram(spec, "fcnn")


def test_svg_fcnn_parses_and_counts_nodes():
    desc = diagram(default_spec(), "fcnn")
    svg = diagram_svg(desc)
    root = ET.fromstring(svg)
    circles = root.findall(".//{http://www.w3.org/2000/svg}circle")
    assert len(circles) == sum(c["shown"] for c in desc["columns"])
    lines = root.findall(".//{http://www.w3.org/2000/svg}line")
    assert len(lines) == sum(len(e["pairs"]) for e in desc["edges"])


def test_svg_lenet_parses_and_counts_boxes():
    desc = diagram(conv_spec(), "lenet")
    root = ET.fromstring(diagram_svg(desc))
    rects = root.findall(".//{http://www.w3.org/2000/svg}rect")
    assert len(rects) == len(desc["boxes"])
    texts = root.findall(".//{http://www.w3.org/2000/svg}text")
    assert texts[1].text == "6 @ 5×5"
