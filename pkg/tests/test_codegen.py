"""Script generation and bundle export.

The XOR golden file in tests/golden was produced by this generator and
reviewed by hand; the byte comparison pins the output format.
"""

import ast
import io
import json
import pathlib
import shutil
import subprocess
import sys
import zipfile

import numpy as np
import pytest

from mlwb.codegen import (
    GeneratedProgram,
    _layer_construct,
    export_bundle,
    generate_python,
)
from mlwb.compiled import compile_model, load_model
from mlwb.data_import import xor_dataset
from mlwb.errors import ContractError, UnsupportedConstructError
from mlwb.model import (
    LayerSpec,
    ModelSpec,
    activation_layer,
    batch_norm_layer,
    columns_input,
    conv2d_layer,
    default_spec,
    dense,
    dropout_layer,
    flatten_layer,
    gaussian_noise_layer,
    image_input,
    max_pool2d_layer,
    optimizer_spec,
    reshape_layer,
)
from mlwb.training import TrainConfig

GOLDEN = pathlib.Path(__file__).parent / "golden" / "xor_train.py"

XOR_CONFIG = TrainConfig(epochs=500, batch_size=4, seed=1)


def kitchen_sink_spec():
    return ModelSpec(
        input=image_input(8, 8),
        layers=[
            gaussian_noise_layer(stddev=0.05),
            conv2d_layer(filters=6, kernel_size=(5, 5), activation="relu"),
            max_pool2d_layer(pool_size=(2, 2)),
            batch_norm_layer(),
            flatten_layer(),
            reshape_layer((24,)),
            dropout_layer(0.25),
            dense(10, activation={"name": "elu", "alpha": 0.5}, use_bias=False,
                  kernel_regularizer={"name": "l2", "lambda": 0.01}),
            activation_layer("softmax"),
        ],
        loss="categorical_crossentropy",
        optimizer=optimizer_spec("sgd", learning_rate=0.1),
    )


def test_generation_deterministic():
    a = generate_python(default_spec(), XOR_CONFIG)
    b = generate_python(default_spec(), XOR_CONFIG)
    assert a.source == b.source
    assert a.instructions == b.instructions
    assert a.manifest == b.manifest


def test_manifest_one_entry_per_layer_in_order():
    prog = generate_python(default_spec(), XOR_CONFIG)
    assert [i for i, _ in prog.manifest] == [0, 1, 2]
    assert all(name == "tf.keras.layers.Dense" for _, name in prog.manifest)


def test_manifest_covers_every_kind():
    prog = generate_python(kitchen_sink_spec(), TrainConfig())
    names = [name for _, name in prog.manifest]
    assert names == [
        "tf.keras.layers.GaussianNoise",
        "tf.keras.layers.Conv2D",
        "tf.keras.layers.MaxPooling2D",
        "tf.keras.layers.BatchNormalization",
        "tf.keras.layers.Flatten",
        "tf.keras.layers.Reshape",
        "tf.keras.layers.Dropout",
        "tf.keras.layers.Dense",
        "tf.keras.layers.Activation",
    ]


def test_parameters_appear_verbatim():
    prog = generate_python(kitchen_sink_spec(), TrainConfig())
    src = prog.source
    assert "Conv2D(6, kernel_size=(5, 5)" in src
    assert "'relu'" in src
    assert "Dense(10," in src
    assert "'softmax'" in src
    assert "Dropout(0.25)" in src
    assert "use_bias=False" in src
    assert "regularizers.L2(0.01)" in src
    assert "alpha=0.5" in src
    assert "categorical_crossentropy" in src
    assert "SGD(learning_rate=0.1)" in src
    assert "metrics=['accuracy']" in src


def test_generated_source_is_valid_python():
    for spec in (default_spec(), kitchen_sink_spec()):
        ast.parse(generate_python(spec, TrainConfig()).source)


def test_no_placeholder_markers():
    prog = generate_python(kitchen_sink_spec(), TrainConfig())
    for marker in ("{{", "}}", "TODO", "FIXME", "XXX", "<<<", ">>>"):
        assert marker not in prog.source
        assert marker not in prog.instructions


def test_golden_xor_script():
    prog = generate_python(default_spec(), XOR_CONFIG)
    assert prog.source.encode("utf-8") == GOLDEN.read_bytes()


def test_instructions_cover_setup():
    text = generate_python(default_spec(), XOR_CONFIG).instructions
    assert "venv" in text
    assert "pip install" in text
    assert "tensorflow" in text
    assert "train.py" in text


def test_invalid_spec_rejected():
    spec = default_spec()
    spec.layers[0].params["units"] = -3
    with pytest.raises(ContractError, match="invalid model"):
        generate_python(spec, TrainConfig())


def test_unknown_kind_is_an_unsupported_construct():
    with pytest.raises(UnsupportedConstructError, match="'rnn'"):
        _layer_construct(LayerSpec(kind="rnn", params={}))


def test_config_defaults_flow_into_script():
    prog = generate_python(default_spec(), TrainConfig(epochs=77, batch_size=9))
    assert "default=77" in prog.source
    assert "default=9" in prog.source


# ---------------------------------------------------------------------------
# Bundles
# ---------------------------------------------------------------------------


def test_bundle_entries_and_round_trip():
    compiled = compile_model(default_spec(), seed=1)
    data = export_bundle(default_spec(), compiled, dataset=xor_dataset(), config=XOR_CONFIG)
    zf = zipfile.ZipFile(io.BytesIO(data))
    assert zf.namelist() == [
        "README.txt",
        "dataset.csv",
        "dataset.json",
        "model.json",
        "train.py",
    ]
    spec, weights = load_model(zf.read("model.json"))
    for i, slots in enumerate(compiled.weights):
        for name, tensor in slots.items():
            assert weights[i][name].data.tobytes() == tensor.data.tobytes()


def test_bundle_without_dataset():
    compiled = compile_model(default_spec(), seed=1)
    data = export_bundle(default_spec(), compiled)
    names = zipfile.ZipFile(io.BytesIO(data)).namelist()
    assert names == ["README.txt", "model.json", "train.py"]


def test_bundle_deterministic():
    compiled = compile_model(default_spec(), seed=1)
    a = export_bundle(default_spec(), compiled, dataset=xor_dataset())
    b = export_bundle(default_spec(), compiled, dataset=xor_dataset())
    assert a == b


def test_bundle_image_dataset_skips_csv():
    spec = kitchen_sink_spec()
    compiled = compile_model(spec, seed=0)
    from mlwb.data_import import Dataset
    from mlwb.tensor import Tensor

    ds = Dataset(
        Tensor(np.zeros((2, 8, 8, 3), dtype=np.float32)),
        Tensor([[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]] * 2),
        source="images",
    )
    names = zipfile.ZipFile(io.BytesIO(export_bundle(spec, compiled, dataset=ds))).namelist()
    assert "dataset.json" in names
    assert "dataset.csv" not in names


# ---------------------------------------------------------------------------
# Optional end-to-end execution of the generated script
# ---------------------------------------------------------------------------


@pytest.mark.skipif(
    not pytest.importorskip("importlib.util").find_spec("tensorflow"),
    reason="tensorflow not installed",
)
def test_generated_script_runs_end_to_end(tmp_path):
    compiled = compile_model(default_spec(), seed=1)
    bundle = export_bundle(
        default_spec(), compiled, dataset=xor_dataset(),
        config=TrainConfig(epochs=2, batch_size=4, seed=1),
    )
    with zipfile.ZipFile(io.BytesIO(bundle)) as zf:
        zf.extractall(tmp_path)
    proc = subprocess.run(
        [sys.executable, "train.py", "--train", "--epochs", "2",
         "--predict", "[[0, 1]]"],
        cwd=tmp_path,
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert proc.returncode == 0, proc.stderr[-2000:]
    prediction = json.loads(proc.stdout.strip().splitlines()[-1])
    assert np.asarray(prediction).shape == (1, 1)
    assert 0.0 <= prediction[0][0] <= 1.0
