"""Model graph: shape inference, validation + auto-fixes, edits with
undo/redo, recompilation with weight retention, persistence."""

import json
import random

import numpy as np
import pytest

from mlwb import autodiff as ad
from mlwb.compiled import (
    CompiledModel,
    build_forward,
    compile_model,
    load_model,
    load_compiled,
    recompile,
    save_model,
    spec_from_dict,
    weight_slots,
)
from mlwb.errors import ConfigError, ContractError, EditRejected, ParseError, ShapeError
from mlwb.model import (
    EditHistory,
    EditOp,
    Mode,
    ModelSpec,
    adapt_output_layer,
    columns_input,
    conv2d_layer,
    custom_input,
    default_spec,
    dense,
    dropout_layer,
    flatten_layer,
    image_input,
    infer_shapes,
    make_layer,
    max_pool2d_layer,
    optimizer_spec,
    reshape_layer,
    validate,
)
from mlwb.tensor import Tensor

from editgen import random_edit


def xor_spec() -> ModelSpec:
    return default_spec()


def small_image_spec() -> ModelSpec:
    return ModelSpec(
        input=image_input(8, 8),
        layers=[
            conv2d_layer(filters=4, kernel_size=[3, 3], activation="relu"),
            max_pool2d_layer(),
            flatten_layer(),
            dense(3, activation="softmax"),
        ],
        loss="categorical_crossentropy",
        optimizer=optimizer_spec("adam"),
    )


# ---------------------------------------------------------------------------
# Shape inference
# ---------------------------------------------------------------------------


class TestShapeInference:
    def test_image_input_shape(self):
        spec = ModelSpec(image_input(28, 28), [flatten_layer()])
        assert infer_shapes(spec)[0][0] == (28, 28, 3)

    def test_columns_dense(self):
        spec = ModelSpec(columns_input(2), [dense(8)])
        assert infer_shapes(spec)[0] == ((2,), (8,))

    def test_flatten_product(self):
        spec = ModelSpec(image_input(28, 28), [flatten_layer()])
        assert infer_shapes(spec)[0][1] == (2352,)

    def test_conv_chain(self):
        shapes = infer_shapes(small_image_spec())
        assert [s[1] for s in shapes] == [(6, 6, 4), (3, 3, 4), (36,), (3,)]

    def test_dense_on_rank3_names_layer(self):
        spec = ModelSpec(image_input(8, 8), [dense(4)])
        with pytest.raises(ShapeError, match="layer 0"):
            infer_shapes(spec)

    def test_reshape_conserves(self):
        spec = ModelSpec(custom_input([2, 3]), [reshape_layer([3, 2])])
        assert infer_shapes(spec)[0][1] == (3, 2)
        bad = ModelSpec(custom_input([2, 3]), [reshape_layer([4, 2])])
        with pytest.raises(ShapeError, match="conserve"):
            infer_shapes(bad)

    def test_kernel_larger_than_input(self):
        spec = ModelSpec(
            image_input(2, 2), [conv2d_layer(kernel_size=[5, 5])]
        )
        with pytest.raises(ShapeError, match="larger"):
            infer_shapes(spec)

    def test_same_padding_keeps_size(self):
        spec = ModelSpec(
            image_input(7, 7), [conv2d_layer(kernel_size=[3, 3], padding="same")]
        )
        assert infer_shapes(spec)[0][1] == (7, 7, 4)

    def test_deterministic(self):
        spec = small_image_spec()
        assert infer_shapes(spec) == infer_shapes(spec)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


class TestValidate:
    def test_valid_model_empty_findings(self):
        assert validate(xor_spec()).findings == []

    def test_dropout_out_of_range_fix(self):
        spec = xor_spec()
        spec.layers.insert(1, dropout_layer(0.2))
        spec.layers[1].params["rate"] = 1.5
        report = validate(spec)
        [finding] = report.errors
        assert finding.field == "rate"
        assert finding.fix.payload["value"] == 0.5

    def test_dense_on_image_gets_flatten_fix(self):
        spec = ModelSpec(image_input(28, 28), [dense(4)])
        report = validate(spec)
        [finding] = report.errors
        assert finding.fix.kind == "add_layer"
        assert finding.fix.payload["layer"]["kind"] == "flatten"
        assert finding.fix.payload["index"] == 0

    def test_unknown_loss_flagged(self):
        spec = xor_spec()
        spec.loss = "hinge"
        report = validate(spec)
        assert any(f.field == "loss" for f in report.errors)

    def test_unknown_layer_kind_flagged_without_fix(self):
        spec = xor_spec()
        spec.layers[0].kind = "lstm"
        report = validate(spec)
        bad = [f for f in report.errors if f.field == "kind"]
        assert bad and bad[0].fix is None

    def test_optimizer_bad_learning_rate(self):
        spec = xor_spec()
        spec.optimizer["learning_rate"] = -1.0
        report = validate(spec)
        [finding] = [f for f in report.errors if f.field == "optimizer.learning_rate"]
        assert finding.fix.payload["optimizer"]["learning_rate"] > 0

    def test_missing_param_flagged(self):
        spec = xor_spec()
        del spec.layers[0].params["units"]
        report = validate(spec)
        assert any(f.field == "units" and f.fix is not None for f in report.errors)


# ---------------------------------------------------------------------------
# Edits
# ---------------------------------------------------------------------------


class TestApplyEdit:
    def test_set_units_pure(self):
        spec = xor_spec()
        out = ad_apply(spec, EditOp.set_param(0, "units", 4))
        assert out.spec.layers[0].params["units"] == 4
        assert spec.layers[0].params["units"] == 8  # original untouched

    def test_undo_add_layer_restores_spec(self):
        from mlwb.model import apply_edit

        spec = xor_spec()
        history = EditHistory()
        out = apply_edit(spec, EditOp.add_layer(1, dropout_layer(0.3)), history=history)
        assert len(out.spec.layers) == 4
        restored = history.undo(out.spec)
        assert restored == spec

    def test_remove_only_layer_rejected(self):
        from mlwb.model import apply_edit

        spec = ModelSpec(columns_input(2), [dense(1)])
        with pytest.raises(EditRejected):
            apply_edit(spec, EditOp.remove_layer(0))
        with pytest.raises(EditRejected):
            apply_edit(spec, EditOp.remove_layer(0), mode=Mode.EXPERT)

    def test_beginner_applies_dropout_clamp(self):
        from mlwb.model import apply_edit

        spec = xor_spec()
        added = apply_edit(spec, EditOp.add_layer(1, dropout_layer(0.2)))
        out = apply_edit(added.spec, EditOp.set_param(1, "rate", 1.5))
        assert out.spec.layers[1].params["rate"] == 0.5
        assert len(out.applied) == 2  # the edit plus its fix
        assert out.report.ok

    def test_beginner_inserts_flatten(self):
        from mlwb.model import apply_edit

        spec = ModelSpec(image_input(8, 8), [flatten_layer(), dense(4)])
        out = apply_edit(spec, EditOp.remove_layer(0))
        assert [l.kind for l in out.spec.layers] == ["flatten", "dense"]
        assert out.report.ok

    def test_expert_keeps_invalid_value(self):
        from mlwb.model import apply_edit

        spec = xor_spec()
        out = apply_edit(spec, EditOp.set_param(0, "units", -3), mode=Mode.EXPERT)
        assert out.spec.layers[0].params["units"] == -3
        assert not out.report.ok

    def test_beginner_rejects_unfixable(self):
        from mlwb.model import apply_edit

        spec = xor_spec()
        bad = EditOp.add_layer(0, make_layer("dense"))
        bad.payload["layer"]["kind"] = "lstm"
        with pytest.raises(EditRejected) as exc:
            apply_edit(spec, bad)
        assert not exc.value.report.ok

    def test_malformed_index_raises_contract_error(self):
        from mlwb.model import apply_edit

        spec = xor_spec()
        with pytest.raises(ContractError):
            apply_edit(spec, EditOp.remove_layer(99))

    def test_move_layer_inverse(self):
        from mlwb.model import apply_edit

        spec = xor_spec()
        history = EditHistory()
        out = apply_edit(spec, EditOp.move_layer(0, 2), mode=Mode.EXPERT, history=history)
        assert [l.params.get("units") for l in out.spec.layers] == [4, 1, 8]
        assert history.undo(out.spec) == spec


def ad_apply(spec, op, mode=Mode.BEGINNER):
    from mlwb.model import apply_edit

    return apply_edit(spec, op, mode)


class TestUndoRedoWalks:
    def test_random_walk_restores_exactly(self):
        rng = random.Random(7)
        for trial in range(30):
            spec = xor_spec()
            stack = [spec]
            history = EditHistory()
            mode = rng.choice([Mode.BEGINNER, Mode.EXPERT])
            from mlwb.model import apply_edit

            for _ in range(rng.randint(1, 12)):
                op = random_edit(rng, spec)
                try:
                    spec = apply_edit(spec, op, mode, history=history).spec
                    stack.append(spec)
                except (EditRejected, ContractError):
                    continue
            final = spec
            undone = 0
            while history.can_undo:
                spec = history.undo(spec)
                undone += 1
                assert spec == stack[len(stack) - 1 - undone]
            assert spec == stack[0]
            while history.can_redo:
                spec = history.redo(spec)
            assert spec == final

    def test_new_edit_clears_redo(self):
        from mlwb.model import apply_edit

        spec = xor_spec()
        history = EditHistory()
        spec = apply_edit(spec, EditOp.set_param(0, "units", 5), history=history).spec
        spec = history.undo(spec)
        assert history.can_redo
        spec = apply_edit(spec, EditOp.set_param(0, "units", 6), history=history).spec
        assert not history.can_redo

    def test_beginner_closure(self):
        # any spec reachable through beginner edits validates clean
        from mlwb.model import apply_edit

        rng = random.Random(21)
        for trial in range(25):
            spec = xor_spec()
            for _ in range(10):
                op = random_edit(rng, spec)
                try:
                    spec = apply_edit(spec, op, Mode.BEGINNER).spec
                except (EditRejected, ContractError):
                    pass
                assert validate(spec).ok


# ---------------------------------------------------------------------------
# Compile / recompile
# ---------------------------------------------------------------------------


class TestCompile:
    def test_weight_shapes(self):
        compiled = compile_model(xor_spec(), seed=1)
        assert compiled.weights[0]["kernel"].shape == (2, 8)
        assert compiled.weights[0]["bias"].shape == (8,)
        assert compiled.weights[2]["kernel"].shape == (4, 1)

    def test_deterministic_for_seed(self):
        a = compile_model(xor_spec(), seed=5)
        b = compile_model(xor_spec(), seed=5)
        for wa, wb in zip(a.weights, b.weights):
            for name in wa:
                assert np.array_equal(wa[name].data, wb[name].data)

    def test_seeds_differ_between_layers(self):
        compiled = compile_model(
            ModelSpec(columns_input(4), [dense(4), dense(4)]), seed=0
        )
        assert not np.array_equal(
            compiled.weights[0]["kernel"].data, compiled.weights[1]["kernel"].data
        )

    def test_invalid_spec_refused(self):
        spec = xor_spec()
        spec.layers[0].params["units"] = -1
        with pytest.raises(ConfigError, match="invalid"):
            compile_model(spec)

    def test_explicit_initializer_seed_wins(self):
        spec = ModelSpec(columns_input(3), [dense(3)])
        spec.layers[0].params["kernel_initializer"] = {"name": "glorot_uniform", "seed": 9}
        a = compile_model(spec, seed=0)
        b = compile_model(spec, seed=123)
        assert np.array_equal(a.weights[0]["kernel"].data, b.weights[0]["kernel"].data)

    def test_batch_norm_state(self):
        spec = ModelSpec(columns_input(4), [make_layer("batch_norm"), dense(2)])
        compiled = compile_model(spec)
        bn = compiled.weights[0]
        assert np.array_equal(bn["gamma"].data, np.ones(4, dtype=np.float32))
        assert np.array_equal(bn["moving_variance"].data, np.ones(4, dtype=np.float32))
        mask = compiled.trainable_mask()[0]
        assert mask["gamma"] and not mask["moving_mean"]


class TestRecompile:
    def test_activation_change_retains_other_layers(self):
        old = compile_model(xor_spec(), seed=3)
        new_spec = xor_spec()
        new_spec.layers[2].params["activation"] = {"name": "tanh"}
        new = recompile(old, new_spec)
        assert new.weights[0]["kernel"] is old.weights[0]["kernel"]
        assert new.weights[2]["kernel"] is old.weights[2]["kernel"]

    def test_units_change_reinitializes_only_that_layer(self):
        old = compile_model(xor_spec(), seed=3)
        new_spec = xor_spec()
        new_spec.layers[1].params["units"] = 6
        new = recompile(old, new_spec)
        assert new.weights[0]["kernel"] is old.weights[0]["kernel"]
        assert new.weights[1]["kernel"].shape == (8, 6)
        # downstream dense sees 6 inputs now, so it must also reinitialize
        assert new.weights[2]["kernel"].shape == (6, 1)
        fresh = compile_model(new_spec, seed=3)
        assert np.array_equal(new.weights[1]["kernel"].data, fresh.weights[1]["kernel"].data)

    def test_identical_spec_retains_everything(self):
        old = compile_model(xor_spec(), seed=3)
        new = recompile(old, xor_spec())
        for i in range(3):
            assert new.weights[i]["kernel"] is old.weights[i]["kernel"]
            assert new.weights[i]["bias"] is old.weights[i]["bias"]

    def test_retention_against_positional_oracle(self):
        # oracle: diff the two specs positionally with independently
        # computed weight shapes; retained layers must be bit-exact old,
        # reinitialized layers must equal a fresh compile
        from mlwb.model import apply_edit

        rng = random.Random(99)
        for trial in range(40):
            spec = xor_spec()
            old = compile_model(spec, seed=trial)
            for _ in range(rng.randint(1, 5)):
                try:
                    spec = apply_edit(spec, random_edit(rng, spec), Mode.BEGINNER).spec
                except (EditRejected, ContractError):
                    continue
            new = recompile(old, spec)
            fresh = compile_model(spec, seed=old.seed)
            old_shapes = [
                {n: t.shape for n, t in slots.items()} for slots in old.weights
            ]
            for i, layer in enumerate(spec.layers):
                new_shapes = {n: t.shape for n, t in new.weights[i].items()}
                same = (
                    i < len(old.spec.layers)
                    and old.spec.layers[i].kind == layer.kind
                    and old_shapes[i] == new_shapes
                )
                source = old if same else fresh
                for name, tensor in new.weights[i].items():
                    assert np.array_equal(tensor.data, source.weights[i][name].data), (
                        f"trial {trial} layer {i} {name}: "
                        f"{'retention' if same else 'reinitialization'} violated"
                    )


# ---------------------------------------------------------------------------
# Forward pass sanity (full behavior covered by the training tests)
# ---------------------------------------------------------------------------


class TestForward:
    def test_dense_forward_matches_manual(self):
        spec = ModelSpec(columns_input(2), [dense(3, activation="linear")])
        compiled = compile_model(spec, seed=1)
        x = np.array([[1.0, 2.0]], dtype=np.float32)
        fp = build_forward(compiled, x)
        w = compiled.weights[0]["kernel"].data.astype(np.float64)
        b = compiled.weights[0]["bias"].data.astype(np.float64)
        assert np.allclose(fp.output.value, x.astype(np.float64) @ w + b)

    def test_single_sample_gets_batch_dim(self):
        compiled = compile_model(xor_spec(), seed=1)
        fp = build_forward(compiled, np.array([0.0, 1.0], dtype=np.float32))
        assert fp.output.shape == (1, 1)

    def test_image_pipeline_runs(self):
        compiled = compile_model(small_image_spec(), seed=2)
        x = np.random.default_rng(0).random((2, 8, 8, 3), dtype=np.float32)
        fp = build_forward(compiled, x)
        assert fp.output.shape == (2, 3)
        assert np.allclose(fp.output.value.sum(axis=1), 1.0, atol=1e-6)

    def test_dropout_inactive_in_inference(self):
        spec = xor_spec()
        spec.layers.insert(1, dropout_layer(0.9))
        compiled = compile_model(spec, seed=1)
        x = np.ones((4, 2), dtype=np.float32)
        a = build_forward(compiled, x).output.value
        b = build_forward(compiled, x).output.value
        assert np.array_equal(a, b)

    def test_wrong_input_shape_names_both(self):
        compiled = compile_model(xor_spec(), seed=1)
        with pytest.raises(ConfigError, match=r"\[3\].*\[2\]"):
            build_forward(compiled, np.zeros((1, 3), dtype=np.float32))

    def test_regularizer_penalty_present(self):
        spec = xor_spec()
        spec.layers[0].params["kernel_regularizer"] = {"name": "l2", "lambda": 0.1}
        compiled = compile_model(spec, seed=1)
        fp = build_forward(compiled, np.zeros((1, 2), dtype=np.float32))
        expected = 0.1 * np.sum(compiled.weights[0]["kernel"].data.astype(np.float64) ** 2)
        assert np.isclose(fp.reg_penalty.value, expected)


# ---------------------------------------------------------------------------
# adapt_output_layer
# ---------------------------------------------------------------------------


class FakeDataset:
    def __init__(self, y, labels=None):
        self.Y = Tensor(y)
        self.category_labels = labels


class TestAdaptOutput:
    def test_three_categories(self):
        y = np.eye(3, dtype=np.float32)
        out = adapt_output_layer(xor_spec(), FakeDataset(y, ["a", "b", "c"]))
        last = out.layers[-1]
        assert last.params["units"] == 3
        assert last.params["activation"] == {"name": "softmax"}
        assert out.loss == "categorical_crossentropy"

    def test_single_target_column_regression(self):
        y = np.array([[0.5], [0.25]], dtype=np.float32)
        out = adapt_output_layer(xor_spec(), FakeDataset(y))
        assert out.layers[-1].params["units"] == 1
        assert out.loss == "mse"

    def test_idempotent(self):
        y = np.eye(3, dtype=np.float32)
        once = adapt_output_layer(xor_spec(), FakeDataset(y, ["a", "b", "c"]))
        twice = adapt_output_layer(once, FakeDataset(y, ["a", "b", "c"]))
        assert once == twice

    def test_appends_dense_when_missing(self):
        spec = ModelSpec(image_input(8, 8), [flatten_layer()])
        y = np.eye(2, dtype=np.float32)
        out = adapt_output_layer(spec, FakeDataset(y, ["x", "y"]))
        assert out.layers[-1].kind == "dense"
        assert out.layers[-1].params["units"] == 2
        with pytest.raises(ContractError):
            adapt_output_layer(spec, FakeDataset(y, ["x", "y"]), Mode.EXPERT)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


class TestModelFile:
    def test_round_trip_identity(self):
        compiled = compile_model(xor_spec(), seed=11)
        spec, weights = load_model(save_model(compiled))
        assert spec == compiled.spec
        for loaded, original in zip(weights, compiled.weights):
            assert loaded.keys() == original.keys()
            for name in loaded:
                assert np.array_equal(loaded[name].data, original[name].data)

    def test_round_trip_survives_training_like_values(self):
        compiled = compile_model(xor_spec(), seed=11)
        # adversarial float32 values: subnormals, exact powers, long fractions
        oddballs = np.array(
            [1e-40, 2**-24, 1 / 3, np.float32(0.1), -1.0000001], dtype=np.float32
        )
        slots = dict(compiled.weights[0])
        kernel = slots["kernel"].data.copy()
        kernel.flat[: oddballs.size] = oddballs
        slots["kernel"] = Tensor(kernel)
        compiled = compiled.with_weights([slots, *compiled.weights[1:]])
        _, weights = load_model(save_model(compiled))
        assert np.array_equal(weights[0]["kernel"].data, kernel)

    def test_truncated_file_errors_with_position(self):
        data = save_model(compile_model(xor_spec()))[:50]
        with pytest.raises(ParseError) as exc:
            load_model(data)
        assert exc.value.position is not None

    def test_unknown_layer_kind_named(self):
        doc = json.loads(save_model(compile_model(xor_spec())))
        doc["layers"][1]["kind"] = "lstm"
        with pytest.raises(ParseError, match="lstm"):
            load_model(json.dumps(doc))

    def test_wrong_weight_shape_rejected(self):
        doc = json.loads(save_model(compile_model(xor_spec())))
        doc["weights"][0][0]["shape"] = [2, 9]
        with pytest.raises(ParseError, match="shape"):
            load_model(json.dumps(doc))

    def test_format_version_checked(self):
        doc = json.loads(save_model(compile_model(xor_spec())))
        doc["format_version"] = 2
        with pytest.raises(ParseError, match="format_version"):
            load_model(json.dumps(doc))

    def test_load_compiled_usable(self):
        compiled = compile_model(xor_spec(), seed=4)
        again = load_compiled(save_model(compiled))
        x = np.array([[1.0, 0.0]], dtype=np.float32)
        a = build_forward(compiled, x).output.value
        b = build_forward(again, x).output.value
        assert np.array_equal(a, b)

    def test_spec_from_dict_path_in_error(self):
        doc = {"input": {"kind": "columns", "n": 2}, "layers": [{"params": {}}]}
        with pytest.raises(ParseError) as exc:
            spec_from_dict(doc)
        assert "layers[0]" in exc.value.path

    def test_weight_slots_oracle(self):
        # independent expectation for every weighted kind
        spec = small_image_spec()
        shapes = infer_shapes(spec)
        assert weight_slots(spec.layers[0], shapes[0][0]) == {
            "kernel": (3, 3, 3, 4),
            "bias": (4,),
        }
        assert weight_slots(spec.layers[3], shapes[3][0]) == {
            "kernel": (36, 3),
            "bias": (3,),
        }
