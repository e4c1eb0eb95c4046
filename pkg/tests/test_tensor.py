import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlwb.errors import ConfigError, ShapeError
from mlwb.tensor import (
    ActivationKind,
    InitializerKind,
    Tensor,
    apply_activation,
    conv2d,
    conv_output_size,
    initialize,
    matmul,
)


class TestTensor:
    def test_shape_data_invariant(self):
        t = Tensor([[1, 2], [3, 4]])
        assert t.shape == (2, 2)
        assert t.flat() == [1.0, 2.0, 3.0, 4.0]

    def test_scalar_rank_zero(self):
        t = Tensor(3.5)
        assert t.shape == ()
        assert t.item() == pytest.approx(3.5)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            Tensor([1, 2, 3], shape=[2, 2])

    def test_zero_dim_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 0)))

    def test_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 9.0

    def test_does_not_mutate_source_array(self):
        src = np.ones(3, dtype=np.float32)
        Tensor(src)
        src[0] = 2.0  # still writable

    def test_reshape_conserves_elements(self):
        t = Tensor([1, 2, 3, 4, 5, 6])
        assert t.reshape([2, 3]).shape == (2, 3)
        with pytest.raises(ShapeError):
            t.reshape([4, 2])


class TestMatmul:
    def test_identity(self):
        eye = Tensor(np.eye(2))
        m = Tensor([[5, 7], [2, 3]])
        assert matmul(eye, m) == m

    def test_shape_rule(self):
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.ones((3, 4)))
        assert matmul(a, b).shape == (2, 4)

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(3, 3)).astype(np.float32)
        b = rng.normal(size=(3, 3)).astype(np.float32)
        got = matmul(Tensor(a), Tensor(b)).data
        want = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    want[i, j] += float(a[i, k]) * float(b[k, j])
        assert np.allclose(got, want, atol=1e-6)

    def test_dimension_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\[2, 3\].*\[4, 5\]"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


class TestConv2d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.random((4, 5, 1)).astype(np.float32))
        k = Tensor(np.ones((1, 1, 1, 1)))
        assert np.allclose(conv2d(x, k).data, x.data)

    def test_all_ones_summation(self):
        x = Tensor(np.ones((3, 3, 1)))
        k = Tensor(np.ones((3, 3, 1, 1)))
        out = conv2d(x, k, stride=1, padding="valid")
        assert out.shape == (1, 1, 1)
        assert out.item() == pytest.approx(9.0)

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 5, 1)).astype(np.float32)
        k = rng.normal(size=(3, 3, 1, 2)).astype(np.float32)
        got = conv2d(Tensor(x), Tensor(k)).data
        want = np.zeros((3, 3, 2))
        for oy in range(3):
            for ox in range(3):
                for f in range(2):
                    for dy in range(3):
                        for dx in range(3):
                            want[oy, ox, f] += float(x[oy + dy, ox + dx, 0]) * float(
                                k[dy, dx, 0, f]
                            )
        assert np.allclose(got, want, atol=1e-5)

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.ones((2, 2, 1))), Tensor(np.ones((3, 3, 1, 1))))

    def test_same_padding_output_size(self):
        x = Tensor(np.ones((5, 5, 2)))
        k = Tensor(np.ones((3, 3, 2, 4)))
        assert conv2d(x, k, stride=2, padding="same").shape == (3, 3, 4)
        assert conv_output_size(5, 3, 2, "same") == 3
        assert conv_output_size(5, 3, 2, "valid") == 2


class TestActivations:
    def test_sigmoid_half_at_zero(self):
        assert apply_activation(ActivationKind("sigmoid"), Tensor(0.0)).item() == 0.5

    def test_relu(self):
        out = apply_activation(ActivationKind("relu"), Tensor([-2.0, 3.0]))
        assert out.flat() == [0.0, 3.0]

    def test_softmax_symmetry(self):
        out = apply_activation(ActivationKind("softmax"), Tensor([0.0, 0.0]))
        assert out.flat() == pytest.approx([0.5, 0.5])

    def test_elu_negative_branch(self):
        out = apply_activation(ActivationKind("elu", alpha=2.0), Tensor([-1.0, 1.0]))
        assert out.flat()[0] == pytest.approx(2.0 * (math.exp(-1) - 1), rel=1e-6)
        assert out.flat()[1] == 1.0

    def test_unknown_activation(self):
        with pytest.raises(ConfigError):
            ActivationKind("swish")

    @given(st.lists(st.floats(-15, 15), min_size=1, max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_sigmoid_open_interval_relu_nonneg(self, xs):
        t = Tensor(xs)
        sig = apply_activation(ActivationKind("sigmoid"), t).data
        assert np.all(sig > 0) and np.all(sig < 1)
        assert np.all(apply_activation(ActivationKind("relu"), t).data >= 0)

    @given(
        st.integers(1, 5),
        st.integers(1, 6),
        st.lists(st.floats(-30, 30), min_size=30, max_size=30),
    )
    @settings(max_examples=40, deadline=None)
    def test_softmax_rows_sum_to_one(self, r, c, xs):
        x = Tensor(np.asarray(xs[: r * c], dtype=np.float32).reshape(r, c))
        out = apply_activation(ActivationKind("softmax"), x).data
        assert np.allclose(out.sum(axis=-1), 1.0, atol=1e-6)

    def test_sigmoid_saturation_stays_inside(self):
        out = apply_activation(ActivationKind("sigmoid"), Tensor([-200.0, 200.0]))
        assert 0 < out.flat()[0] < 1 and 0 < out.flat()[1] < 1


class TestInitializers:
    def test_zeros(self):
        assert initialize(InitializerKind("zeros"), [2, 2]).tolist() == [
            [0, 0],
            [0, 0],
        ]

    def test_constant(self):
        out = initialize(InitializerKind("constant", {"value": 0.5}), [3])
        assert out.flat() == [0.5, 0.5, 0.5]

    def test_constant_missing_value(self):
        with pytest.raises(ConfigError):
            initialize(InitializerKind("constant"), [3])

    def test_glorot_deterministic_and_bounded(self):
        kind = InitializerKind("glorot_uniform", seed=42)
        a = initialize(kind, [4, 4])
        b = initialize(kind, [4, 4])
        assert a == b
        limit = math.sqrt(6 / (4 + 4))
        assert np.all(np.abs(a.data) <= limit)

    def test_he_uniform_bounded(self):
        out = initialize(InitializerKind("he_uniform", seed=1), [8, 2])
        assert np.all(np.abs(out.data) <= math.sqrt(6 / 8))

    def test_seeds_differ(self):
        a = initialize(InitializerKind("random_normal", seed=1), [16])
        b = initialize(InitializerKind("random_normal", seed=2), [16])
        assert a != b

    def test_random_uniform_params(self):
        out = initialize(
            InitializerKind("random_uniform", {"minval": 2.0, "maxval": 3.0}, seed=5),
            [32],
        )
        assert np.all(out.data >= 2.0) and np.all(out.data <= 3.0)
