import numpy as np
import pytest

from mlwb import autodiff as ad
from mlwb.errors import ContractError, ShapeError
from mlwb.tensor import ActivationKind, Tensor


def fd_gradient(f, x, h=1e-3):
    """Central finite differences of scalar f over array x (float64)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
        it.iternext()
    return g


def assert_grad_close(got, want, rtol=1e-4, floor=1e-6):
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    mask = np.abs(want) > floor
    if not mask.any():
        return
    rel = np.abs(got[mask] - want[mask]) / np.abs(want[mask])
    assert rel.max() < rtol, f"max relative error {rel.max()}"


class TestBasicGradients:
    def test_square_at_three(self):
        x = ad.leaf(3.0)
        loss = ad.mul(x, x)
        grads = ad.gradient(loss, [x])
        assert grads[x].item() == pytest.approx(6.0)

    def test_mse_gradient_formula(self):
        y = np.array([1.0, 2.0, 3.0])
        yhat = ad.leaf([1.5, 1.0, 2.0])
        loss = ad.mse(yhat, y)
        grads = ad.gradient(loss, [yhat])
        want = 2.0 / 3.0 * (np.array([1.5, 1.0, 2.0]) - y)
        assert np.allclose(grads[yhat].data, want, atol=1e-6)

    def test_non_scalar_loss_rejected(self):
        x = ad.leaf([1.0, 2.0])
        with pytest.raises(ContractError):
            ad.gradient(x, [x])

    def test_unused_leaf_gets_zero_gradient(self):
        x = ad.leaf([1.0, 2.0])
        z = ad.leaf(5.0)
        grads = ad.gradient(ad.mean_all(x), [x, z])
        assert grads[z].item() == 0.0

    def test_shared_subexpression_accumulates(self):
        x = ad.leaf(2.0)
        y = ad.add(ad.mul(x, x), ad.mul(x, x))  # 2x^2
        grads = ad.gradient(y, [x])
        assert grads[x].item() == pytest.approx(8.0)

    def test_reshape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.reshape(ad.leaf([1.0, 2.0, 3.0]), [2, 2])


class TestTwoLayerDenseFiniteDifferences:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(4, 3))
        w1 = rng.normal(size=(3, 5)) * 0.7
        b1 = rng.normal(size=(5,)) * 0.1
        w2 = rng.normal(size=(5, 2)) * 0.7
        b2 = rng.normal(size=(2,)) * 0.1
        target = rng.normal(size=(4, 2))
        sig = ActivationKind("sigmoid")

        def build(w1v, b1v, w2v, b2v):
            lw1, lb1 = ad.leaf(w1v), ad.leaf(b1v)
            lw2, lb2 = ad.leaf(w2v), ad.leaf(b2v)
            h = ad.activation(sig, ad.add(ad.matmul(ad.leaf(x), lw1), lb1))
            out = ad.activation(ActivationKind("tanh"), ad.add(ad.matmul(h, lw2), lb2))
            return ad.mse(out, target), (lw1, lb1, lw2, lb2)

        loss, leaves = build(w1, b1, w2, b2)
        grads = ad.gradient(loss, list(leaves))

        params = [w1, b1, w2, b2]
        for idx in range(4):
            def f(p, idx=idx):
                args = list(params)
                args[idx] = p
                l, _ = build(*args)
                return float(l.value)

            want = fd_gradient(f, params[idx])
            assert_grad_close(grads[leaves[idx]].data, want)


class TestConvPoolGradients:
    def test_conv_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 6, 6, 2))
        k = rng.normal(size=(3, 3, 2, 3)) * 0.5
        target = rng.normal(size=(2, 4, 4, 3))

        def build(xv, kv):
            lx, lk = ad.leaf(xv), ad.leaf(kv)
            out = ad.activation(ActivationKind("tanh"), ad.conv2d(lx, lk, 1, "valid"))
            return ad.mse(out, target), (lx, lk)

        loss, (lx, lk) = build(x, k)
        grads = ad.gradient(loss, [lx, lk])
        assert_grad_close(grads[lk].data, fd_gradient(lambda p: float(build(x, p)[0].value), k))
        assert_grad_close(grads[lx].data, fd_gradient(lambda p: float(build(p, k)[0].value), x))

    def test_conv_same_padding_stride_two(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(1, 5, 5, 1))
        k = rng.normal(size=(3, 3, 1, 2)) * 0.5
        target = rng.normal(size=(1, 3, 3, 2))

        def build(kv):
            out = ad.conv2d(ad.leaf(x), ad.leaf(kv), 2, "same")
            return ad.mse(out, target)

        lk = ad.leaf(k)
        out = ad.conv2d(ad.leaf(x), lk, 2, "same")
        loss = ad.mse(out, target)
        grads = ad.gradient(loss, [lk])
        assert_grad_close(grads[lk].data, fd_gradient(lambda p: float(build(p).value), k))

    def test_maxpool_routes_gradient_to_max(self):
        x = np.array([[[[1.0], [2.0]], [[4.0], [3.0]]]])  # [1,2,2,1]
        lx = ad.leaf(x)
        out = ad.max_pool2d(lx, (2, 2), 2, "valid")
        loss = ad.sum_all(out)
        grads = ad.gradient(loss, [lx])
        assert grads[lx].data.reshape(2, 2).tolist() == [[0, 0], [1, 0]]

    def test_maxpool_finite_differences_tie_free(self):
        rng = np.random.default_rng(1)
        # spread values so no window has near-ties within the FD step
        x = rng.permutation(36).reshape(1, 6, 6, 1).astype(np.float64)
        target = rng.normal(size=(1, 3, 3, 1))

        def build(xv):
            return ad.mse(ad.max_pool2d(ad.leaf(xv), (2, 2), 2, "valid"), target)

        lx = ad.leaf(x)
        loss = ad.mse(ad.max_pool2d(lx, (2, 2), 2, "valid"), target)
        grads = ad.gradient(loss, [lx])
        assert_grad_close(grads[lx].data, fd_gradient(lambda p: float(build(p).value), x))


class TestStochasticAndNormLayers:
    def test_dropout_scales_and_masks(self):
        rng = np.random.default_rng(0)
        x = ad.leaf(np.ones((100,)))
        out = ad.dropout(x, 0.5, rng)
        vals = np.unique(out.value)
        assert set(vals.tolist()) <= {0.0, 2.0}

    def test_noise_gradient_is_identity(self):
        rng = np.random.default_rng(0)
        x = ad.leaf(np.ones((5,)))
        out = ad.gaussian_noise(x, 0.3, rng)
        grads = ad.gradient(ad.sum_all(out), [x])
        assert np.allclose(grads[x].data, 1.0)

    def test_batch_norm_train_normalizes(self):
        rng = np.random.default_rng(2)
        x = ad.leaf(rng.normal(3.0, 2.0, size=(50, 4)))
        gamma, beta = ad.leaf(np.ones(4)), ad.leaf(np.zeros(4))
        out, mu, var = ad.batch_norm_train(x, gamma, beta, eps=1e-3)
        assert np.allclose(out.value.mean(axis=0), 0, atol=1e-7)
        assert np.allclose(mu, x.value.mean(axis=0))

    def test_batch_norm_gradient_matches_fd(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(6, 3))
        gamma = rng.normal(size=(3,))
        beta = rng.normal(size=(3,))
        target = rng.normal(size=(6, 3))

        def build(xv, gv, bv):
            out, _, _ = ad.batch_norm_train(ad.leaf(xv), ad.leaf(gv), ad.leaf(bv), 1e-3)
            return ad.mse(out, target)

        lx, lg, lb = ad.leaf(x), ad.leaf(gamma), ad.leaf(beta)
        out, _, _ = ad.batch_norm_train(lx, lg, lb, 1e-3)
        loss = ad.mse(out, target)
        grads = ad.gradient(loss, [lx, lg, lb])
        assert_grad_close(grads[lx].data, fd_gradient(lambda p: float(build(p, gamma, beta).value), x))
        assert_grad_close(grads[lg].data, fd_gradient(lambda p: float(build(x, p, beta).value), gamma))
        assert_grad_close(grads[lb].data, fd_gradient(lambda p: float(build(x, gamma, p).value), beta))


class TestLossesAndPenalties:
    def test_crossentropy_fd(self):
        rng = np.random.default_rng(8)
        logits = rng.normal(size=(3, 4))
        target = np.eye(4)[[0, 2, 1]]

        def build(lv):
            probs = ad.activation(ActivationKind("softmax"), ad.leaf(lv))
            return ad.categorical_crossentropy(probs, target)

        ll = ad.leaf(logits)
        loss = ad.categorical_crossentropy(ad.activation(ActivationKind("softmax"), ll), target)
        grads = ad.gradient(loss, [ll])
        assert_grad_close(grads[ll].data, fd_gradient(lambda p: float(build(p).value), logits))

    def test_penalties(self):
        w = ad.leaf([[1.0, -2.0], [0.5, 0.0]])
        l1 = ad.l1_penalty(w, 0.1)
        assert float(l1.value) == pytest.approx(0.35)
        l2 = ad.l2_penalty(w, 0.1)
        assert float(l2.value) == pytest.approx(0.1 * 5.25)
        grads = ad.gradient(ad.add(l1, l2), [w])
        want = 0.1 * np.sign(w.value) + 0.2 * w.value
        assert np.allclose(grads[w].data, want, atol=1e-6)

    def test_unit_mean_selects_channel(self):
        x = ad.leaf(np.arange(12.0).reshape(2, 2, 3))
        obj = ad.unit_mean(x, 1)
        assert float(obj.value) == pytest.approx(np.arange(12.0).reshape(2, 2, 3)[..., 1].mean())
        grads = ad.gradient(obj, [x])
        g = grads[x].data
        assert np.allclose(g[..., 1], 0.25)
        assert np.allclose(g[..., 0], 0) and np.allclose(g[..., 2], 0)
