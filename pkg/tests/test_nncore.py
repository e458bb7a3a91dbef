import math

import numpy as np
import pytest

from eduembed.nncore import (NumericError, OptimState, ParamStore, adam_step,
                             affine, affine_backward, bce, bce_backward,
                             grad_check, load_checkpoint, log_softmax_excluding,
                             new_rng, save_checkpoint, sigmoid, sigmoid_backward)


class TestAffine:
    def test_identity(self):
        x = np.array([1.5, -2.0, 0.25])
        y, _ = affine(x, np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(y, x)

    def test_known_value(self):
        y, _ = affine(np.array([1.0, 2.0]), np.eye(2), np.array([3.0, 3.0]))
        np.testing.assert_allclose(y, [4.0, 5.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            affine(np.ones(3), np.ones((2, 2)), np.ones(2))

    def test_gradient_vs_central_differences(self):
        rng = new_rng(3)
        store = ParamStore()
        W = store.add("W", rng.normal(size=(5, 7)))
        b = store.add("b", rng.normal(size=7))
        x = rng.normal(size=(4, 5))
        t = rng.integers(0, 2, size=(4, 7)).astype(float)

        def loss_fn():
            store.zero_grads()
            y, cache = affine(x, W.value, b.value)
            s = sigmoid(y)
            value, bc = bce(s, t)
            dp = bce_backward(bc)
            dy = sigmoid_backward(dp, s)
            _, dW, db = affine_backward(dy, cache)
            W.grad += dW
            b.grad += db
            return value

        assert grad_check(loss_fn, store) < 1e-4


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_known_value(self):
        assert abs(sigmoid(2.0) - 0.880797) < 1e-6

    def test_symmetry(self):
        z = new_rng(0).normal(scale=3.0, size=50)
        np.testing.assert_allclose(sigmoid(-z), 1.0 - sigmoid(z), atol=1e-12)

    def test_stable_at_large_magnitudes(self):
        out = sigmoid(np.array([-700.0, 700.0]))
        assert np.all(np.isfinite(out))
        assert out[0] >= 0.0 and out[1] <= 1.0


class TestBce:
    def test_half_is_log_two(self):
        value, _ = bce(np.array([0.5]), np.array([1.0]))
        assert abs(value - math.log(2.0)) < 1e-12

    def test_saturated_correct(self):
        value, _ = bce(np.array([1.0 - 1e-7]), np.array([1.0]))
        assert value < 1e-6

    def test_batch_value(self):
        # (-ln 0.8 - ln 0.7) / 2
        value, _ = bce(np.array([0.8, 0.3]), np.array([1.0, 0.0]))
        assert abs(value - 0.2899092476) < 1e-9

    def test_clamps_out_of_range(self):
        value, _ = bce(np.array([0.0]), np.array([0.0]))
        assert np.isfinite(value)


class TestLogSoftmaxExcluding:
    def test_two_equal_scores(self):
        assert abs(log_softmax_excluding(np.array([0.0, 0.0]), 0)) < 1e-12

    def test_three_scores(self):
        value = log_softmax_excluding(np.array([1.0, 0.0, 0.0]), 0)
        assert abs(value - math.log(2.0)) < 1e-9

    def test_shift_invariance(self):
        scores = new_rng(1).normal(size=6)
        base = log_softmax_excluding(scores, 2)
        shifted = log_softmax_excluding(scores + 13.25, 2)
        assert abs(shifted - (base + 13.25)) < 1e-9

    def test_too_short(self):
        with pytest.raises(ValueError):
            log_softmax_excluding(np.array([1.0]), 0)


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        store = ParamStore()
        p = store.add("w", np.array([1.0, -2.0]))
        optim = OptimState(store, lr=0.5)
        adam_step(store, optim)
        np.testing.assert_array_equal(p.value, [1.0, -2.0])

    def test_first_step_magnitude(self):
        store = ParamStore()
        p = store.add("w", np.array([1.0]))
        optim = OptimState(store, lr=0.1)
        p.grad[:] = 1.0
        adam_step(store, optim)
        assert abs(p.value[0] - 0.9) < 1e-6

    def test_matches_reference_recurrence(self):
        rng = new_rng(5)
        store = ParamStore()
        p = store.add("w", np.array([0.5, -1.0, 2.0]))
        optim = OptimState(store, lr=0.01)
        ref = p.value.copy()
        m = np.zeros(3)
        v = np.zeros(3)
        for t in range(1, 20):
            g = rng.normal(size=3)
            p.grad[:] = g
            adam_step(store, optim)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(p.value, ref, rtol=1e-10)

    def test_deterministic_across_runs(self):
        def run():
            rng = new_rng(9)
            store = ParamStore()
            p = store.add("w", rng.normal(size=16))
            optim = OptimState(store, lr=0.03)
            for _ in range(25):
                p.grad[:] = rng.normal(size=16)
                adam_step(store, optim)
            return p.value.tobytes()

        assert run() == run()

    def test_nonfinite_gradient_names_parameter(self):
        store = ParamStore()
        store.add("alpha", np.array([1.0]))
        bad = store.add("beta", np.array([1.0]))
        optim = OptimState(store)
        bad.grad[:] = np.nan
        with pytest.raises(NumericError, match="beta"):
            adam_step(store, optim)

    def test_step_counter_increases(self):
        store = ParamStore()
        store.add("w", np.zeros(2))
        optim = OptimState(store)
        adam_step(store, optim)
        adam_step(store, optim)
        assert optim.step == 2

    def test_gradients_zeroed_after_step(self):
        store = ParamStore()
        p = store.add("w", np.ones(3))
        optim = OptimState(store)
        p.grad[:] = 2.0
        adam_step(store, optim)
        np.testing.assert_array_equal(p.grad, 0.0)


class TestParamStore:
    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("w", np.zeros(1))
        with pytest.raises(ValueError):
            store.add("w", np.zeros(1))

    def test_checksum_changes_with_values(self):
        store = ParamStore()
        p = store.add("w", np.zeros(4))
        before = store.checksum()
        p.value[0] = 1.0
        assert store.checksum() != before

    def test_check_finite(self):
        store = ParamStore()
        p = store.add("w", np.ones(2))
        store.check_finite()
        p.value[1] = np.inf
        with pytest.raises(NumericError):
            store.check_finite()


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = new_rng(11)
        store = ParamStore()
        store.add("alpha", rng.normal(size=(3, 4)))
        store.add("beta", rng.normal(size=7))
        path = tmp_path / "ckpt.npz"
        save_checkpoint(store, path, meta={"note": "x", "k": 3})
        loaded, meta = load_checkpoint(path)
        assert meta == {"note": "x", "k": 3}
        assert loaded.names() == ["alpha", "beta"]
        np.testing.assert_array_equal(loaded["alpha"].value, store["alpha"].value)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.npz"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)
