import numpy as np
import pytest

from slowpoints import cells
from slowpoints.errors import DimensionError


def logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_step_transcription(w, h, x):
    """Straight-line transcription of the GRU update, written independently
    of the production implementation (plain logistic, explicit loops kept to
    numpy one-liners)."""
    r = logistic(w["W_rh"] @ h + w["W_rx"] @ x + w["b_r"])
    g = logistic(w["W_gh"] @ h + w["W_gx"] @ x + w["b_g"])
    c = np.tanh(w["W_ch"] @ (r * h) + w["W_cx"] @ x + w["b_c"])
    return g * h + (1.0 - g) * c


def ugrnn_step_transcription(w, h, x):
    c = np.tanh(w["W_ch"] @ h + w["W_cx"] @ x + w["b_c"])
    g = logistic(w["W_gh"] @ h + w["W_gx"] @ x + w["b_g"])
    return g * h + (1.0 - g) * c


def lstm_step_transcription(w, h, x):
    m = w["b_c"].shape[0]
    c_prev, htil_prev = h[:m], h[m:]
    i = logistic(w["W_ih"] @ h + w["W_ix"] @ x + w["b_i"])
    f = logistic(w["W_fh"] @ h + w["W_fx"] @ x + w["b_f"])
    cand = logistic(w["W_ch"] @ htil_prev + w["W_cx"] @ x + w["b_c"])
    o = logistic(w["W_hh"] @ h + w["W_hx"] @ x + w["b_h"])
    c_new = f * c_prev + i * cand
    return np.concatenate([c_new, np.tanh(c_new) * o])


TRANSCRIPTIONS = {
    "gru": gru_step_transcription,
    "ugrnn": ugrnn_step_transcription,
    "lstm": lstm_step_transcription,
}


def make_params(kind, n, d, num_classes=3, seed=0):
    arch = cells.Architecture(kind, n, d)
    return cells.init_params(arch, num_classes, np.random.default_rng(seed))


def zero_params(kind, n, d, num_classes=3):
    p = make_params(kind, n, d, num_classes)
    for k in p.weights:
        p.weights[k][:] = 0.0
    return p


class TestStep:
    @pytest.mark.parametrize("kind", ["gru", "ugrnn"])
    def test_zero_params_halve_state(self, kind):
        p = zero_params(kind, 6, 3)
        rng = np.random.default_rng(1)
        v = rng.normal(size=6)
        assert np.allclose(cells.step(p, v, rng.normal(size=3)), 0.5 * v)

    @pytest.mark.parametrize("kind", ["gru", "ugrnn", "lstm"])
    def test_matches_independent_transcription(self, kind):
        rng = np.random.default_rng(2)
        for trial in range(5):
            p = make_params(kind, 8, 4, seed=trial)
            h = rng.normal(0, 0.5, size=8)
            x = rng.normal(0, 0.5, size=4)
            expect = TRANSCRIPTIONS[kind](p.weights, h, x)
            assert np.abs(cells.step(p, h, x) - expect).max() < 1e-12

    def test_shape_error_names_tensor(self):
        p = make_params("gru", 6, 3)
        with pytest.raises(DimensionError, match="hidden state"):
            cells.step(p, np.zeros(5), np.zeros(3))
        with pytest.raises(DimensionError, match="input"):
            cells.step(p, np.zeros(6), np.zeros(4))

    def test_deterministic(self):
        p = make_params("gru", 10, 3, seed=3)
        h = np.random.default_rng(4).normal(size=10)
        x = np.random.default_rng(5).normal(size=3)
        a = cells.step(p, h, x)
        b = cells.step(p, h, x)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("kind", ["gru", "ugrnn"])
    def test_state_stays_in_unit_box(self, kind):
        # Gate-convex combination of an interior state with a tanh candidate.
        rng = np.random.default_rng(6)
        for trial in range(50):
            p = make_params(kind, 7, 3, seed=100 + trial)
            h = rng.uniform(-0.999, 0.999, size=7)
            out = cells.step(p, h, rng.normal(size=3))
            assert np.all(np.abs(out) < 1.0)


class TestRun:
    def test_t1_reduces_to_step(self):
        p = make_params("gru", 6, 3, seed=7)
        h0 = np.random.default_rng(8).normal(size=6)
        x = np.random.default_rng(9).normal(size=(1, 3))
        traj = cells.run(p, h0, x)
        assert traj.shape == (2, 6)
        assert np.array_equal(traj[1], cells.step(p, h0, x[0]))

    def test_t3_manual_composition(self):
        p = make_params("ugrnn", 5, 2, seed=10)
        h0 = np.zeros(5)
        xs = np.random.default_rng(11).normal(size=(3, 2))
        traj = cells.run(p, h0, xs)
        h = h0
        for t in range(3):
            h = cells.step(p, h, xs[t])
            assert np.array_equal(traj[t + 1], h)

    def test_fixed_point_stays_put(self):
        # Zero-parameter GRU has its unique zero-input fixed point at the origin.
        p = zero_params("gru", 6, 3)
        traj = cells.run(p, np.zeros(6), np.zeros((10, 3)))
        assert np.abs(traj).max() == 0.0

    def test_empty_inputs_rejected(self):
        p = make_params("gru", 4, 2)
        with pytest.raises(DimensionError):
            cells.run(p, np.zeros(4), np.zeros((0, 2)))


class TestLogits:
    def test_identity_rows_select_coordinates(self):
        p = make_params("gru", 5, 2, num_classes=2)
        p.readout_w = np.array([[1.0, 0, 0, 0, 0], [0, 0, 1.0, 0, 0]])
        h = np.arange(5.0)
        assert np.array_equal(cells.logits(p, h), [0.0, 2.0])

    def test_zero_state(self):
        p = make_params("gru", 5, 2, num_classes=3)
        assert np.array_equal(cells.logits(p, np.zeros(5)), np.zeros(3))

    def test_matches_manual_dot_products(self):
        p = make_params("gru", 6, 2, num_classes=4, seed=12)
        p.readout_b = np.random.default_rng(13).normal(size=4)
        h = np.random.default_rng(14).normal(size=6)
        expect = [sum(p.readout_w[i, j] * h[j] for j in range(6)) + p.readout_b[i] for i in range(4)]
        assert np.allclose(cells.logits(p, h), expect, atol=1e-12)


class TestJacobians:
    def test_gru_zero_params_closed_form(self):
        p = zero_params("gru", 6, 3)
        j_rec, j_inp = cells.jacobians(p, np.random.default_rng(15).normal(size=6), np.zeros(3))
        assert np.allclose(j_rec, 0.5 * np.eye(6), atol=1e-14)
        assert np.abs(j_inp).max() == 0.0

    def test_lstm_zero_params_memory_block(self):
        # Memory rows: dC'/dC_prev = f = 0.5 on the diagonal, no coupling to
        # the gated-output half when all weights vanish.
        p = zero_params("lstm", 8, 3)
        h = np.random.default_rng(16).normal(size=8)
        j_rec, _ = cells.jacobians(p, h, np.zeros(3))
        assert np.allclose(j_rec[:4, :4], 0.5 * np.eye(4), atol=1e-14)
        assert np.abs(j_rec[:4, 4:]).max() == 0.0

    @pytest.mark.parametrize("kind,n", [("gru", 7), ("ugrnn", 7), ("lstm", 8)])
    def test_finite_differences(self, kind, n):
        rng = np.random.default_rng(17)
        d = 3
        for trial in range(10):
            p = make_params(kind, n, d, seed=200 + trial)
            h = rng.normal(0, 0.6, size=n)
            x = rng.normal(0, 0.6, size=d)
            j_rec, j_inp = cells.jacobians(p, h, x)
            eps = 1e-5
            for j in range(n):
                e = np.zeros(n)
                e[j] = eps
                fd = (cells.step(p, h + e, x) - cells.step(p, h - e, x)) / (2 * eps)
                assert np.abs(j_rec[:, j] - fd).max() < 1e-5
            for j in range(d):
                e = np.zeros(d)
                e[j] = eps
                fd = (cells.step(p, h, x + e) - cells.step(p, h, x - e)) / (2 * eps)
                assert np.abs(j_inp[:, j] - fd).max() < 1e-5


class TestParams:
    def test_init_bounds_and_zero_biases(self):
        p = make_params("gru", 16, 5, seed=18)
        for name, arr in p.weights.items():
            if name.startswith("b_"):
                assert np.abs(arr).max() == 0.0
            else:
                fan_in = arr.shape[1]
                assert np.abs(arr).max() <= 1.0 / np.sqrt(fan_in)

    def test_validate_names_missing_weight(self):
        p = make_params("gru", 6, 3)
        del p.weights["W_rh"]
        with pytest.raises(DimensionError, match="W_rh"):
            p.validate()

    def test_lstm_needs_even_state(self):
        with pytest.raises(ValueError):
            cells.Architecture("lstm", 7, 3)

    def test_weight_shapes_lstm_blocks(self):
        arch = cells.Architecture("lstm", 10, 4)
        shapes = arch.weight_shapes()
        assert shapes["W_ih"] == (5, 10)
        assert shapes["W_ch"] == (5, 5)
        assert shapes["W_cx"] == (5, 4)
