import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benign_lab.errors import ConfigurationError, DimensionError
from benign_lab.oracle import power_iteration_norm
from benign_lab.shallow_net import (ActivationSpec, NetParams, forward, grad_wrt_weights,
                                    init_params, load_params, save_params, signs_to_a,
                                    slrelu, slrelu_prime, slrelu_second)


def net(W, signs, act):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    return NetParams(W, signs_to_a(signs), act)


class TestActivation:
    def test_values(self, act):
        assert slrelu(0.0, act) == 0.0
        assert slrelu(1.0, act) == pytest.approx(0.9375, abs=1e-15)
        assert slrelu(-1.0, act) == pytest.approx(-0.5625, abs=1e-15)

    def test_continuity_at_knots(self, act):
        k = act.knot
        assert slrelu(k, act) == pytest.approx((3 + act.gamma) / (4 * act.H), abs=1e-15)
        eps = 1e-12
        for z in (k, -k):
            assert abs(slrelu(z + eps, act) - slrelu(z - eps, act)) < 1e-11
            assert abs(slrelu_prime(z + eps, act) - slrelu_prime(z - eps, act)) < 1e-11

    def test_derivative_values(self, act):
        assert slrelu_prime(0.0, act) == 0.75
        assert slrelu_prime(5.0, act) == 1.0
        assert slrelu_prime(-5.0, act) == 0.5

    def test_second_derivative_at_knot_uses_middle_branch(self, act):
        assert slrelu_second(act.knot, act) == (1 - act.gamma) * act.H / 2
        assert slrelu_second(-act.knot, act) == (1 - act.gamma) * act.H / 2
        assert slrelu_second(3.0, act) == 0.0

    def test_vectorized_matches_scalar(self, act):
        z = np.linspace(-3, 3, 41)
        np.testing.assert_array_equal(slrelu(z, act), [slrelu(float(v), act) for v in z])

    def test_sandwich_million(self, rng):
        act = ActivationSpec(0.3, 4.0)
        z = rng.normal(scale=2.0, size=10 ** 6)
        d = slrelu_prime(z, act)
        assert d.min() >= act.gamma and d.max() <= 1.0
        h = 1e-3
        keep = np.abs(np.abs(z) - act.knot) > 2 * h
        zz = z[keep]
        d2 = (slrelu(zz + h, act) - 2 * slrelu(zz, act) + slrelu(zz - h, act)) / h ** 2
        assert np.abs(d2).max() <= act.H + 1e-6

    @pytest.mark.parametrize("g,H", [(0.0, 1.0), (1.5, 1.0), (0.5, 0.0), (0.5, math.inf)])
    def test_rejects(self, g, H):
        with pytest.raises(ConfigurationError):
            ActivationSpec(g, H)


class TestInit:
    def test_zero_scale(self, act):
        assert np.all(init_params(5, 7, 0.0, act, 1).W == 0.0)

    def test_second_layer_magnitude(self, act):
        p = init_params(4, 3, 1.0, act, 0)
        np.testing.assert_array_equal(np.abs(p.a), 0.5)

    def test_norm_concentration(self, act):
        m, p, w = 64, 1024, 1e-3
        ok = sum(0.9 <= np.sum(init_params(m, p, w, act, s).W ** 2) / (m * p * w * w) <= 1.1
                 for s in range(100))
        assert ok >= 95

    def test_signs_independent_of_weight_seed(self, act):
        a = init_params(8, 4, 1.0, act, 1, sign_seed=5)
        b = init_params(8, 4, 1.0, act, 2, sign_seed=5)
        np.testing.assert_array_equal(a.a, b.a)
        assert not np.array_equal(a.W, b.W)

    def test_deterministic(self, act):
        assert init_params(6, 9, 0.1, act, 3).W.tobytes() == init_params(6, 9, 0.1, act, 3).W.tobytes()

    def test_rejects_bad_second_layer(self, act):
        with pytest.raises(ConfigurationError):
            NetParams(np.zeros((2, 3)), np.array([0.5, 0.5]), act)
        with pytest.raises(DimensionError):
            NetParams(np.zeros((2, 3)), np.ones(3) / math.sqrt(3), act)


class TestForward:
    def test_zero_weights(self, act, rng):
        p = net(np.zeros((3, 5)), [1, -1, 1], act)
        assert forward(p, rng.normal(size=5)) == 0.0

    def test_antisymmetric_heads_cancel(self, act, rng):
        w = rng.normal(size=6)
        p = net(np.vstack([w, w]), [1, -1], act)
        np.testing.assert_array_equal(forward(p, rng.normal(size=(10, 6))), 0.0)

    def test_single_neuron(self, act):
        p = net([[1.0, 0.0]], [1], act)
        assert forward(p, np.array([1.0, 0.0])) == pytest.approx(0.9375)

    def test_batch_matches_single(self, act, rng):
        p = init_params(4, 6, 1.0, act, 0)
        X = rng.normal(size=(5, 6))
        np.testing.assert_allclose(forward(p, X), [forward(p, x) for x in X], rtol=1e-14)

    def test_dimension_mismatch(self, act):
        with pytest.raises(DimensionError):
            forward(init_params(2, 3, 1.0, act, 0), np.ones(4))


class TestGradient:
    def test_zero_input(self, act):
        p = init_params(3, 4, 1.0, act, 0)
        assert np.all(grad_wrt_weights(p, np.zeros(4)) == 0.0)

    def test_hand_value(self, act):
        p = net([[0.0, 0.0]], [1], act)
        np.testing.assert_allclose(grad_wrt_weights(p, np.array([2.0, 0.0])), [[1.5, 0.0]])

    def test_finite_differences(self, act, rng):
        p = init_params(4, 8, 1.0, act, 2)
        x = rng.normal(size=8)
        h = 1e-5
        num = np.empty_like(p.W)
        for j in range(4):
            for k in range(8):
                Wp, Wm = p.W.copy(), p.W.copy()
                Wp[j, k] += h
                Wm[j, k] -= h
                num[j, k] = (forward(p.with_weights(Wp), x) - forward(p.with_weights(Wm), x)) / (2 * h)
        g = grad_wrt_weights(p, x)
        assert np.abs(num - g).max() / np.abs(g).max() <= 1e-6


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 31), m=st.integers(1, 8), p=st.integers(1, 10),
       gamma=st.floats(0.05, 1.0), H=st.floats(0.1, 10.0), scale=st.floats(0.01, 5.0))
def test_structural_inequalities(seed, m, p, gamma, H, scale):
    act = ActivationSpec(gamma, H)
    r = np.random.default_rng(seed)
    W = r.normal(scale=scale, size=(m, p))
    V = r.normal(scale=scale, size=(m, p))
    x, x2 = r.normal(size=p), r.normal(size=p)
    a = signs_to_a(r.choice([-1, 1], size=m))
    pw, pv = NetParams(W, a, act), NetParams(V, a, act)
    sq = float(x @ x)
    # gradient-norm sandwich
    gsq = float(np.sum(grad_wrt_weights(pw, x) ** 2))
    assert gamma ** 2 * sq - 1e-9 <= gsq <= sq + 1e-9
    # Lipschitz in the input
    lip = power_iteration_norm(W) * float(np.linalg.norm(x - x2))
    assert abs(forward(pw, x) - forward(pw, x2)) <= lip * (1 + 1e-9) + 1e-9
    # smoothness residual
    resid = abs(forward(pw, x) - forward(pv, x) - np.sum(grad_wrt_weights(pv, x) * (W - V)))
    bound = H * sq / (2 * math.sqrt(m)) * np.linalg.norm(W - V, 2) ** 2
    assert resid <= bound + 1e-9


class TestCheckpoint:
    def test_round_trip(self, tmp_path, act):
        p = init_params(5, 7, 0.3, act, 4)
        save_params(p, tmp_path / "w.bnet")
        q = load_params(tmp_path / "w.bnet")
        assert q.W.tobytes() == p.W.tobytes()
        np.testing.assert_array_equal(q.a, p.a)
        assert q.act == act

    def test_bad_size(self, tmp_path, act):
        save_params(init_params(2, 2, 1.0, act, 0), tmp_path / "w.bnet")
        raw = (tmp_path / "w.bnet").read_bytes()
        (tmp_path / "w.bnet").write_bytes(raw + b"\0")
        with pytest.raises(ConfigurationError):
            load_params(tmp_path / "w.bnet")
