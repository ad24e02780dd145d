import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airfl._validation import DegenerateChannelError
from airfl.ota import (
    OtaConfig,
    aggregate,
    dbm_to_watts,
    estimator_noise_variance,
    normalization_factor,
    receive_scaling,
    transmit_weight,
    watts_to_dbm,
)


def test_dbm_round_trip():
    assert dbm_to_watts(0.0) == pytest.approx(1e-3)
    assert dbm_to_watts(-20.0) == pytest.approx(1e-5)
    assert watts_to_dbm(dbm_to_watts(13.0)) == pytest.approx(13.0)


def test_normalization_examples():
    assert normalization_factor(np.ones(4)) == pytest.approx(1.0)
    assert normalization_factor(np.zeros(5)) == 1e-12
    assert normalization_factor([3.0, 4.0]) == pytest.approx(5 / np.sqrt(2))


def test_receive_scaling_single_user():
    cfg = OtaConfig(max_power=1.0, noise_power=0.0)
    assert receive_scaling(np.array([1.0]), np.array([[1.0]]), [True], [1.0], [1.0], cfg) == 1.0


def test_receive_scaling_min_rule():
    cfg = OtaConfig(max_power=2.0, noise_power=0.0)
    h = np.array([[2.0], [1.0]])
    eta = receive_scaling(np.array([1.0]), h, [True, True], [1.0, 1.0], [1.0, 1.0], cfg)
    assert eta == pytest.approx(2.0)


def test_receive_scaling_errors():
    cfg = OtaConfig()
    with pytest.raises(ValueError):
        receive_scaling(np.array([1.0]), np.array([[1.0]]), [False], [1.0], [1.0], cfg)
    with pytest.raises(DegenerateChannelError):
        receive_scaling(np.array([1.0, 0.0]), np.array([[0.0, 1.0]]), [True], [1.0], [1.0], cfg)


def test_transmit_weight_examples():
    assert transmit_weight(np.array([1.0]), np.array([1.0]), 1, 1, 1) == pytest.approx(1.0)
    # q^H h = i needs a -i pre-rotation
    assert transmit_weight(np.array([1.0]), np.array([1j]), 1, 1, 1) == pytest.approx(-1j)
    with pytest.raises(DegenerateChannelError):
        transmit_weight(np.array([1.0, 0]), np.array([0, 1.0]), 1, 1, 1)


def _setup(seed, U=4, N=3, D=6):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((U, N)) + 1j * rng.standard_normal((U, N))
    q = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    q /= np.linalg.norm(q)
    S = rng.integers(1, 400, U).astype(float)
    g = rng.standard_normal((U, D)) * rng.uniform(0.1, 10, (U, 1))
    return h, q, S, g


def test_power_cap_reached_by_argmin_user():
    cfg = OtaConfig()
    h, q, S, g = _setup(0)
    out = aggregate(g, h, q, np.ones(4, bool), S, cfg, np.random.default_rng(0))
    p = np.abs(out.per_user_weight) ** 2
    assert np.all(p <= cfg.max_power * (1 + 1e-12))
    assert p.max() == pytest.approx(cfg.max_power, rel=1e-12)


def test_one_user_noiseless_is_exact(noiseless):
    h, q, S, g = _setup(1)
    sel = np.array([False, True, False, False])
    out = aggregate(g, h, q, sel, S, noiseless, np.random.default_rng(0))
    np.testing.assert_allclose(out.estimate, g[1], rtol=1e-10)


def test_two_equal_users_average(noiseless):
    h, q, _, g = _setup(2, U=2)
    out = aggregate(g, h, q, [True, True], [5.0, 5.0], noiseless, np.random.default_rng(0))
    np.testing.assert_allclose(out.estimate, g.mean(axis=0), rtol=1e-10)


def test_mapping_gradients_accepted(noiseless):
    h, q, S, g = _setup(3)
    sel = np.array([True, False, True, False])
    a = aggregate({0: g[0], 2: g[2]}, h, q, sel, S, noiseless, None)
    b = aggregate(g, h, q, sel, S, noiseless, None)
    np.testing.assert_array_equal(a.estimate, b.estimate)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 4))
def test_noiseless_transport_is_weighted_mean(seed, U, N):
    h, q, S, g = _setup(seed, U, N)
    sel = np.random.default_rng(seed + 1).random(U) < 0.6
    sel[seed % U] = True
    out = aggregate(g, h, q, sel, S, OtaConfig(noise_power=0.0), None)
    want = (S[sel] @ g[sel]) / S[sel].sum()
    np.testing.assert_allclose(out.estimate, want, rtol=1e-10, atol=1e-10 * np.abs(want).max())


def test_noise_variance_calibration():
    cfg = OtaConfig(noise_power=1e-5)
    h, q, S, _ = _setup(4, D=1)
    g = np.random.default_rng(9).standard_normal((4, 100_000))
    sel = np.ones(4, bool)
    out = aggregate(g, h, q, sel, S, cfg, np.random.default_rng(10))
    err = out.estimate - (S @ g) / S.sum()
    want = estimator_noise_variance(out.eta, S.sum(), cfg)
    assert np.var(err) == pytest.approx(want, rel=0.05)


def test_gradient_length_mismatch():
    h, q, S, _ = _setup(5, U=2)
    with pytest.raises(ValueError):
        aggregate({0: np.ones(3), 1: np.ones(4)}, h, q, [True, True], S[:2], OtaConfig(), None)
