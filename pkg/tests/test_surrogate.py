import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airfl.ota import OtaConfig
from airfl.surrogate import (
    BoundConstants,
    SelectionVector,
    bound_after_T,
    contraction_phi,
    dropout_term,
    objective_r,
)


def straight_line_r(q, e, h, S, P, sigma2):
    """Loop-by-loop evaluation used as an independent oracle."""
    U = len(S)
    dropped = 0.0
    kept = 0.0
    worst = 0.0
    for u in range(U):
        if e[u]:
            kept += S[u]
            gain = abs(sum(np.conj(q[n]) * h[u][n] for n in range(len(q)))) ** 2
            worst = max(worst, S[u] ** 2 / gain)
        else:
            dropped += S[u]
    return 4.0 / U ** 2 * dropped ** 2 + sigma2 / (P * kept ** 2) * worst


def test_all_selected_equal_counts_has_no_dropout():
    assert dropout_term(np.ones(3), [5, 5, 5]) == 0.0


def test_empty_selection_is_infinite():
    assert objective_r(np.array([1.0]), [False, False], np.ones((2, 1)), [1, 1],
                       OtaConfig()) == np.inf


def test_hand_example():
    cfg = OtaConfig(max_power=1.0, noise_power=1.0)
    h = np.array([[1.0], [2.0]])
    assert objective_r(np.array([1.0]), [1, 1], h, [1.0, 1.0], cfg) == pytest.approx(0.25)


def test_zero_gain_selected_user_is_infinite():
    cfg = OtaConfig()
    h = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert objective_r(np.array([1.0, 0.0]), [1, 1], h, [1.0, 1.0], cfg) == np.inf


@settings(max_examples=80)
@given(st.integers(0, 100_000), st.integers(1, 6), st.integers(1, 4))
def test_matches_straight_line(seed, U, N):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((U, N)) + 1j * rng.standard_normal((U, N))
    q = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    q /= np.linalg.norm(q)
    S = rng.integers(1, 500, U).astype(float)
    e = rng.random(U) < 0.5
    e[0] = True
    cfg = OtaConfig(max_power=rng.uniform(0.1, 2), noise_power=rng.uniform(0, 1))
    want = straight_line_r(q, e, h, S, cfg.max_power, cfg.noise_power)
    assert objective_r(q, e, h, S, cfg) == pytest.approx(want, rel=1e-12)
    # invariant to a global phase of q
    psi = rng.uniform(0, 2 * np.pi)
    assert objective_r(np.exp(1j * psi) * q, e, h, S, cfg) == pytest.approx(want, rel=1e-10)


def test_selection_vector_threshold():
    sv = SelectionVector.from_relaxed([0.9, 0.4, 1.3])
    np.testing.assert_array_equal(sv.binary, [True, False, True])
    assert sv.relaxed.max() == 1.0
    assert sv.count == 2


def test_phi_examples():
    assert contraction_phi(0.0, BoundConstants(mu=2.0, lipschitz=2.0)) == 0.0
    k = BoundConstants(alpha2=2.0)
    assert contraction_phi(1 / (2 * k.alpha2), k) == pytest.approx(1.0)
    assert contraction_phi(0.25, BoundConstants(1.0, 10.0, 1.0, 1.0)) == pytest.approx(0.95)
    with pytest.raises(ValueError):
        contraction_phi(-1.0)


def test_bound_examples():
    k = BoundConstants(mu=3.0, lipschitz=3.0)
    assert bound_after_T(np.zeros(5), 7.0, k) == 0.0
    k = BoundConstants()
    r0 = 0.2
    assert bound_after_T([r0], 4.0, k) == pytest.approx(
        contraction_phi(r0, k) * 4.0 + k.alpha1 / k.lipschitz * r0)


def test_bound_unrolled_recursion():
    k = BoundConstants(mu=0.5, lipschitz=4.0, alpha1=0.3, alpha2=1.5)
    r = np.array([0.1, 0.05, 0.3, 0.2])
    gap = 2.0
    # F_{t+1} - F* <= phi_t (F_t - F*) + alpha1/L r_t, unrolled forward
    val = gap
    for x in r:
        val = contraction_phi(x, k) * val + k.alpha1 / k.lipschitz * x
    # the closed form uses the phi of every round on the initial gap but skips phi_0 on r_0
    phis = [contraction_phi(x, k) for x in r]
    want = np.prod(phis) * gap + k.alpha1 / k.lipschitz * (
        r[0] * phis[1] * phis[2] * phis[3] + r[1] * phis[2] * phis[3] + r[2] * phis[3] + r[3])
    assert bound_after_T(r, gap, k) == pytest.approx(want)
    assert val == pytest.approx(want)


def test_bound_monotone_in_r():
    rng = np.random.default_rng(0)
    k = BoundConstants()
    for _ in range(20):
        r = rng.uniform(0, 0.4, 6)
        bigger = r + rng.uniform(0, 0.05, 6)
        assert bound_after_T(bigger, 1.0, k) >= bound_after_T(r, 1.0, k)
