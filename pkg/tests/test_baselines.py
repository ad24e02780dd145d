import itertools
from dataclasses import replace

import numpy as np
import pytest

from airfl import baselines as bl
from airfl._validation import ConfigurationError
from airfl.channel import AntennaLayout, ChannelSet, UserLink, build_los_channel
from airfl.ota import OtaConfig
from airfl.pdd import PddConfig, solve
from airfl.surrogate import objective_r
from conftest import los_instance

REGION = dict(region_lo=0.0, region_hi=8.0, min_gap=0.5)


def _mrt_r(ch, layout, cfg):
    c = ch.at_layout(layout)
    sel = np.ones(c.n_users, bool)
    return objective_r(bl.mrt_beamformer(c, sel, c.sample_counts), sel, c, c.sample_counts, cfg)


@pytest.mark.parametrize("kw", [dict(kind="nope"), dict(kind="aps", grid_resolution=0.0),
                                dict(kind="rma", grid_resolution=0.1),
                                dict(kind="dc-like-greedy"), dict(kind="fpa", threshold=1.0),
                                dict(kind="mrt", seed=1), dict(kind="rma", seed=-1)])
def test_spec_validation(kw):
    with pytest.raises(ConfigurationError):
        bl.BaselineSpec(**kw)


def test_mrt_single_user():
    h = np.array([[1 + 1j, 2.0, -1j]])
    q = bl.mrt_beamformer(h, [True], [5.0])
    np.testing.assert_allclose(q, h[0] / np.linalg.norm(h[0]))


def test_mrt_orthogonal_pair_balances_gains():
    h = np.array([[1.0, 0.0], [0.0, 1.0]])
    q = bl.mrt_beamformer(h, [True, True], [3.0, 3.0])
    g = np.abs(h @ np.conj(q)) ** 2
    assert g[0] == pytest.approx(g[1])
    np.testing.assert_allclose(np.abs(q), [2 ** -0.5, 2 ** -0.5])


def test_mrt_cancelling_sum_falls_back():
    h = np.array([[1.0, 1.0], [-1.0, -1.0]])
    q = bl.mrt_beamformer(h, [True, True], [1.0, 1.0])
    np.testing.assert_allclose(q, h[0] / np.linalg.norm(h[0]))


def test_select_all_keeps_everyone():
    ch = los_instance(1, 5, 3)
    res = bl.select_all(ch, ch.sample_counts, OtaConfig(), PddConfig(max_outer=5))
    assert res.selected_count == 5


def test_fpa_and_rma_layouts_are_feasible():
    assert bl.fpa_layout(4, **REGION).is_feasible()
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert bl.rma_layout(int(rng.integers(1, 10)), rng, **REGION).is_feasible()


def test_rma_fallback_to_equispaced():
    lay = bl.rma_layout(17, np.random.default_rng(0), max_tries=5, **REGION)
    np.testing.assert_allclose(lay.positions, AntennaLayout.equispaced(17, 0, 8, 0.5).positions)


def test_region_too_small_rejected():
    with pytest.raises(ConfigurationError):
        bl.rma_layout(20, np.random.default_rng(0), **REGION)


def test_aps_single_antenna_is_exhaustive():
    cfg = OtaConfig()
    ch = los_instance(3, 5, 1)
    lay = bl.aps_layout(ch, ch.sample_counts, cfg, resolution=0.02)
    grid = np.linspace(0, 8, 401)
    vals = [_mrt_r(ch, AntennaLayout(np.array([g])), cfg) for g in grid]
    assert _mrt_r(ch, lay, cfg) == pytest.approx(min(vals), rel=1e-12)


def test_aps_beats_rma_mostly():
    cfg = OtaConfig()
    wins = 0
    for seed in range(50):
        ch = los_instance(seed, 6, 3)
        aps = bl.aps_layout(ch, ch.sample_counts, cfg, max_sweeps=4)
        rma = bl.rma_layout(3, np.random.default_rng(seed), **REGION)
        wins += _mrt_r(ch, aps, cfg) <= _mrt_r(ch, rma, cfg)
    assert wins >= 45


def test_select_all_never_beats_joint_selection_mostly():
    cfg = OtaConfig()
    fast = PddConfig(max_outer=8)
    ok = 0
    for seed in range(50):
        ch = los_instance(seed, 5, 2)
        ok += (bl.select_all(ch, ch.sample_counts, cfg, fast).r_value
               >= solve(ch, ch.sample_counts, cfg, fast).r_value * (1 - 1e-12))
    assert ok >= 45


def test_pdd_beamformer_beats_mrt_at_fixed_selection_mostly():
    cfg = OtaConfig()
    frozen = PddConfig(freeze_selection=True, freeze_layout=True, max_outer=8)
    ok = 0
    for seed in range(50):
        ch = los_instance(seed, 5, 3)
        lay = bl.fpa_layout(3, **REGION)
        fixed = ch.at_layout(lay)
        pdd = solve(fixed, fixed.sample_counts, cfg, frozen, init_layout=lay)
        ok += pdd.r_value <= _mrt_r(ch, lay, cfg) * (1 + 1e-12)
    assert ok >= 45


def test_dc_greedy_limits_and_monotone():
    cfg = OtaConfig()
    ch = los_instance(4, 8, 3)
    S = ch.sample_counts
    assert bl.dc_like_greedy(ch, S, cfg, np.inf).selected_count == 8
    assert bl.dc_like_greedy(ch, S, cfg, 1e-300).selected_count == 1
    counts = [bl.dc_like_greedy(ch, S, cfg, J).selected_count for J in np.logspace(8, 2, 25)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    with pytest.raises(ConfigurationError):
        bl.dc_like_greedy(ch, S, cfg, 0.0)


def test_dc_greedy_respects_budget():
    cfg = OtaConfig()
    ch = los_instance(5, 8, 3)
    S = ch.sample_counts
    J = 1e5
    res = bl.dc_like_greedy(ch, S, cfg, J, bl.fpa_layout(3, **REGION))
    noise = bl.noise_budget(res.beamformer, res.selection, ch.at_layout(res.layout), S, cfg)
    assert noise <= J or res.selected_count == 1


def test_oracle_single_user():
    cfg = OtaConfig()
    ch = los_instance(1, 1, 1)
    res = bl.brute_force_oracle(ch, ch.sample_counts, cfg)
    assert res.r_value == pytest.approx(cfg.noise_power / (cfg.max_power * abs(ch.h[0, 0]) ** 2))


def test_oracle_drops_weak_user_iff_it_pays():
    lay = AntennaLayout(np.zeros(1))
    for weak, keep in ((1e-12, False), (1e-1, True)):
        links = [UserLink(10.0, 0.0, 1.0, 10), UserLink(10.0, 0.0, weak, 10)]
        ch = build_los_channel(lay, links)
        cfg = OtaConfig(max_power=1.0, noise_power=1e-3)
        res = bl.brute_force_oracle(ch, ch.sample_counts, cfg)
        both = objective_r(np.ones(1), [True, True], ch, [10, 10], cfg)
        alone = objective_r(np.ones(1), [True, False], ch, [10, 10], cfg)
        assert bool(res.selection[1]) is keep
        assert (both < alone) is keep


def _enumerate_n1(ch, S, cfg):
    best = np.inf
    for bits in itertools.product([False, True], repeat=ch.n_users):
        if any(bits):
            best = min(best, objective_r(np.ones(1), np.array(bits), ch, S, cfg))
    return best


def test_oracle_matches_plain_enumeration():
    cfg = OtaConfig()
    for seed in range(10):
        ch = los_instance(seed, 7, 1)
        res = bl.brute_force_oracle(ch, ch.sample_counts, cfg)
        assert res.r_value == pytest.approx(_enumerate_n1(ch, ch.sample_counts, cfg), rel=1e-12)


def test_two_antenna_oracle_beats_random_beamformers():
    cfg = OtaConfig()
    ch = los_instance(2, 4, 2)
    S = ch.sample_counts
    res = bl.brute_force_oracle(ch, S, cfg, step=0.02)
    rng = np.random.default_rng(0)
    best = np.inf
    for _ in range(3000):
        q = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        q /= np.linalg.norm(q)
        for bits in itertools.product([False, True], repeat=4):
            if any(bits):
                best = min(best, objective_r(q, np.array(bits), ch, S, cfg))
    assert res.r_value <= best * 1.01


def test_oracle_limits():
    with pytest.raises(ConfigurationError):
        bl.brute_force_oracle(ChannelSet(np.ones((13, 1))), np.ones(13), OtaConfig())
    with pytest.raises(ConfigurationError):
        bl.brute_force_oracle(ChannelSet(np.ones((2, 3))), np.ones(2), OtaConfig())


@pytest.mark.parametrize("kind", bl.KINDS)
def test_run_baseline_outputs_are_feasible(kind):
    cfg = OtaConfig()
    ch = los_instance(7, 4, 2)
    spec = bl.BaselineSpec(kind, threshold=1e6 if kind == bl.DC_LIKE_GREEDY else None,
                           seed=3 if kind == bl.RMA else None)
    res = bl.run_baseline(spec, ch, ch.sample_counts, cfg, PddConfig(max_outer=5))
    assert abs(np.linalg.norm(res.beamformer) - 1) < 1e-10
    assert res.selection.dtype == bool and res.selection.any()
    assert res.layout.is_feasible()
    assert res.r_value == pytest.approx(objective_r(
        res.beamformer, res.selection, ch.at_layout(res.layout), ch.sample_counts, cfg))


def test_fixed_layout_solve_keeps_layout():
    ch = los_instance(8, 4, 3)
    lay = bl.fpa_layout(3, **REGION)
    res = bl.fixed_layout_solve(ch, ch.sample_counts, OtaConfig(), lay,
                                replace(PddConfig(), max_outer=5))
    np.testing.assert_array_equal(res.layout.positions, lay.positions)
