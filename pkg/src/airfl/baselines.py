"""Comparison schemes and a brute-force optimum for small instances.

Every routine returns a :class:`~airfl.pdd.PddResult` so that schemes can be
swapped freely in the training loop: a unit-norm beamformer, a binary
selection and a feasible layout.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._validation import (
    ConfigurationError,
    DegenerateChannelError,
    check_sample_counts,
    check_selection,
)
from .channel import DEFAULT_WAVELENGTH, AntennaLayout
from .pdd import PddConfig, PddResult, greedy_repair, solve
from .surrogate import dropout_term, objective_r

SELECT_ALL = "select-all"
FPA = "fpa"
RMA = "rma"
APS = "aps"
MRT = "mrt"
DC_LIKE_GREEDY = "dc-like-greedy"
KINDS = (SELECT_ALL, FPA, RMA, APS, MRT, DC_LIKE_GREEDY)

ORACLE_MAX_USERS = 12
ORACLE_MAX_ANTENNAS = 2
RMA_MAX_TRIES = 10_000


@dataclass(frozen=True)
class BaselineSpec:
    """Which comparison scheme to run and its kind-specific parameters.

    Attributes:
        kind: one of ``KINDS``.
        grid_resolution: APS grid step; ``None`` means a fiftieth of the wavelength.
        threshold: noise-term budget ``J`` for ``dc-like-greedy`` (required there).
        seed: RMA draw seed; ``None`` lets the caller's generator decide.
    """

    kind: str
    grid_resolution: float = None
    threshold: float = None
    seed: int = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown baseline kind {self.kind!r}; expected one of {KINDS}")
        if self.grid_resolution is not None:
            if self.kind != APS:
                raise ConfigurationError("grid_resolution only applies to aps")
            if not self.grid_resolution > 0:
                raise ConfigurationError("grid_resolution must be positive")
        if self.kind == DC_LIKE_GREEDY:
            if self.threshold is None or not self.threshold > 0:
                raise ConfigurationError("dc-like-greedy needs a positive threshold J")
        elif self.threshold is not None:
            raise ConfigurationError("threshold only applies to dc-like-greedy")
        if self.seed is not None:
            if self.kind != RMA:
                raise ConfigurationError("seed only applies to rma")
            if int(self.seed) != self.seed or self.seed < 0:
                raise ConfigurationError("seed must be a non-negative integer")


def _result(q, selection, layout, channels, S, cfg):
    sel = np.asarray(selection, dtype=bool)
    r = objective_r(q, sel, channels, S, cfg)
    return PddResult(beamformer=q, selection=sel, layout=layout, r_value=float(r),
                     violation=0.0, iterations=(0, 0), relaxed=sel.astype(float))


def _layout_of(channels):
    return channels.layout or AntennaLayout.default(channels.n_antennas, channels.wavelength)


def mrt_beamformer(channels, selected, sample_counts):
    """Sample-weighted channel-sum alignment ``sum_u S_u h_u / ||.||`` over the selection."""
    h = np.atleast_2d(np.asarray(getattr(channels, "h", channels), dtype=np.complex128))
    sel = check_selection(selected, h.shape[0])
    if not sel.any():
        raise ConfigurationError("MRT needs a non-empty selection")
    S = check_sample_counts(sample_counts, h.shape[0])
    total = (S[sel, None] * h[sel]).sum(axis=0)
    norm = np.linalg.norm(total)
    if norm > 0:
        return total / norm
    first = h[np.flatnonzero(sel)[0]]
    norm = np.linalg.norm(first)
    if norm == 0:
        raise DegenerateChannelError("selected channels are all zero; MRT is undefined")
    return first / norm


def select_all(channels, sample_counts, cfg, config=PddConfig(), init_layout=None):
    """PDD beamforming and positioning with every user kept."""
    return solve(channels, sample_counts, cfg, replace(config, freeze_selection=True),
                 init_layout=init_layout)


def fixed_layout_solve(channels, sample_counts, cfg, layout, config=PddConfig()):
    """PDD selection and beamforming with the antennas frozen at ``layout``."""
    layout.check_feasible()
    return solve(channels.at_layout(layout), sample_counts, cfg,
                 replace(config, freeze_layout=True), init_layout=layout)


def fpa_layout(n_antennas, region_lo=0.0, region_hi=8.0, min_gap=DEFAULT_WAVELENGTH / 2):
    """Conventional fixed-position array packed at the minimum gap."""
    return AntennaLayout.compact(n_antennas, region_lo, region_hi, min_gap)


def rma_layout(n_antennas, rng=None, region_lo=0.0, region_hi=8.0,
               min_gap=DEFAULT_WAVELENGTH / 2, max_tries=RMA_MAX_TRIES):
    """Uniformly random feasible positions by rejection sampling.

    Falls back to the equispaced layout when ``max_tries`` draws all violate
    the spacing.
    """
    AntennaLayout.equispaced(n_antennas, region_lo, region_hi, min_gap)  # validates the region
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        pos = np.sort(rng.uniform(region_lo, region_hi, n_antennas))
        layout = AntennaLayout(pos, region_lo, region_hi, min_gap)
        if layout.is_feasible():
            return layout
    return AntennaLayout.equispaced(n_antennas, region_lo, region_hi, min_gap)


def _batch_r(h, selected, S, cfg):
    """Surrogate with per-probe MRT for a stack of channel matrices ``(G, U, N)``."""
    sel = np.asarray(selected, dtype=bool)
    total = np.einsum("u,gun->gn", S * sel, h)
    norm = np.linalg.norm(total, axis=1, keepdims=True)
    q = np.divide(total, norm, out=np.zeros_like(total), where=norm > 0)
    gains = np.abs(np.einsum("gun,gn->gu", h, np.conj(q))) ** 2
    mass = float(S[sel].sum())
    with np.errstate(divide="ignore"):
        worst = np.max(np.where(sel, S ** 2 / gains, 0.0), axis=1)
    noise = cfg.noise_power / (cfg.max_power * mass ** 2) * worst
    noise[norm[:, 0] == 0] = np.inf
    return dropout_term(sel, S) + noise


def aps_layout(channels, sample_counts, cfg, resolution=None, max_sweeps=10, selected=None,
               init_layout=None):
    """Coordinate-wise grid search of antenna positions with MRT beamforming.

    One antenna moves at a time over the grid points that keep the spacing
    to its neighbours; a move is taken only if it lowers the surrogate.
    Sweeps stop after a pass without improvement or ``max_sweeps`` passes.
    """
    if not channels.links:
        raise ConfigurationError("APS needs line-of-sight links to rebuild channels")
    S = check_sample_counts(sample_counts, channels.n_users)
    sel = np.ones(channels.n_users, bool) if selected is None else check_selection(
        selected, channels.n_users)
    layout = init_layout or AntennaLayout.equispaced(
        channels.n_antennas, 0.0, 8.0 * channels.wavelength, channels.wavelength / 2)
    step = channels.wavelength / 50 if resolution is None else float(resolution)
    if step <= 0:
        raise ConfigurationError("APS resolution must be positive")
    lo, hi, v = layout.region_lo, layout.region_hi, layout.min_gap
    grid = np.linspace(lo, hi, int(np.floor((hi - lo) / step + 1e-9)) + 1)
    slope = 2 * np.pi * channels.aoa_cos / channels.wavelength
    beta = channels.path_gains
    x = layout.positions.copy()
    h = channels.at_layout(layout).h
    best = float(_batch_r(h[None], sel, S, cfg)[0])
    for _ in range(max_sweeps):
        improved = False
        for n in range(x.size):
            ok = np.ones(grid.size, bool)
            if n > 0:
                ok &= grid - x[n - 1] >= v
            if n < x.size - 1:
                ok &= x[n + 1] - grid >= v
            probes = grid[ok]
            if probes.size == 0:
                continue
            stack = np.repeat(h[None], probes.size, axis=0)
            stack[:, :, n] = beta[None, :] * np.exp(1j * slope[None, :] * probes[:, None])
            vals = _batch_r(stack, sel, S, cfg)
            k = int(np.argmin(vals))
            if vals[k] < best:
                best = float(vals[k])
                x[n] = probes[k]
                h = stack[k]
                improved = True
        if not improved:
            break
    return layout.with_positions(x).check_feasible()


def _mrt_greedy(channels, S, cfg, max_rounds=20):
    sel = np.ones(channels.n_users, bool)
    seen = set()
    for _ in range(max_rounds):
        if sel.tobytes() in seen:
            break
        seen.add(sel.tobytes())
        sel, _ = greedy_repair(mrt_beamformer(channels, sel, S), sel, channels, S, cfg)
    return sel


def mrt_scheme(channels, sample_counts, cfg, layout=None):
    """Fixed array, MRT beamforming and greedy selection around it."""
    S = check_sample_counts(sample_counts, channels.n_users)
    layout = layout or fpa_layout(channels.n_antennas, min_gap=channels.wavelength / 2,
                                  region_hi=8.0 * channels.wavelength)
    ch = channels.at_layout(layout)
    sel = _mrt_greedy(ch, S, cfg)
    return _result(mrt_beamformer(ch, sel, S), sel, layout, ch, S, cfg)


def noise_budget(q, selected, channels, sample_counts, cfg):
    """The aggregation-noise part of the surrogate for a given beamformer and selection."""
    h = np.atleast_2d(getattr(channels, "h", channels))
    sel = check_selection(selected, h.shape[0])
    S = check_sample_counts(sample_counts, h.shape[0])
    return objective_r(q, sel, h, S, cfg) - dropout_term(sel, S)


def dc_like_greedy(channels, sample_counts, cfg, threshold, layout=None):
    """Keep as many users as possible while the noise term stays within ``threshold``.

    Starting from everyone, the user with the largest ``S_u^2 / |q^H h_u|^2``
    is dropped and MRT is recomputed until the budget holds or one user is left.
    """
    if not threshold > 0:
        raise ConfigurationError("threshold J must be positive")
    S = check_sample_counts(sample_counts, channels.n_users)
    layout = layout or _layout_of(channels)
    ch = channels.at_layout(layout)
    sel = np.ones(ch.n_users, bool)
    while True:
        q = mrt_beamformer(ch, sel, S)
        if noise_budget(q, sel, ch, S, cfg) <= threshold or sel.sum() == 1:
            break
        with np.errstate(divide="ignore"):
            load = np.where(sel, S ** 2 / np.abs(ch.h @ np.conj(q)) ** 2, -np.inf)
        sel[int(np.argmax(load))] = False
    return _result(q, sel, layout, ch, S, cfg)


def _oracle_beamformers(n_antennas, step):
    if n_antennas == 1:
        return np.ones((1, 1), dtype=np.complex128)
    psi = np.arange(0.0, np.pi / 2 + step / 2, step)
    phi = np.arange(0.0, 2 * np.pi, step)
    P, F = np.meshgrid(psi, phi, indexing="ij")
    return np.stack([np.cos(P).ravel() + 0j, (np.sin(P) * np.exp(1j * F)).ravel()], axis=1)


def brute_force_oracle(channels, sample_counts, cfg, step=1e-2):
    """Global minimiser of the surrogate over selections and beamformers.

    All ``2^U - 1`` selections are enumerated. With one antenna the
    beamformer is a pure phase and drops out; with two it is searched on a
    ``(psi, phi)`` grid of spacing ``step`` radians.
    """
    U, N = channels.n_users, channels.n_antennas
    if U > ORACLE_MAX_USERS or N > ORACLE_MAX_ANTENNAS:
        raise ConfigurationError(
            f"oracle limited to U <= {ORACLE_MAX_USERS} and N_T <= {ORACLE_MAX_ANTENNAS}; "
            f"got U={U}, N_T={N}")
    S = check_sample_counts(sample_counts, U)
    Q = _oracle_beamformers(N, step)
    gains = np.abs(Q.conj() @ channels.h.T) ** 2          # (G, U)
    with np.errstate(divide="ignore"):
        load = np.where(gains > 0, S ** 2 / gains, np.inf)
    total = float(S.sum())
    scale = 4.0 / U ** 2
    best = (np.inf, None, None)
    # depth-first over subsets in index order, carrying the running max load per beamformer
    stack = [(0, 0, np.full(Q.shape[0], -np.inf), 0.0)]
    while stack:
        start, mask, worst, mass = stack.pop()
        for u in range(start, U):
            m = mask | (1 << u)
            w = np.maximum(worst, load[:, u])
            ms = mass + S[u]
            g = int(np.argmin(w))
            r = scale * (total - ms) ** 2 + cfg.noise_power / (cfg.max_power * ms ** 2) * w[g]
            if r < best[0]:
                best = (r, m, g)
            if u + 1 < U:
                stack.append((u + 1, m, w, ms))
    _, mask, g = best
    sel = np.array([(mask >> u) & 1 for u in range(U)], dtype=bool)
    return _result(Q[g], sel, _layout_of(channels), channels, S, cfg)


def run_baseline(spec, channels, sample_counts, cfg, config=PddConfig(), rng=None):
    """Dispatch a ``BaselineSpec`` to its routine."""
    N, lam = channels.n_antennas, channels.wavelength
    region = dict(region_lo=0.0, region_hi=8.0 * lam, min_gap=lam / 2)
    if spec.kind == SELECT_ALL:
        return select_all(channels, sample_counts, cfg, config)
    if spec.kind == FPA:
        return fixed_layout_solve(channels, sample_counts, cfg, fpa_layout(N, **region), config)
    if spec.kind == RMA:
        gen = np.random.default_rng(spec.seed) if spec.seed is not None else rng
        return fixed_layout_solve(channels, sample_counts, cfg, rma_layout(N, gen, **region), config)
    if spec.kind == APS:
        layout = aps_layout(channels, sample_counts, cfg, spec.grid_resolution)
        return fixed_layout_solve(channels, sample_counts, cfg, layout, config)
    if spec.kind == MRT:
        return mrt_scheme(channels, sample_counts, cfg, fpa_layout(N, **region))
    return dc_like_greedy(channels, sample_counts, cfg, spec.threshold, fpa_layout(N, **region))


__all__ = [
    "APS", "DC_LIKE_GREEDY", "FPA", "KINDS", "MRT", "RMA", "SELECT_ALL", "BaselineSpec",
    "aps_layout", "brute_force_oracle", "dc_like_greedy", "fixed_layout_solve",
    "fpa_layout", "mrt_beamformer", "mrt_scheme", "noise_budget", "rma_layout", "run_baseline",
    "select_all",
]
