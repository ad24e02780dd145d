"""Outer/inner loop of the penalty dual decomposition solver and binary recovery."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .._io import write_csv
from .._validation import ConfigurationError, check_sample_counts
from ..channel import AntennaLayout
from ..surrogate import SelectionVector, objective_r
from . import updates
from .state import (
    PER_USER,
    SHARED,
    Problem,
    augmented_lagrangian,
    initial_state,
    residuals,
)

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ("start", "outer", "inner", "augmented_lagrangian", "violation", "kappa")


@dataclass(frozen=True)
class PddConfig:
    kappa0: float = 0.1
    penalty_decay: float = 0.7
    inner_tol: float = 1e-6
    outer_tol: float = 1e-4
    max_inner: int = 50
    max_outer: int = 60
    e_update_mode: str = updates.BINARY_EXACT
    layout_mode: str = SHARED
    stall_ratio: float = 0.9
    freeze_selection: bool = False
    freeze_layout: bool = False
    normalize: bool = True

    def __post_init__(self):
        if not 0 < self.penalty_decay < 1:
            raise ConfigurationError("penalty_decay must lie in (0, 1)")
        if self.kappa0 <= 0:
            raise ConfigurationError("kappa0 must be positive")
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ConfigurationError("iteration caps must be at least 1")
        if self.e_update_mode not in updates.E_UPDATE_MODES:
            raise ConfigurationError(f"unknown e_update_mode {self.e_update_mode!r}")
        if self.layout_mode not in (SHARED, PER_USER):
            raise ConfigurationError(f"unknown layout_mode {self.layout_mode!r}")


@dataclass
class PddResult:
    beamformer: np.ndarray
    selection: np.ndarray
    layout: AntennaLayout
    r_value: float
    violation: float
    iterations: tuple
    converged: bool = True
    relaxed: np.ndarray = None
    kappa: float = None
    history: list = field(default_factory=list)

    @property
    def selected_count(self):
        return int(np.sum(self.selection))

    @property
    def selection_vector(self):
        return SelectionVector(self.relaxed if self.relaxed is not None else self.selection,
                               self.selection)

    def summary(self):
        return {
            "r": self.r_value,
            "selected": self.selected_count,
            "mask": "".join("1" if s else "0" for s in self.selection),
            "violation": self.violation,
            "outer_iterations": self.iterations[0],
            "inner_iterations": self.iterations[1],
            "converged": self.converged,
        }


def inner_loop(problem, st, config):
    """Run rounds 1 -> 2 -> 3 until the relative change of the AL drops below ``inner_tol``."""
    al = augmented_lagrangian(problem, st)
    for it in range(1, config.max_inner + 1):
        updates.update_round1(problem, st, config.e_update_mode, config.freeze_selection)
        updates.update_round2(problem, st, config.freeze_layout)
        updates.update_round3(problem, st)
        new = augmented_lagrangian(problem, st)
        done = abs(al - new) <= config.inner_tol * max(1.0, abs(al))
        al = new
        if done:
            break
    return st, al, it


def greedy_repair(q, selection, channels, sample_counts, cfg):
    """Local search on the binary selection with ``q`` fixed.

    The drop pass removes selected users one at a time in increasing
    ``|q^H h_u|^2 / S_u^2`` order and keeps the best selection seen along the
    whole path, since the surrogate need not be unimodal in the number of
    users. The add pass does the same with unselected users in decreasing
    order. The passes repeat until neither improves.
    """
    h = np.atleast_2d(getattr(channels, "h", channels))
    S = np.asarray(sample_counts, dtype=float)
    strength = np.abs(h @ np.conj(q)) ** 2 / S ** 2
    sel = np.asarray(selection, dtype=bool).copy()
    if not sel.any():
        sel[int(np.argmax(strength))] = True
    r = objective_r(q, sel, h, S, cfg)
    changed = True
    while changed:
        changed = False
        for order, value in ((np.argsort(strength, kind="stable"), False),
                             (np.argsort(-strength, kind="stable"), True)):
            trial = sel.copy()
            for u in order:
                if trial[u] == value or (not value and trial.sum() == 1):
                    continue
                trial[u] = value
                rt = objective_r(q, trial, h, S, cfg)
                if rt < r:
                    sel, r, changed = trial.copy(), rt, True
    return sel, r


def warm_selection(problem, layout, channels, sample_counts, cfg):
    """Greedy selection around the principal beamformer of the start layout.

    Alternates the greedy pass with re-fitting the beamformer to the selected
    users; stops when the selection repeats.
    """
    sel = np.ones(problem.n_users, dtype=bool)
    seen = set()
    while sel.tobytes() not in seen:
        seen.add(sel.tobytes())
        q = initial_state(problem, layout, 1.0, sel).q
        sel, _ = greedy_repair(q, sel, channels, sample_counts, cfg)
    return sel.astype(float)


def recover_feasible(problem, st, channels, sample_counts, cfg, config=PddConfig(),
                     base_layout=None):
    """Binary selection, feasible layout and unit beamformer from a relaxed state."""
    S = check_sample_counts(sample_counts, channels.n_users)
    base_layout = base_layout or channels.layout or AntennaLayout.default(
        channels.n_antennas, channels.wavelength)
    if config.freeze_layout or not problem.movable:
        layout = base_layout
    else:
        pos = st.x.mean(axis=0) if problem.layout_mode == PER_USER else st.x[0]
        layout = base_layout.with_positions(pos).projected()
    rebuilt = channels.at_layout(layout)

    q = st.q if np.linalg.norm(st.q) > 0 else st.q_tilde
    q = q / np.linalg.norm(q)

    relaxed = np.clip(np.asarray(st.e, dtype=float), 0.0, 1.0)
    if config.freeze_selection:
        sel = np.ones(channels.n_users, dtype=bool)
        r = objective_r(q, sel, rebuilt, S, cfg)
    else:
        sel, r = greedy_repair(q, relaxed >= 0.5, rebuilt, S, cfg)
    res = residuals(problem, st)
    violation = max(float(np.max(np.abs(v))) if np.size(v) else 0.0 for v in res.values())
    return PddResult(beamformer=q, selection=sel, layout=layout, r_value=float(r),
                     violation=violation, iterations=(0, 0), relaxed=relaxed, kappa=st.kappa)


def _run_outer(problem, st, channels, S, cfg, config, base, record):
    """Outer PDD loop from ``st``; returns the best recovered point and its bookkeeping."""
    # best recovered (binary, feasible) point seen so far, starting from the warm start
    best = recover_feasible(problem, st, channels, S, cfg, config, base)
    history = []
    total_inner = 0
    prev_violation = np.inf
    violation = best.violation
    converged = False
    outer = 0
    for outer in range(1, config.max_outer + 1):
        st, al, n_inner = inner_loop(problem, st, config)
        total_inner += n_inner
        res = residuals(problem, st)
        violation = max(float(np.max(np.abs(v))) if np.size(v) else 0.0 for v in res.values())
        if record:
            history.append({"outer": outer, "inner": n_inner, "augmented_lagrangian": float(al),
                            "violation": violation, "kappa": float(st.kappa)})
        logger.debug("outer %d: inner=%d AL=%.6g violation=%.3g kappa=%.3g",
                     outer, n_inner, al, violation, st.kappa)
        candidate = recover_feasible(problem, st, channels, S, cfg, config, base)
        if candidate.r_value < best.r_value:
            best = candidate
        if violation < config.outer_tol:
            converged = True
            break
        stalled = violation > config.stall_ratio * prev_violation
        updates.dual_penalty_update(problem, st, res, config.penalty_decay, stalled)
        prev_violation = violation
    best.violation = violation
    best.iterations = (outer, total_inner)
    best.converged = converged
    best.kappa = st.kappa
    best.history = history
    return best


def solve(channels, sample_counts, cfg, config=PddConfig(), init_layout=None, record=False):
    """Jointly choose users, receive beamformer and antenna positions for one round.

    The outer loop runs from the all-selected start and, when it differs,
    from a greedy warm-start selection; the better outcome is returned. With
    a single antenna only the greedy start is used, since neither the
    beamformer phase nor the position affects the surrogate then.

    Args:
        channels: ``ChannelSet`` carrying the user links (LoS) or fixed channels.
        sample_counts: ``S_u`` per user.
        cfg: ``OtaConfig`` with the power budget and noise power.
        config: solver settings.
        init_layout: warm-start layout; defaults to an equispaced one.
        record: keep one diagnostics row per outer iteration.

    Returns:
        ``PddResult`` holding the best binary, feasible point recovered from
        the start or any outer iterate; ``violation`` is the coupling
        violation of the final solver state of that run and ``converged`` is
        False when ``max_outer`` was reached with it still above ``outer_tol``.
        ``iterations`` and ``history`` cover every run.
    """
    S = check_sample_counts(sample_counts, channels.n_users)
    base = init_layout or channels.layout or AntennaLayout.default(
        channels.n_antennas, channels.wavelength)
    if init_layout is None and not config.freeze_layout:
        base = AntennaLayout.equispaced(base.n_antennas, base.region_lo, base.region_hi,
                                        base.min_gap)
    problem = Problem.from_channels(channels, S, cfg, base, config.layout_mode,
                                    normalize=config.normalize)
    starts = [np.ones(problem.n_users)]
    if not config.freeze_selection:
        greedy = warm_selection(problem, base, channels.at_layout(base), S, cfg)
        if problem.n_antennas == 1:
            # q and x cannot change r with one antenna, so a second start adds nothing
            starts = [greedy]
        elif not np.array_equal(greedy, starts[0]):
            starts.append(greedy)
    best, history, outer, inner = None, [], 0, 0
    for k, start in enumerate(starts):
        st = initial_state(problem, base, config.kappa0, start)
        res = _run_outer(problem, st, channels, S, cfg, config, base, record)
        history += [dict(row, start=k) for row in res.history]
        outer += res.iterations[0]
        inner += res.iterations[1]
        if best is None or res.r_value < best.r_value:
            best = res
    best.iterations = (outer, inner)
    best.history = history
    if not best.converged:
        logger.info("PDD stopped at max_outer=%d with violation %.3g", config.max_outer,
                    best.violation)
    return best


def write_diagnostics(history, path):
    """Per-outer-iteration diagnostics as CSV, written atomically."""
    write_csv(path, DIAGNOSTIC_COLUMNS,
              ([row[c] for c in DIAGNOSTIC_COLUMNS] for row in history))
