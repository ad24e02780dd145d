"""Penalty dual decomposition for joint user selection, beamforming and positioning."""

from .solver import (
    PddConfig,
    PddResult,
    greedy_repair,
    inner_loop,
    recover_feasible,
    solve,
    write_diagnostics,
)
from .state import (
    COUPLINGS,
    PER_USER,
    SHARED,
    PddState,
    Problem,
    augmented_lagrangian,
    initial_state,
    max_violation,
    random_state,
    residuals,
)
from .updates import (
    BINARY_EXACT,
    PAPER_CLOSED_FORM,
    dual_penalty_update,
    update_e,
    update_round1,
    update_round2,
    update_round3,
)

__all__ = [
    "BINARY_EXACT", "COUPLINGS", "PAPER_CLOSED_FORM", "PER_USER", "SHARED",
    "PddConfig", "PddResult", "PddState", "Problem", "augmented_lagrangian",
    "dual_penalty_update", "greedy_repair", "initial_state", "inner_loop",
    "max_violation", "random_state", "recover_feasible", "residuals", "solve",
    "update_e", "update_round1", "update_round2", "update_round3", "write_diagnostics",
]
