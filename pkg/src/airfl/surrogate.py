"""Per-round convergence surrogate and the T-round training-loss bound.

The surrogate trades the data lost by dropping users against the
aggregation noise of the users kept::

    r(q, e) = 4/U^2 (sum_u (1 - e_u) S_u)^2
              + sigma^2 / (P_a (sum_u e_u S_u)^2) * max_u e_u S_u^2 / |q^H h_u|^2
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_sample_counts, check_selection, check_scalar


@dataclass(frozen=True)
class BoundConstants:
    """Strong convexity ``mu``, smoothness ``lipschitz`` and the two bound constants."""

    mu: float = 1.0
    lipschitz: float = 10.0
    alpha1: float = 1.0
    alpha2: float = 1.0

    def __post_init__(self):
        check_scalar(self.mu, "mu", lo=0.0)
        check_scalar(self.lipschitz, "lipschitz", lo=0.0, lo_inclusive=False)
        check_scalar(self.alpha1, "alpha1", lo=0.0)
        check_scalar(self.alpha2, "alpha2", lo=1.0)


@dataclass
class SelectionVector:
    relaxed: np.ndarray
    binary: np.ndarray

    def __post_init__(self):
        self.relaxed = np.clip(np.asarray(self.relaxed, dtype=float), 0.0, 1.0)
        self.binary = np.asarray(self.binary, dtype=bool)
        if self.relaxed.shape != self.binary.shape:
            raise ValueError("relaxed and binary parts must have the same length")

    @classmethod
    def from_relaxed(cls, relaxed, threshold=0.5):
        relaxed = np.clip(np.asarray(relaxed, dtype=float), 0.0, 1.0)
        return cls(relaxed, relaxed >= threshold)

    @property
    def count(self):
        return int(self.binary.sum())


def dropout_term(selection, sample_counts):
    """``4/U^2 (sum of dropped samples)^2``."""
    e = np.asarray(selection, dtype=float)
    S = np.asarray(sample_counts, dtype=float)
    return 4.0 / e.size ** 2 * float(np.dot(1.0 - e, S)) ** 2


def noise_term(gains, selection, sample_counts, cfg):
    """Aggregation-noise part of the surrogate; ``gains`` are ``|q^H h_u|^2``.

    Returns ``inf`` for an empty selection or a selected user with zero gain.
    """
    e = np.asarray(selection, dtype=bool)
    S = np.asarray(sample_counts, dtype=float)
    mass = float(S[e].sum())
    if mass == 0:
        return np.inf
    g = np.asarray(gains, dtype=float)[e]
    if np.any(g <= 0):
        return np.inf
    worst = float(np.max(S[e] ** 2 / g))
    return cfg.noise_power / (cfg.max_power * mass ** 2) * worst


def objective_r(q, selection, channels, sample_counts, cfg):
    """Surrogate ``r(q, e; H)`` for a unit-norm ``q`` and a binary selection."""
    h = np.atleast_2d(np.asarray(getattr(channels, "h", channels), dtype=np.complex128))
    e = check_selection(selection, h.shape[0])
    S = check_sample_counts(sample_counts, h.shape[0])
    q = np.asarray(q, dtype=np.complex128).ravel()
    if not e.any():
        return np.inf
    gains = np.abs(h @ np.conj(q)) ** 2
    return dropout_term(e, S) + noise_term(gains, e, S, cfg)


def contraction_phi(r, constants=BoundConstants()):
    """Per-round contraction ``1 - (mu/L)(1 - 2 alpha2 r)``."""
    if r < 0:
        raise ValueError("r must be non-negative")
    k = constants
    return 1.0 - (k.mu / k.lipschitz) * (1.0 - 2.0 * k.alpha2 * r)


def bound_after_T(r_sequence, initial_gap, constants=BoundConstants()):
    """Upper bound on the optimality gap after ``T = len(r_sequence)`` rounds."""
    r = np.asarray(r_sequence, dtype=float).ravel()
    if r.size < 1:
        raise ValueError("need at least one round")
    phi = np.array([contraction_phi(float(x), constants) for x in r])
    T = r.size
    # tail[t] = prod_{tau = t+1}^{T-1} phi_tau
    tail = np.ones(T)
    for t in range(T - 2, -1, -1):
        tail[t] = tail[t + 1] * phi[t + 1]
    accumulated = float(np.dot(tail[:-1], r[:-1])) + r[-1]
    return float(np.prod(phi)) * initial_gap + constants.alpha1 / constants.lipschitz * accumulated
