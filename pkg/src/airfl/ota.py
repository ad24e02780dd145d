"""Analog over-the-air gradient aggregation.

Each selected user normalises its gradient by ``v_u = ||g_u|| / sqrt(D)``,
scales it by a transmit weight ``a_u`` and all users transmit at once. The
server combines the superposed signal with a unit-norm beamformer ``q``,
divides by ``sqrt(eta)`` and keeps the real part.

Transmit weights are chosen so that ``q^H h_u a_u / v_u = sqrt(eta) S_u``.
The receive scaling ``eta`` is the largest value for which every selected
user still meets ``|a_u|^2 <= P_a``, which makes the de-scaled estimate
equal ``sum_u S_u g_u / sum_u S_u`` plus noise of variance
``sigma^2 / (2 eta (sum_u S_u)^2)`` per component.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import (
    DegenerateChannelError,
    check_sample_counts,
    check_scalar,
    check_selection,
)
from .channel import DEFAULT_WAVELENGTH

NORM_FLOOR = 1e-12


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(watts) + 30.0


@dataclass(frozen=True)
class OtaConfig:
    """Power budget ``P_a`` and receiver noise ``sigma_n^2``, both in linear watts."""

    max_power: float = dbm_to_watts(0.0)
    noise_power: float = dbm_to_watts(-20.0)
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self):
        check_scalar(self.max_power, "max_power", lo=0.0, lo_inclusive=False)
        check_scalar(self.noise_power, "noise_power", lo=0.0)
        check_scalar(self.wavelength, "wavelength", lo=0.0, lo_inclusive=False)

    @classmethod
    def from_dbm(cls, max_power_dbm=0.0, noise_power_dbm=-20.0,
                 wavelength=DEFAULT_WAVELENGTH):
        noise = 0.0 if np.isneginf(noise_power_dbm) else dbm_to_watts(noise_power_dbm)
        return cls(dbm_to_watts(max_power_dbm), noise, wavelength)


@dataclass
class AggregationOutcome:
    estimate: np.ndarray
    eta: float
    per_user_weight: np.ndarray
    selected: np.ndarray


def normalization_factor(gradient):
    """``||g|| / sqrt(D)``, floored at 1e-12 so an all-zero gradient stays transmittable."""
    g = np.asarray(gradient, dtype=float).ravel()
    if g.size < 1:
        raise ValueError("gradient must have at least one component")
    v = np.linalg.norm(g) / np.sqrt(g.size)
    return max(v, NORM_FLOOR)


def effective_gains(q, h):
    """``q^H h_u`` for every row of ``h``."""
    return np.atleast_2d(h) @ np.conj(q)


def receive_scaling(q, channels, selected, norms, sample_counts, cfg):
    """``eta = P_a * min_u |q^H h_u|^2 / (S_u^2 v_u^2)`` over the selected users.

    Args:
        q: unit-norm receive beamformer.
        channels: ``ChannelSet`` or raw ``(U, N_T)`` channel matrix.
        selected: boolean mask over users.
        norms: normalisation factors ``v_u`` for all users (unselected entries ignored).
        sample_counts: ``S_u`` per user.
        cfg: ``OtaConfig``.
    """
    h = getattr(channels, "h", channels)
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    sel = check_selection(selected, h.shape[0])
    if not sel.any():
        raise ValueError("receive scaling needs at least one selected user")
    S = check_sample_counts(sample_counts, h.shape[0])
    v = np.asarray(norms, dtype=float)
    gains = np.abs(effective_gains(q, h[sel])) ** 2
    if np.any(gains == 0):
        bad = np.flatnonzero(sel)[gains == 0]
        raise DegenerateChannelError(f"zero effective channel for users {bad.tolist()}")
    return float(cfg.max_power * np.min(gains / (S[sel] ** 2 * v[sel] ** 2)))


def transmit_weight(q, h_u, sample_count, norm, eta):
    """Zero-forcing weight ``a_u = sqrt(eta) S_u v_u / (q^H h_u)``."""
    g = complex(np.vdot(q, h_u))
    if g == 0:
        raise DegenerateChannelError("zero effective channel q^H h_u")
    return np.sqrt(eta) * sample_count * norm / g


def aggregate(gradients, channels, q, selected, sample_counts, cfg, rng):
    """Superpose the selected users' gradients over the air and de-scale.

    ``gradients`` is a ``(U, D)`` array (rows of unselected users are never
    read) or a mapping ``user -> gradient`` covering the selected users.
    """
    h = np.atleast_2d(np.asarray(getattr(channels, "h", channels), dtype=np.complex128))
    n_users, n_ant = h.shape
    sel = check_selection(selected, n_users)
    S = check_sample_counts(sample_counts, n_users)
    users = np.flatnonzero(sel)
    if users.size == 0:
        raise ValueError("aggregation needs at least one selected user")
    grads = {int(u): np.asarray(gradients[u], dtype=float).ravel() for u in users}
    dims = {g.size for g in grads.values()}
    if len(dims) != 1:
        raise ValueError(f"gradient lengths differ: {sorted(dims)}")
    D = dims.pop()

    norms = np.ones(n_users)
    for u in users:
        norms[u] = normalization_factor(grads[u])
    eta = receive_scaling(q, h, sel, norms, S, cfg)

    weights = np.zeros(n_users, dtype=np.complex128)
    combined = np.zeros(D, dtype=np.complex128)
    for u in users:
        weights[u] = transmit_weight(q, h[u], S[u], norms[u], eta)
        combined += np.vdot(q, h[u]) * weights[u] * grads[u] / norms[u]
    if cfg.noise_power > 0:
        scale = np.sqrt(cfg.noise_power / 2)
        noise = scale * (rng.standard_normal((n_ant, D)) + 1j * rng.standard_normal((n_ant, D)))
        combined += np.conj(q) @ noise
    estimate = np.real(combined / np.sqrt(eta)) / S[sel].sum()
    return AggregationOutcome(estimate, eta, weights[sel], sel)


def estimator_noise_variance(eta, total_samples, cfg):
    """Per-component variance of the aggregation noise after de-scaling."""
    return cfg.noise_power / (2 * eta * total_samples ** 2)
