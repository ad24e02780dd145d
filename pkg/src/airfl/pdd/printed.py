"""Closed forms exactly as printed for the selection and scaling blocks.

These are kept for the ``paper-closed-form`` selection mode and for tests
that pin the literal expressions. Several of them are not the minimiser of
their block (the selection update below, for instance, returns 2/3 when all
copies equal 1), so the solver's default path uses the derived updates in
:mod:`airfl.pdd.updates` instead.
"""

import numpy as np


def lambda1(e_tilde, e_hat, e_bar, kappa, lam_tilde, lam_hat, lam_bar):
    """Multiplier of the binary constraint in the selection update."""
    shifted = e_tilde + e_hat + e_bar - kappa * (lam_tilde + lam_hat + lam_bar)
    return np.maximum.reduce([np.zeros_like(shifted), -2.0 * (3.0 + shifted), 2.0 * shifted])


def e_closed_form(e_tilde, e_hat, e_bar, kappa, lam_tilde, lam_hat, lam_bar):
    """Printed selection update, clamped to [0, 1].

    The printed numerator lists the ``e_tilde`` multiplier twice; the second
    occurrence is read as the ``e_hat`` multiplier, matching ``lambda1``.
    """
    e_tilde, e_hat, e_bar = (np.asarray(v, dtype=float) for v in (e_tilde, e_hat, e_bar))
    lam1 = lambda1(e_tilde, e_hat, e_bar, kappa, lam_tilde, lam_hat, lam_bar)
    num = lam1 / 2 + e_tilde + e_hat + e_bar - kappa * (lam_tilde + lam_hat + lam_bar)
    return np.clip(num / (3.0 + lam1), 0.0, 1.0)


def eta_from_copies(c, c_tilde, noise_power, max_power):
    """Printed receive-scaling update ``c sigma^2 / (P_a c_tilde)``."""
    return c * noise_power / (max_power * c_tilde)


def eta_hat_printed(total_mass, n_users, eta_tilde, kappa, lam_eta_tilde):
    """Printed gradient-step solution for ``eta_hat``."""
    K2 = float(n_users) ** 2
    return (8 * total_mass / K2 - 2 * eta_tilde - 2 * kappa * lam_eta_tilde) / (8 / K2 - 2)


def eta_bar_printed(eta_tilde, c_tilde, eta, kappa, lam_c_tilde, lam_eta_bar):
    return (eta_tilde * c_tilde - eta * eta_tilde
            + kappa * (eta_tilde * lam_c_tilde + lam_eta_bar)) / (1 + eta_tilde ** 2)


def c_tilde_printed(c, kappa, lam_c_tilde, alpha_tilde, alpha_hat, lam_alpha_hat,
                    eta_bar, eta_tilde, lam_eta_tilde, tol=1e-10):
    """Printed single-user ``c_tilde`` update.

    When ``|1 - alpha_tilde^2| < tol`` the printed denominator vanishes and the
    exact minimiser of ``(c - c~ + k l_c)^2 + (alpha_hat - alpha_tilde c~ + k l_a)^2``
    is returned instead.
    """
    den = 1.0 - alpha_tilde ** 2
    if abs(den) < tol:
        num = (c + kappa * lam_c_tilde) + alpha_tilde * (alpha_hat + kappa * lam_alpha_hat)
        return num / (1.0 + alpha_tilde ** 2)
    num = (c + kappa * lam_c_tilde - alpha_tilde * alpha_hat - kappa * lam_alpha_hat
           + eta_bar * eta_tilde - kappa * lam_eta_tilde)
    return num / den


def alpha_tilde_printed(alpha, alpha_hat, kappa, lam_alpha_tilde, lam_alpha_hat, c_tilde):
    return (alpha + alpha_hat + kappa * (lam_alpha_tilde + lam_alpha_hat)) / (1 + c_tilde ** 2)
