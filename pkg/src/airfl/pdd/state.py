"""Problem data, solver state and the augmented Lagrangian.

The solver works on a rescaled copy of the per-round problem: sample counts
are divided by their total, channel powers by ``N_T max_u |beta_u|^2`` and
the surrogate by ``4 S_tot^2 / U^2``. Each user's gain is further normalised
to unit beamforming power, with its strength carried by ``load_u``, the
rescaled ``S_u^2`` over the user's channel power. The rescaled objective
reads ``w (M - eta_hat)^2 + rho * c / eta_bar`` where ``M`` is the total
(rescaled) sample mass. Passing ``normalize=False`` keeps raw units, in which
``w = 4/U^2`` and ``rho = sigma^2 / P_a``.

Variable naming follows the reformulated problem: ``e`` is the binary
selection and ``e_tilde``, ``e_hat``, ``e_bar`` its copies; ``alpha`` tracks
``|gamma|^2`` with ``gamma = beta q^H b``; ``alpha_hat = alpha_tilde c_tilde``
upper-bounds ``e * load``; ``eta_hat`` and ``eta_tilde`` carry the selected
mass and ``eta_bar`` its square; ``b`` is the unit-modulus copy of the
steering vector and ``x_diff`` the gaps between neighbouring antennas.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..channel import RAYLEIGH_FPA, AntennaLayout, ChannelSet
from .._validation import check_sample_counts

SHARED = "shared"
PER_USER = "per-user"
ETA_BAR_FLOOR = 1e-12

# coupling residual -> whether it is complex valued
COUPLINGS = {
    "e_tilde": False,
    "e_hat": False,
    "e_bar": False,
    "gamma": True,
    "b": True,
    "alpha_tilde": False,
    "alpha_hat": False,
    "c_tilde": False,
    "eta_tilde": False,
    "eta_bar": False,
    "q": True,
    "x_diff": False,
}


@dataclass
class Problem:
    """One rescaled instance of the per-round selection/beamforming/positioning problem."""

    s: np.ndarray            # rescaled sample counts, (U,)
    beta: np.ndarray         # per-user normalised complex gains, (U,)
    load: np.ndarray         # s_u^2 over the user's rescaled channel power, (U,)
    slope: np.ndarray        # phase slope 2 pi cos(theta) / lambda, (U,)
    rho: float               # weight of c / eta_bar
    w_sel: float             # weight of (M - eta_hat)^2
    region_lo: float
    region_hi: float
    min_gap: float
    n_antennas: int
    layout_mode: str = SHARED
    fixed_b: np.ndarray = None   # position-independent channels (Rayleigh mode)
    sample_scale: float = 1.0
    gain_scale: float = 1.0
    objective_scale: float = 1.0
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_users(self):
        return self.s.size

    @property
    def mass(self):
        return float(self.s.sum())

    @property
    def movable(self):
        return self.fixed_b is None

    @property
    def n_rows(self):
        return self.n_users if self.layout_mode == PER_USER else 1

    def row_of(self, u):
        return u if self.layout_mode == PER_USER else 0

    def steering(self, x):
        """``a(x_u)`` for every user, shape ``(U, N_T)``."""
        if not self.movable:
            return self.fixed_b
        rows = x if self.layout_mode == PER_USER else np.broadcast_to(x[0], (self.n_users, x.shape[1]))
        return np.exp(1j * self.slope[:, None] * rows)

    @classmethod
    def from_channels(cls, channels: ChannelSet, sample_counts, cfg, layout=None,
                      layout_mode=SHARED, normalize=True):
        """Build the rescaled problem from a channel set and an ``OtaConfig``."""
        U, N = channels.n_users, channels.n_antennas
        S = check_sample_counts(sample_counts, U)
        layout = layout or channels.layout or AntennaLayout.default(N, channels.wavelength)
        if channels.mode == RAYLEIGH_FPA or not channels.links:
            beta_raw = np.ones(U, dtype=np.complex128)
            fixed = channels.h
            slope = np.zeros(U)
            power = np.sum(np.abs(fixed) ** 2, axis=1)
        else:
            beta_raw = channels.path_gains
            fixed = None
            slope = 2 * np.pi * channels.aoa_cos / channels.wavelength
            power = N * np.abs(beta_raw) ** 2
        if normalize:
            s0 = float(S.sum())
            g0 = float(power.max()) if power.max() > 0 else 1.0
            scale = 4.0 * s0 ** 2 / U ** 2
        else:
            s0, g0, scale = 1.0, 1.0, 1.0
        # each user's gain is normalised to unit beamforming power; its channel
        # strength moves into ``load`` so that alpha stays O(1) for every user
        omega = np.maximum(power / g0, np.finfo(float).tiny ** 0.5)
        if fixed is None:
            beta = beta_raw / np.sqrt(g0 * omega)
        else:
            beta = beta_raw
            fixed = fixed / np.sqrt(g0 * omega)[:, None]
        return cls(
            s=S / s0,
            beta=beta,
            load=(S / s0) ** 2 / omega,
            slope=slope,
            rho=cfg.noise_power / (cfg.max_power * g0 * scale),
            w_sel=4.0 * s0 ** 2 / (U ** 2 * scale),
            region_lo=layout.region_lo,
            region_hi=layout.region_hi,
            min_gap=layout.min_gap,
            n_antennas=N,
            layout_mode=layout_mode,
            fixed_b=fixed,
            sample_scale=s0,
            gain_scale=g0,
            objective_scale=scale,
        )


@dataclass
class PddState:
    """Primal copies, multipliers and penalty of the augmented Lagrangian."""

    e: np.ndarray
    e_tilde: np.ndarray
    e_hat: np.ndarray
    e_bar: np.ndarray
    alpha: np.ndarray
    alpha_tilde: np.ndarray
    alpha_hat: np.ndarray
    gamma: np.ndarray
    eta_tilde: float
    eta_hat: float
    eta_bar: float
    c: float
    c_tilde: float
    q: np.ndarray
    q_tilde: np.ndarray
    b: np.ndarray
    x: np.ndarray
    x_diff: np.ndarray
    kappa: float
    duals: dict = field(default_factory=dict)
    rho: float = 0.0

    @property
    def eta(self):
        """Receive-noise term ``rho c / eta_bar`` (held equal by construction)."""
        return self.rho * self.c / self.eta_bar

    def copy(self):
        kwargs = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, np.ndarray):
                val = val.copy()
            elif isinstance(val, dict):
                val = {k: np.array(v, copy=True) for k, v in val.items()}
            kwargs[f.name] = val
        return replace(self, **kwargs)


def zero_duals(problem):
    U, N, P = problem.n_users, problem.n_antennas, problem.n_rows
    shapes = {
        "e_tilde": U, "e_hat": U, "e_bar": U, "gamma": U, "b": (U, N),
        "alpha_tilde": U, "alpha_hat": U, "c_tilde": (), "eta_tilde": (),
        "eta_bar": (), "q": N, "x_diff": (P, max(N - 1, 0)),
    }
    return {k: np.zeros(shape, dtype=np.complex128 if COUPLINGS[k] else float)
            for k, shape in shapes.items()}


def effective(problem, q, b):
    """``beta_u q^H b_u`` for every user."""
    return problem.beta * (b @ np.conj(q))


def residuals(problem, st):
    """All coupling-constraint residuals keyed like the multipliers."""
    res = {
        "e_tilde": st.e - st.e_tilde,
        "e_hat": st.e - st.e_hat,
        "e_bar": st.e - st.e_bar,
        "gamma": st.gamma - effective(problem, st.q, st.b),
        "b": (problem.steering(st.x) - st.b) if problem.movable else np.zeros_like(st.b),
        "alpha_tilde": st.alpha - st.alpha_tilde,
        "alpha_hat": st.alpha_hat - st.alpha_tilde * st.c_tilde,
        "c_tilde": np.asarray(st.c - st.c_tilde),
        "eta_tilde": np.asarray(st.eta_tilde - st.eta_hat),
        "eta_bar": np.asarray(st.eta_bar - st.eta_hat * st.eta_tilde),
        "q": st.q - st.q_tilde,
        "x_diff": st.x_diff - np.diff(st.x, axis=1),
    }
    return res


def max_violation(problem, st):
    return max((float(np.max(np.abs(r))) if np.size(r) else 0.0)
               for r in residuals(problem, st).values())


def objective(problem, st):
    """Rescaled surrogate ``w (M - eta_hat)^2 + rho c / eta_bar``."""
    return problem.w_sel * (problem.mass - st.eta_hat) ** 2 + problem.rho * st.c / st.eta_bar


def augmented_lagrangian(problem, st):
    """Objective plus ``1/(2 kappa) sum ||residual + kappa * multiplier||^2``."""
    k = st.kappa
    if k <= 0:
        raise ValueError("penalty kappa must be positive")
    total = 0.0
    for name, r in residuals(problem, st).items():
        total += float(np.sum(np.abs(r + k * st.duals[name]) ** 2))
    return objective(problem, st) + total / (2 * k)


def principal_beamformer(h):
    """Unit-norm principal eigenvector of ``sum_u h_u h_u^H``."""
    h = np.atleast_2d(h)
    gram = h.T @ np.conj(h)
    _, vecs = np.linalg.eigh(gram)
    q = vecs[:, -1]
    # fix the global phase so the result is reproducible
    k = int(np.argmax(np.abs(q)))
    q = q * np.exp(-1j * np.angle(q[k]))
    return q / np.linalg.norm(q)


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else None


def warm_beamformer(problem, h, selected):
    """Best of a few closed-form beamformers for the selected rows of ``h``.

    Candidates are the principal eigenvector of the normalised channels, the
    sample-weighted channel sum in raw units (MRT) and the principal
    eigenvector weighted by ``load``, which leans toward the weakest users.
    The winner minimises the worst ``load_u / |q^H h_u|^2``.
    """
    sel = np.asarray(selected, dtype=bool)
    if not sel.any():
        sel = np.ones(problem.n_users, dtype=bool)
    hs, load = h[sel], problem.load[sel]
    raw_scale = problem.s[sel] / np.sqrt(load)        # s_u sqrt(omega_u), the raw-unit weight
    cands = [principal_beamformer(hs), _unit(raw_scale @ hs),
             principal_beamformer(np.sqrt(load)[:, None] * hs)]
    best, best_cost = None, np.inf
    for q in cands:
        if q is None:
            continue
        gains = np.abs(hs @ np.conj(q)) ** 2
        with np.errstate(divide="ignore"):
            cost = float(np.max(np.where(gains > 0, load / gains, np.inf)))
        if best is None or cost < best_cost:
            best, best_cost = q, cost
    return best


def initial_state(problem, layout, kappa, selection=None):
    """Consistent warm start: everything selected, beamformer from ``warm_beamformer``."""
    U, N = problem.n_users, problem.n_antennas
    pos = np.asarray(layout.positions, dtype=float)
    x = np.tile(pos, (problem.n_rows, 1))
    b = problem.steering(x).astype(np.complex128).copy()
    h = problem.beta[:, None] * b
    e = np.ones(U) if selection is None else np.asarray(selection, dtype=float)
    q = warm_beamformer(problem, h, e > 0.5)
    gamma = effective(problem, q, b)
    alpha = np.abs(gamma) ** 2
    safe = np.where(alpha > 0, alpha, np.inf)
    c = float(np.max(e * problem.load / safe)) if e.any() else 0.0
    mass = float(problem.s @ e)
    st = PddState(
        e=e.copy(), e_tilde=e.copy(), e_hat=e.copy(), e_bar=e.copy(),
        alpha=alpha.copy(), alpha_tilde=alpha.copy(), alpha_hat=alpha * c,
        gamma=gamma, eta_tilde=mass, eta_hat=mass, eta_bar=max(mass * mass, ETA_BAR_FLOOR),
        c=c, c_tilde=c, q=q, q_tilde=q.copy(), b=b, x=x, x_diff=np.diff(x, axis=1),
        kappa=float(kappa), duals=zero_duals(problem), rho=problem.rho,
    )
    return st


def random_state(problem, rng, kappa=None):
    """Random state that satisfies every hard (non-penalised) constraint.

    Used by property tests: the block updates must never increase the
    augmented Lagrangian from any such state.
    """
    U, N, P = problem.n_users, problem.n_antennas, problem.n_rows
    lo, hi, v = problem.region_lo, problem.region_hi, problem.min_gap
    e = rng.integers(0, 2, U).astype(float)
    e_tilde = rng.uniform(0, 1, U)
    e_hat = rng.uniform(0, 1, U)
    b = np.exp(1j * rng.uniform(0, 2 * np.pi, (U, N)))
    if not problem.movable:
        b = problem.fixed_b.copy()
    gamma = rng.standard_normal(U) + 1j * rng.standard_normal(U)
    alpha = rng.uniform(0, 1, U) * np.abs(gamma) ** 2
    alpha_tilde = rng.uniform(0, 2, U)
    c_tilde = rng.uniform(0.1, 5)
    alpha_hat = rng.uniform(0, 3, U)
    e_bar = np.minimum(rng.uniform(0, 1, U), alpha_hat / problem.load)
    q = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    q_tilde = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    q_tilde /= np.linalg.norm(q_tilde)
    x = np.sort(rng.uniform(lo, hi, (P, N)), axis=1)
    x_diff = v + rng.uniform(0, 1, (P, max(N - 1, 0)))
    k = float(kappa if kappa is not None else 10 ** rng.uniform(-2, 1))
    duals = zero_duals(problem)
    for name, lam in duals.items():
        shape = lam.shape
        val = rng.standard_normal(shape)
        if COUPLINGS[name]:
            val = val + 1j * rng.standard_normal(shape)
        duals[name] = val * rng.uniform(0, 2)
    return PddState(
        e=e, e_tilde=e_tilde, e_hat=e_hat, e_bar=e_bar,
        alpha=alpha, alpha_tilde=alpha_tilde, alpha_hat=alpha_hat, gamma=gamma,
        eta_tilde=float(problem.s @ e_hat), eta_hat=float(problem.s @ e_tilde),
        eta_bar=rng.uniform(0.5, 50), c=rng.uniform(0, 5), c_tilde=c_tilde,
        q=q, q_tilde=q_tilde, b=b, x=x, x_diff=x_diff, kappa=k, duals=duals,
        rho=problem.rho,
    )
