"""Block updates of the penalty dual decomposition inner loop.

Every function here overwrites a group of variables in ``st`` with the exact
minimiser of the augmented Lagrangian restricted to that group, subject to
the group's hard constraints. That is what keeps the augmented Lagrangian
monotone over an inner iteration. Where the printed closed form of a block
is not that minimiser, the derived one is used; the literal expressions live
in :mod:`airfl.pdd.printed`.

The inner iteration is split into three rounds. Variables inside one round
never share a term, except where noted, and those are updated in sequence.
"""

import numpy as np

from .state import ETA_BAR_FLOOR, SHARED, effective
from . import printed

BINARY_EXACT = "binary-exact"
PAPER_CLOSED_FORM = "paper-closed-form"
E_UPDATE_MODES = (BINARY_EXACT, PAPER_CLOSED_FORM)

POSITION_GRID_PER_WAVELENGTH = 64


def _target(st, name, base, sign=-1.0):
    """``base + sign * kappa * lambda_name`` (shift that completes the square)."""
    return base + sign * st.kappa * st.duals[name]


def _depressed_cubic_roots(p, q):
    """Real roots of ``r^3 + p r + q = 0`` elementwise; shape ``(..., 3)``, missing roots NaN.

    Trigonometric form for three real roots, Cardano otherwise, followed by
    two Newton steps to clean up rounding.
    """
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    out = np.full(p.shape + (3,), np.nan)
    disc = (q / 2) ** 2 + (p / 3) ** 3
    one = disc >= 0
    if np.any(one):
        sq = np.sqrt(disc[one])
        out[one, 0] = np.cbrt(-q[one] / 2 + sq) + np.cbrt(-q[one] / 2 - sq)
    three = ~one                     # here p < 0 necessarily
    if np.any(three):
        m = 2 * np.sqrt(-p[three] / 3)
        arg = np.clip(3 * q[three] / (p[three] * m), -1.0, 1.0)
        theta = np.arccos(arg) / 3
        for j in range(3):
            out[three, j] = m * np.cos(theta - 2 * np.pi * j / 3)
    pp, qq = p[..., None], q[..., None]
    for _ in range(2):
        f = out ** 3 + pp * out + qq
        df = 3 * out ** 2 + pp
        step = np.divide(f, df, out=np.zeros_like(f), where=np.abs(df) > 0)
        out = out - np.where(np.isfinite(step), step, 0.0)
    return out


# ---------------------------------------------------------------------------
# round 1: e, alpha_hat, gamma, b, alpha, c, x_diff, q_tilde


def update_e(problem, st, mode=BINARY_EXACT):
    """Selection update against its three copies.

    ``binary-exact`` picks the better of {0, 1} for the three-term quadratic;
    ``paper-closed-form`` applies the printed clamp formula.
    """
    z1 = _target(st, "e_tilde", st.e_tilde)
    z2 = _target(st, "e_hat", st.e_hat)
    z3 = _target(st, "e_bar", st.e_bar)
    if mode == PAPER_CLOSED_FORM:
        st.e = printed.e_closed_form(st.e_tilde, st.e_hat, st.e_bar, st.kappa,
                                     st.duals["e_tilde"], st.duals["e_hat"], st.duals["e_bar"])
        return st
    if mode != BINARY_EXACT:
        raise ValueError(f"unknown e-update mode {mode!r}")
    mean = (z1 + z2 + z3) / 3.0
    # ties keep the current value so a balanced user does not flip back and forth
    st.e = np.where(mean > 0.5, 1.0, np.where(mean < 0.5, 0.0, st.e))
    return st


def update_alpha_hat(problem, st):
    target = _target(st, "alpha_hat", st.alpha_tilde * st.c_tilde)
    st.alpha_hat = np.maximum(target, st.e_bar * problem.load)
    return st


def update_gamma(problem, st):
    """Projection of ``beta q^H b - kappa lambda`` onto ``{|gamma|^2 >= alpha}``."""
    z = _target(st, "gamma", effective(problem, st.q, st.b))
    radius = np.sqrt(np.maximum(st.alpha, 0.0))
    mag = np.abs(z)
    # a zero target has no direction; reuse the current one (any point on the circle is optimal)
    ref = np.where(mag > 0, z, np.where(st.gamma != 0, st.gamma, 1.0))
    unit = ref / np.abs(ref)
    st.gamma = np.where(mag >= radius, z, radius * unit)
    return st


def update_alpha_gamma(problem, st):
    """Joint minimiser over ``(alpha, gamma)`` subject to ``0 <= alpha <= |gamma|^2``.

    ``gamma`` keeps the phase of its target. When the unconstrained point is
    infeasible the optimum lies on ``alpha = r^2`` and ``r`` is the best
    non-negative root of ``4 r^3 + (2 - 4 A) r - 2 g = 0``.
    """
    G = _target(st, "gamma", effective(problem, st.q, st.b))
    A = np.real(_target(st, "alpha_tilde", st.alpha_tilde))
    g = np.abs(G)
    ref = np.where(g > 0, G, np.where(st.gamma != 0, st.gamma, 1.0))
    unit = ref / np.abs(ref)
    radius = g.copy()
    alpha = np.clip(A, 0.0, None)
    hit = np.flatnonzero(A > g ** 2)
    if hit.size:
        # r^3 + p r + q0 = 0
        roots = _depressed_cubic_roots((1.0 - 2.0 * A[hit]) / 2.0, -g[hit] / 2.0)
        ok = np.isfinite(roots) & (roots >= 0)
        cands = np.concatenate([np.where(ok, roots, 0.0), np.zeros((hit.size, 1))], axis=1)
        cost = (cands - g[hit, None]) ** 2 + (cands ** 2 - A[hit, None]) ** 2
        r = cands[np.arange(hit.size), np.argmin(cost, axis=1)]
        radius[hit], alpha[hit] = r, r * r
    st.gamma = radius * unit
    st.alpha = np.minimum(alpha, np.abs(st.gamma) ** 2)
    return st


def update_b(problem, st):
    """One coordinate sweep of unit-modulus phase alignment per user."""
    if not problem.movable:
        return st
    a = problem.steering(st.x)
    z = _target(st, "b", a, sign=+1.0)
    t = _target(st, "gamma", st.gamma, sign=+1.0)
    qc = np.conj(st.q)
    b = st.b.copy()
    for u in range(problem.n_users):
        beta = problem.beta[u]
        total = beta * np.dot(qc, b[u])
        for i in range(problem.n_antennas):
            rest = t[u] - (total - beta * qc[i] * b[u, i])
            coef = z[u, i] + rest * np.conj(beta) * st.q[i]
            if coef != 0:
                new = coef / abs(coef)
                total += beta * qc[i] * (new - b[u, i])
                b[u, i] = new
    st.b = b
    return st


def update_alpha(problem, st):
    target = _target(st, "alpha_tilde", st.alpha_tilde)
    st.alpha = np.clip(target, 0.0, np.abs(st.gamma) ** 2)
    return st


def update_c(problem, st):
    target = st.c_tilde - st.kappa * st.duals["c_tilde"] - st.kappa * problem.rho / st.eta_bar
    st.c = max(0.0, float(np.real(target)))
    return st


def update_x_diff(problem, st):
    if st.x.shape[1] < 2:
        return st
    target = _target(st, "x_diff", np.diff(st.x, axis=1))
    st.x_diff = np.maximum(target, problem.min_gap)
    return st


def update_q_tilde(problem, st):
    z = _target(st, "q", st.q, sign=+1.0)
    norm = np.linalg.norm(z)
    if norm > 0:
        st.q_tilde = z / norm
    return st


ROUND1 = (update_e, update_alpha_hat, update_gamma, update_b, update_alpha_gamma,
          update_c, update_x_diff, update_q_tilde)


# ---------------------------------------------------------------------------
# round 2: (e_tilde, eta_hat), (e_hat, eta_tilde), e_bar, alpha_tilde, q, x


def _sum_constrained(z, s, kappa, quad, lin):
    """Minimise ``1/(2 kappa) ||y - z||^2 + quad/2 t^2 - lin t`` over ``y in [0, 1]^U``, ``t = s . y``.

    Stationarity gives ``y = clip(z - kappa mu s, 0, 1)`` with ``mu = quad t - lin``;
    ``t`` is piecewise linear and non-increasing in ``mu``, so the root is found
    segment by segment between the clipping breakpoints.
    """
    s = np.asarray(s, dtype=float)

    def y_of(mu):
        return np.clip(z - kappa * mu * s, 0.0, 1.0)

    # each breakpoint is where a coordinate enters or leaves the box
    brk = np.unique(np.concatenate([z / (kappa * s), (z - 1.0) / (kappa * s)]))
    ys = np.clip(z[None, :] - kappa * brk[:, None] * s[None, :], 0.0, 1.0)
    vals = quad * (ys @ s) - lin - brk
    # gap is strictly decreasing in mu; locate the segment holding its root
    idx = int(np.searchsorted(-vals, 0.0))
    lo = brk[idx - 1] if idx > 0 else brk[0] - 1.0
    hi = brk[idx] if idx < brk.size else brk[-1] + 1.0
    mid = 0.5 * (lo + hi)
    y_mid = z - kappa * mid * s
    free = (y_mid > 0.0) & (y_mid < 1.0)
    upper = y_mid >= 1.0
    # on this segment: mu = quad (sum_free s (z - kappa mu s) + sum_upper s) - lin
    const = quad * (float(s[free] @ z[free]) + float(s[upper].sum())) - lin
    slope = 1.0 + quad * kappa * float(s[free] @ s[free])
    mu = const / slope
    y = y_of(mu)
    return y, float(s @ y)


def update_e_tilde(problem, st):
    """Joint update of ``e_tilde`` and ``eta_hat = s . e_tilde``."""
    k = st.kappa
    z = _target(st, "e_tilde", st.e, sign=+1.0)
    p = st.eta_tilde + k * st.duals["eta_tilde"]
    r = st.eta_bar + k * st.duals["eta_bar"]
    w, M = problem.w_sel, problem.mass
    quad = 2 * w + (1 + st.eta_tilde ** 2) / k
    lin = 2 * w * M + (p + st.eta_tilde * r) / k
    st.e_tilde, st.eta_hat = _sum_constrained(z, problem.s, k, float(quad), float(lin))
    return st


def update_e_hat(problem, st):
    """Joint update of ``e_hat`` and ``eta_tilde = s . e_hat``."""
    k = st.kappa
    z = _target(st, "e_hat", st.e, sign=+1.0)
    p = st.eta_hat - k * st.duals["eta_tilde"]
    r = st.eta_bar + k * st.duals["eta_bar"]
    quad = (1 + st.eta_hat ** 2) / k
    lin = (p + st.eta_hat * r) / k
    st.e_hat, st.eta_tilde = _sum_constrained(z, problem.s, k, float(quad), float(lin))
    return st


def update_e_bar(problem, st):
    target = _target(st, "e_bar", st.e, sign=+1.0)
    upper = np.minimum(1.0, st.alpha_hat / problem.load)
    st.e_bar = np.clip(target, 0.0, upper)
    return st


def update_e_bar_alpha_hat(problem, st):
    """Joint projection of ``(e_bar, alpha_hat)`` onto ``{0 <= e_bar <= 1, load e_bar <= alpha_hat}``."""
    E = np.real(_target(st, "e_bar", st.e, sign=+1.0))
    H = np.real(_target(st, "alpha_hat", st.alpha_tilde * st.c_tilde))
    L = problem.load
    inside = (E >= 0) & (E <= 1) & (L * E <= H)
    # exact projections onto the three boundary pieces
    t = np.clip((E + L * H) / (1.0 + L * L), 0.0, 1.0)
    cands = [(t, L * t), (np.zeros_like(E), np.maximum(H, 0.0)), (np.ones_like(E), np.maximum(H, L))]
    dist = np.stack([(y - E) ** 2 + (a - H) ** 2 for y, a in cands])
    pick = np.argmin(dist, axis=0)
    idx = np.arange(E.size)
    y = np.stack([c[0] for c in cands])[pick, idx]
    a = np.stack([c[1] for c in cands])[pick, idx]
    st.e_bar = np.where(inside, E, y)
    st.alpha_hat = np.where(inside, H, np.maximum(a, L * st.e_bar))
    return st


def update_alpha_tilde(problem, st):
    k = st.kappa
    num = (st.alpha + k * st.duals["alpha_tilde"]) + st.c_tilde * (st.alpha_hat + k * st.duals["alpha_hat"])
    st.alpha_tilde = num / (1.0 + st.c_tilde ** 2)
    return st


def update_q(problem, st):
    """Regularised least squares in ``q`` (exact; no fixed-point iteration needed)."""
    k = st.kappa
    t = st.gamma + k * st.duals["gamma"]
    V = (problem.beta[:, None] * st.b).T          # columns v_u = beta_u b_u
    z = st.q_tilde - k * st.duals["q"]
    lhs = V @ np.conj(V).T + np.eye(problem.n_antennas)
    rhs = V @ np.conj(t) + z
    st.q = np.linalg.solve(lhs, rhs)
    return st


def _position_terms(problem, st, row, n):
    """Coefficients of the position cost ``sum_u |exp(j A_u x) - z_u|^2 + sum_k (o_k + x)^2``."""
    k = st.kappa
    if problem.layout_mode == SHARED:
        A = problem.slope
        z = st.b[:, n] - k * st.duals["b"][:, n]
    else:
        A = problem.slope[row:row + 1]
        z = st.b[row:row + 1, n] - k * st.duals["b"][row:row + 1, n]
    x = st.x[row]
    offsets = []
    if n > 0:
        offsets.append(-(st.x_diff[row, n - 1] + k * st.duals["x_diff"][row, n - 1]) - x[n - 1])
    if n < x.size - 1:
        offsets.append(st.x_diff[row, n] + k * st.duals["x_diff"][row, n] - x[n + 1])
    return A, z, offsets


def _position_cost(A, z, offsets, xs, phase=None):
    """Restricted augmented-Lagrangian cost (times 2 kappa) of one antenna at ``xs``.

    ``phase`` may carry precomputed ``exp(j A_u xs)``.
    """
    if phase is None:
        phase = np.exp(1j * np.multiply.outer(A, xs))
    # sum_u |p_u - z_u|^2 with |p_u| = 1
    cost = A.size + float(np.vdot(z, z).real) - 2 * np.real(np.conj(z) @ phase)
    for off in offsets:
        cost = cost + (off + xs) ** 2
    return cost


def _position_grid(problem, grid_per_wavelength):
    """Search grid over the region and its steering phases, cached on the problem."""
    key = ("position-grid", grid_per_wavelength)
    cache = problem.cache
    if key not in cache:
        lo, hi = problem.region_lo, problem.region_hi
        fastest = float(np.max(np.abs(problem.slope))) if problem.slope.size else 0.0
        period = 2 * np.pi / fastest if fastest > 0 else (hi - lo)
        step = max(period / grid_per_wavelength, 1e-9)
        grid = np.linspace(lo, hi, max(int(np.ceil((hi - lo) / step)) + 1, 2))
        cache[key] = (grid, np.exp(1j * problem.slope[:, None] * grid[None, :]))
    return cache[key]


def _closed_form_position(A, z, offsets, current, lo, hi):
    """First-order solution of the phase-linearised position cost, clamped to C."""
    # unwrap each target phase to the branch closest to the current phase
    ang = np.angle(z)
    ang = ang + 2 * np.pi * np.round((A * current - ang) / (2 * np.pi))
    num = float(A @ ang) - sum(offsets)
    den = float(A @ A) + len(offsets)
    if den == 0:
        return current
    cand = num / den
    if lo <= cand <= hi:
        return cand
    ends = _position_cost(A, z, offsets, np.array([hi, lo]))
    return hi if ends[0] < ends[1] else lo


def _newton_polish(A, z, offsets, x0, lo, hi, steps=8):
    """Safeguarded Newton iterations on the smooth position cost, kept inside ``[lo, hi]``."""
    mag, ph = np.abs(z), np.angle(z)
    w1 = mag * A
    w2 = w1 * A
    m = len(offsets)
    osum = float(sum(offsets))
    x = x0
    for _ in range(steps):
        arg = A * x - ph
        g = 2 * float(w1 @ np.sin(arg)) + 2 * (osum + m * x)
        h = 2 * float(w2 @ np.cos(arg)) + 2.0 * m
        if h <= 0:
            break
        nxt = min(max(x - g / h, lo), hi)
        if abs(nxt - x) < 1e-13:
            x = nxt
            break
        x = nxt
    return x


def update_x(problem, st, grid_per_wavelength=POSITION_GRID_PER_WAVELENGTH):
    """Antenna-by-antenna minimisation of the position block over ``[lo, hi]``.

    Candidates are the current coordinate, the clamped first-order solution
    and the best point of a dense grid refined by Newton steps; the
    lowest-cost candidate wins, so the block cost never increases.
    """
    if not problem.movable:
        return st
    lo, hi = problem.region_lo, problem.region_hi
    grid, phases = _position_grid(problem, grid_per_wavelength)
    for row in range(problem.n_rows):
        rows = phases if problem.layout_mode == SHARED else phases[row:row + 1]
        for n in range(problem.n_antennas):
            A, z, offsets = _position_terms(problem, st, row, n)
            current = st.x[row, n]
            best = grid[int(np.argmin(_position_cost(A, z, offsets, grid, rows)))]
            cands = np.array([current, _closed_form_position(A, z, offsets, current, lo, hi), best,
                              _newton_polish(A, z, offsets, best, lo, hi)])
            vals = _position_cost(A, z, offsets, cands)
            i = int(np.argmin(vals))
            # move only on a real decrease, not on rounding noise
            if vals[i] < vals[0] - 1e-14 * (1.0 + abs(vals[0])):
                st.x[row, n] = cands[i]
    return st


ROUND2 = (update_e_tilde, update_e_hat, update_e_bar_alpha_hat, update_alpha_tilde, update_q,
          update_x)


# ---------------------------------------------------------------------------
# round 3: eta_bar, c_tilde


def update_eta_bar(problem, st):
    """Positive root of ``y^2 (y - z) = kappa rho c`` (unique for ``c > 0``)."""
    k = st.kappa
    z = float(np.real(st.eta_hat * st.eta_tilde - k * st.duals["eta_bar"]))
    rhs = k * problem.rho * st.c
    if rhs <= 0:
        st.eta_bar = max(z, ETA_BAR_FLOOR)
        return st
    shift = z / 3.0
    roots = _depressed_cubic_roots(-z * z / 3.0, -2.0 * z ** 3 / 27.0 - rhs) + shift
    real = roots[np.isfinite(roots)]
    y = float(real[real > 0].max()) if np.any(real > 0) else max(z, 1.0)
    for _ in range(3):
        f = y * y * (y - z) - rhs
        df = 3 * y * y - 2 * z * y
        if df == 0:
            break
        y_new = y - f / df
        if y_new <= 0:
            break
        y = y_new
    st.eta_bar = max(y, ETA_BAR_FLOOR)
    return st


def update_c_tilde(problem, st):
    k = st.kappa
    num = (st.c + k * st.duals["c_tilde"]) + float(np.sum(st.alpha_tilde * (st.alpha_hat + k * st.duals["alpha_hat"])))
    st.c_tilde = float(np.real(num)) / (1.0 + float(np.sum(st.alpha_tilde ** 2)))
    return st


def update_c_chain(problem, st):
    """Joint minimiser over ``(alpha_tilde, c_tilde, c)``.

    For fixed ``c_tilde`` both ``alpha_tilde`` and ``c`` have closed forms;
    what remains is a one-dimensional rational function of ``c_tilde``
    whose stationary points are roots of a quintic (``c`` at zero) or a
    quartic (``c`` positive). All real roots and the current point are
    compared, so the block cost never increases.
    """
    k = st.kappa
    a = st.alpha + k * st.duals["alpha_tilde"]
    h = st.alpha_hat + k * st.duals["alpha_hat"]
    lc = float(np.real(k * st.duals["c_tilde"]))
    tau = k * problem.rho / st.eta_bar
    P, Q, R = float(a @ a), float(a @ h), float(h @ h)

    def cost(ct):
        m = ct - lc
        tail = np.where(m >= tau, 2 * tau * m - tau * tau, m * m)
        return (R - 2 * Q * ct + P * ct * ct) / (1 + ct * ct) + tail

    split = tau + lc
    quintic = np.array([-lc, 2.0, Q - 2 * lc, 1.0 + P - R, -lc - Q])
    cands = [np.array([float(st.c_tilde), split])]
    if tau > 0:
        # the quartic times r has the same nonzero roots; stack both companions
        quartic = np.array([0.0, 2 * tau + Q, P - R, tau - Q, 0.0]) / tau
        comp = np.zeros((2, 5, 5))
        comp[0, 0], comp[1, 0] = -quintic, -quartic
        comp[:, 1:, :-1] = np.eye(4)
        roots = np.linalg.eigvals(comp)
    else:
        comp = np.zeros((5, 5))
        comp[0] = -quintic
        comp[1:, :-1] = np.eye(4)
        roots = np.linalg.eigvals(comp)[None, :]
    for i, sel in enumerate(roots):
        scale = max(1.0, float(np.abs(sel).max()))
        real = sel[np.abs(sel.imag) <= 1e-8 * scale].real
        cands.append(real[real <= split] if i == 0 else real[real >= split])
    cands = np.concatenate(cands)
    ct = float(cands[int(np.argmin(cost(cands)))])
    st.c_tilde = ct
    st.alpha_tilde = (a + ct * h) / (1.0 + ct * ct)
    st.c = max(0.0, ct - lc - tau)
    return st


ROUND3 = (update_eta_bar, update_c_chain)


def update_round1(problem, st, e_mode=BINARY_EXACT, freeze_selection=False):
    for step in ROUND1:
        if step is update_e:
            if not freeze_selection:
                update_e(problem, st, e_mode)
        else:
            step(problem, st)
    return st


def update_round2(problem, st, freeze_layout=False):
    for step in ROUND2:
        if step is update_x and freeze_layout:
            continue
        step(problem, st)
    return st


def update_round3(problem, st):
    for step in ROUND3:
        step(problem, st)
    return st


def dual_penalty_update(problem, st, residual_map, penalty_decay, decrease_penalty):
    """``lambda += residual / kappa`` for every coupling; optionally ``kappa *= decay``."""
    k = st.kappa
    for name, r in residual_map.items():
        st.duals[name] = st.duals[name] + r / k
    if decrease_penalty:
        st.kappa = k * penalty_decay
    return st
