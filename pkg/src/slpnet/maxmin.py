"""Exact max-min QoS precoding over the reduced symbol set.

``solve_maxmin`` maximizes the minimum QoS distance ``min_{k,l} d_{k,l}``
subject to the reduced power budget ``||X||_F^2 <= P * N_par`` using a
temperature-annealed softmin surrogate with projected gradient ascent,
followed by a subgradient polish on the exact minimum.  ``oracle_solve``
solves the same convex program by bisection on the objective with a
projected-subgradient feasibility search; it shares no iteration code
with the main solver and exists to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .constellation import (
    Constellation,
    enumerate_reduced_symbol_vectors,
    qos_matrix,
    rotation_phasors,
)

_ANNEAL_ROUNDS = 12
_ANNEAL_SHRINK = 0.2
_POLISH_ITERS = 200
_EXACT_POLISH_ITERS = 400
_ACTIVE_CAP = 128


@dataclass
class SolveConfig:
    """Solver settings.

    Attributes
    ----------
    power_budget : float
        Per-symbol-vector average power ``P``; the reduced matrix obeys
        ``||X||_F^2 <= P * N_par``.
    tol : float
        Relative objective tolerance.
    max_iters : int
        Gradient-step budget per restart.
    smoothing : float
        Initial softmin temperature, as a fraction of the objective's
        upper bound.
    restarts : int
        Number of starts (one deterministic matched-filter start plus
        ``restarts - 1`` random ones).
    seed : int
        Seed for the random restarts (and the oracle's random starts).
    """

    power_budget: float = 1.0
    tol: float = 1e-5
    max_iters: int = 5000
    smoothing: float = 0.25
    restarts: int = 2
    seed: int = 0

    def validate(self) -> None:
        if not self.power_budget > 0:
            raise ValueError(f"power_budget must be > 0, got {self.power_budget}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.smoothing > 0:
            raise ValueError(f"smoothing must be > 0, got {self.smoothing}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")


@dataclass
class SolveResult:
    """Solver output.

    Attributes
    ----------
    X : (N_t, N_par) complex array
        Reduced precoding matrix.
    t : float
        Achieved minimum QoS distance (exact minimum at ``X``).
    status : str
        ``"converged"`` or ``"max_iters"``.
    iterations : int
        Gradient/subgradient steps taken by the reported start.
    feasibility_residual : float
        ``max(0, ||X||_F^2 - P * N_par)``.
    """

    X: np.ndarray
    t: float
    status: str
    iterations: int
    feasibility_residual: float


def project_power(X: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto the Frobenius ball ``||X||_F^2 <= budget``."""
    if not budget > 0:
        raise ValueError(f"budget must be > 0, got {budget}")
    X = np.asarray(X, dtype=np.complex128)
    nrm2 = float(np.sum(X.real**2 + X.imag**2))
    if nrm2 <= budget:
        return X
    return X * np.sqrt(budget / nrm2)


def evaluate_objective(H: np.ndarray, X: np.ndarray, c: Constellation) -> float:
    """Exact minimum QoS distance of ``X`` over the reduced symbol set."""
    H = np.asarray(H, dtype=np.complex128)
    X = np.asarray(X, dtype=np.complex128)
    if H.ndim != 2 or X.ndim != 2:
        raise ValueError(f"H and X must be 2-D, got {H.shape} and {X.shape}")
    K = H.shape[0]
    symbols = enumerate_reduced_symbol_vectors(c, K)
    if X.shape[1] != symbols.shape[0]:
        raise ValueError(
            f"X has {X.shape[1]} columns; reduced symbol set has {symbols.shape[0]}"
        )
    return float(qos_matrix(H, X, symbols, c).min())


def _upper_bound(H: np.ndarray, budget: float, sinphi: float) -> float:
    """Single-constraint bound max_k ||h_k|| * sqrt(budget) * sin(phi)."""
    norms = np.sqrt(np.sum(H.real**2 + H.imag**2, axis=1))
    return float(norms.max() * np.sqrt(budget) * sinphi)


def _matched_filter_start(H: np.ndarray, phasors: np.ndarray, budget: float) -> np.ndarray:
    """Columns along sum_k h_k * e^{j*theta_{k,l}}, scaled to the budget."""
    X0 = H.conj().T @ np.conj(phasors)
    nrm = np.linalg.norm(X0)
    if nrm == 0.0:
        return np.zeros_like(X0)
    return X0 * (np.sqrt(budget) / nrm)


def _random_start(rng: np.random.Generator, shape: tuple, budget: float) -> np.ndarray:
    X0 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return X0 * (np.sqrt(budget) / np.linalg.norm(X0))


def solve_maxmin(H: np.ndarray, c: Constellation, cfg: SolveConfig) -> SolveResult:
    """Solve the reduced max-min QoS problem.

    Runs temperature-annealed projected gradient ascent on a softmin of
    all linearized margins, from a matched-filter start plus seeded
    random restarts, then polishes the exact minimum with projected
    subgradient steps.  The best start by objective (ties to the earlier
    start) wins and gets a final epsilon-active steepest-ascent polish,
    which fixes the slow zigzag of single-constraint subgradient steps on
    ill-conditioned instances.  ``t`` is always the exact minimum at
    ``X``.
    """
    cfg.validate()
    H = np.ascontiguousarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
        raise ValueError(f"H must be a (K, N_t) matrix, got shape {H.shape}")
    K, n_t = H.shape
    symbols = enumerate_reduced_symbol_vectors(c, K)
    n_par = symbols.shape[0]
    budget = cfg.power_budget * n_par
    if not np.any(H):
        return SolveResult(
            X=np.zeros((n_t, n_par), dtype=np.complex128),
            t=0.0,
            status="converged",
            iterations=0,
            feasibility_residual=0.0,
        )

    phasors = np.ascontiguousarray(rotation_phasors(c, symbols))
    phi = c.half_angle
    sinphi, cosphi = float(np.sin(phi)), float(np.cos(phi))
    upper = _upper_bound(H, budget, sinphi)
    temps = cfg.smoothing * upper * _ANNEAL_SHRINK ** np.arange(_ANNEAL_ROUNDS)
    improve_abs = 1e-10 * upper

    best = None  # (t, restart_index, X, iterations, converged)
    for r in range(cfg.restarts):
        if r == 0:
            X = _matched_filter_start(H, phasors, budget)
            if not np.any(X):  # degenerate direction; fall back to random
                X = _random_start(np.random.default_rng([cfg.seed, r]), (n_t, n_par), budget)
        else:
            X = _random_start(np.random.default_rng([cfg.seed, r]), (n_t, n_par), budget)
        # Rounds share the cfg.max_iters budget on demand: easy rounds stall
        # after a handful of steps, leaving the rest for the sharp ones.
        steps = 0
        converged = True
        for temp in temps:
            left = cfg.max_iters - steps
            if left <= 0:
                converged = False
                break
            used, round_ok = kernels.ascent_run(
                H, X, phasors, sinphi, cosphi, budget, np.array([temp]), left,
                improve_abs, 0.0,
            )
            steps += used
            converged = converged and round_ok
        t_polish, polish_steps = kernels.polish_run(
            H, X, phasors, sinphi, cosphi, budget, _POLISH_ITERS,
        )
        # Scaling any strictly feasible X to the boundary multiplies every
        # margin by the same factor > 1, so inflate when the minimum is
        # positive.
        nrm2 = float(np.sum(X.real**2 + X.imag**2))
        if t_polish > 0.0 and nrm2 < budget * (1.0 - 1e-12) and nrm2 > 0.0:
            X *= np.sqrt(budget / nrm2)
        t_exact = evaluate_objective(H, X, c)
        if best is None or t_exact > best[0]:
            best = (t_exact, r, X, steps + polish_steps, converged)

    t_best, _, X_best, iters, converged = best
    # Final certified polish on the winner.  Single-constraint subgradient
    # steps zigzag when two margins are nearly tied (ill-conditioned H);
    # the minimum-norm direction over the near-active set escapes that
    # corner.  The target 2 * upper is unattainable, so the search simply
    # maximizes until its epsilon ladder bottoms out or the cap is hit.
    rows = _margin_rows(H, phasors, sinphi, cosphi)
    xr = np.concatenate([X_best.real.ravel(), X_best.imag.ravel()])
    m_pol, x_pol, used = _feasibility_search(
        rows, budget, 2.0 * upper, [xr], _EXACT_POLISH_ITERS,
    )
    iters += used
    if x_pol is not None and m_pol > t_best:
        X_best = (
            x_pol[: n_t * n_par].reshape(n_t, n_par)
            + 1j * x_pol[n_t * n_par :].reshape(n_t, n_par)
        )
        t_best = evaluate_objective(H, X_best, c)
    residual = max(0.0, float(np.sum(X_best.real**2 + X_best.imag**2)) - budget)
    return SolveResult(
        X=X_best,
        t=t_best,
        status="converged" if converged else "max_iters",
        iterations=iters,
        feasibility_residual=residual,
    )


# --------------------------------------------------------------------------
# Independent verification oracle: bisection on t with a projected
# subgradient feasibility search.  Works on the explicit linear constraint
# set (one real row per margin) rather than the solver's smoothed softmin
# ascent; the two routes share only the epsilon-active polish primitive
# below, which the solver uses as a final refinement step.
# --------------------------------------------------------------------------


def _margin_rows(H, phasors, sinphi, cosphi):
    """All margin constraints as real rows.

    Margin ``j`` of the packed real precoder vector ``xr = [Re X; Im X]``
    (column-major within each half) is ``rows[j] @ xr``.  Rows come in
    the order (branch +, user, column) then (branch -, user, column).
    """
    K, n_t = H.shape
    L = phasors.shape[1]
    rows = np.empty((2 * K * L, 2 * n_t * L))
    j = 0
    for s in (1.0, -1.0):
        for k in range(K):
            for l in range(L):
                g = np.zeros((n_t, L), dtype=np.complex128)
                g[:, l] = (sinphi - 1j * s * cosphi) * np.conj(phasors[k, l]) * np.conj(H[k, :])
                rows[j, : n_t * L] = g.real.ravel()
                rows[j, n_t * L:] = g.imag.ravel()
                j += 1
    return rows


def _simplex_project(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.max(np.where(u - css / idx > 0, idx, 0))
    return np.maximum(v - css[rho - 1] / rho, 0.0)


def _minnorm_subgradient(rows):
    """Minimum-norm convex combination of the given constraint rows.

    The steepest-descent direction of a max of linear functions is the
    minimum-norm element of the convex hull of the active gradients;
    found here by projected gradient on the simplex weights.
    """
    if rows.shape[0] == 1:
        d = rows[0]
        return d, float(np.linalg.norm(d))
    if rows.shape[0] == 2:
        # Closed form on a segment: the nearest point to the origin on
        # the chord between the two rows.
        a, b = rows
        ab = a - b
        denom = float(ab @ ab)
        lam = float(np.clip((b @ (b - a)) / denom, 0.0, 1.0)) if denom > 0 else 0.5
        d = lam * a + (1.0 - lam) * b
        return d, float(np.linalg.norm(d))
    G = rows @ rows.T
    lam = np.full(rows.shape[0], 1.0 / rows.shape[0])
    bound = float(np.max(np.sum(np.abs(G), axis=1)))  # Gershgorin
    if bound <= 0.0:
        return rows[0], 0.0
    lr = 1.0 / bound
    for _ in range(120):
        lam_new = _simplex_project(lam - lr * (G @ lam))
        if float(np.linalg.norm(lam_new - lam)) < 1e-14:
            lam = lam_new
            break
        lam = lam_new
    d = lam @ rows
    return d, float(np.linalg.norm(d))


def _feasibility_search(rows, budget, target, starts, max_iters):
    """Drive the minimum margin up toward ``target`` inside the power ball.

    Subgradient descent on the maximum constraint violation: each step
    moves along the minimum-norm subgradient of the violated set (the
    margins within ``eps`` of the minimum) with an exact line search on
    the piecewise-linear profile, projecting back onto the ball.  ``eps``
    shrinks whenever the direction vanishes or stops improving, which
    certifies approximate optimality at that width.  Returns the best
    certified minimum margin, the iterate achieving it, and the number
    of steps used.
    """
    radius = np.sqrt(budget)
    best_m = -np.inf
    best_x = None
    used = 0

    def certified(xr):
        m = float((rows @ xr).min())
        nrm = float(np.linalg.norm(xr))
        if nrm > radius:
            return m * radius / nrm, xr * (radius / nrm)
        if m > 0.0 and 0.0 < nrm < radius * (1.0 - 1e-12):
            # margins are 1-homogeneous: inflating to the boundary helps
            return m * radius / nrm, xr * (radius / nrm)
        return m, xr

    for x0 in starts:
        x = x0.copy()
        nrm = float(np.linalg.norm(x))
        if nrm > radius:
            x *= radius / nrm
        cm, cx = certified(x)
        if cm > best_m:
            best_m, best_x = cm, cx.copy()
        # The ladder starts no wider than the margin spread at the start
        # point: any width beyond it activates every row, which buys no
        # extra directions but makes the min-norm problem needlessly big.
        scale = max(abs(target), 1e-12)
        mv0 = rows @ x
        spread = float(mv0.max() - mv0.min()) if mv0.size else 0.0
        eps = 0.25 * min(max(spread, 1e-9 * scale), scale)
        eps_min = 1e-10 * scale
        it = 0
        while it < max_iters and eps > eps_min and best_m < target:
            mv = rows @ x
            m = float(mv.min())
            active = np.where(mv <= m + eps)[0]
            if active.size > _ACTIVE_CAP:
                # On near-equalized instances thousands of margins can tie
                # within eps.  The line search below checks every row, so
                # restricting the direction to the most binding subset
                # trades only direction quality, never correctness.
                active = np.argpartition(mv, _ACTIVE_CAP)[:_ACTIVE_CAP]
            d, norm_d = _minnorm_subgradient(rows[active])
            if norm_d < 1e-12:
                eps *= 0.2
                it += 1
                continue
            d = d / norm_d
            along = rows @ d
            # Line search on the projected profile: the unprojected part
            # min_i(mv_i + alpha * along_i) is concave piecewise linear,
            # so repeated grid refinement brackets the maximum.  The norm
            # along the ray comes from its quadratic expansion, not from
            # rebuilding x + alpha * d at every probe.
            nx2 = float(x @ x)
            xd = float(x @ d)

            def profile_grid(alphas):
                vals = (mv[:, None] + alphas[None, :] * along[:, None]).min(axis=0)
                norms = np.sqrt(np.maximum(nx2 + 2.0 * alphas * xd + alphas**2, 0.0))
                shrink = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
                return vals * shrink

            lo_a, hi_a = 0.0, 2.0 * radius
            for _ in range(9):
                grid = np.linspace(lo_a, hi_a, 33)
                values = profile_grid(grid)
                k_best = int(np.argmax(values))
                lo_a = grid[max(k_best - 1, 0)]
                hi_a = grid[min(k_best + 1, len(grid) - 1)]
            alpha = 0.5 * (lo_a + hi_a)
            gain = float(profile_grid(np.array([alpha]))[0]) - m
            if gain <= 1e-14 * max(1.0, abs(m)):
                eps *= 0.2
                it += 1
                continue
            x = x + alpha * d
            nrm = float(np.linalg.norm(x))
            if nrm > radius:
                x *= radius / nrm
            cm, cx = certified(x)
            if cm > best_m:
                best_m, best_x = cm, cx.copy()
            it += 1
            used += 1
            if gain < 0.02 * eps:
                # Ascent at this width has slowed to a crawl: the
                # eps-active set is too coarse to describe the corner.
                # Refine rather than grind out O(eps) progress per step.
                eps *= 0.2
        if best_m >= target:
            break
    return best_m, best_x, used


def oracle_solve(H: np.ndarray, c: Constellation, cfg: SolveConfig) -> SolveResult:
    """Bisection-on-t reference solver for small instances.

    For each candidate ``t`` the feasibility of the linear margin
    constraints inside the power ball is tested by
    :func:`_feasibility_search` from ``cfg.restarts`` random starts plus
    a warm start at the best certified iterate so far.  The lower bound
    only ever moves to a margin actually achieved by some iterate, so
    the final ``X`` attains the reported ``t``.
    """
    cfg.validate()
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
        raise ValueError(f"H must be a (K, N_t) matrix, got shape {H.shape}")
    K, n_t = H.shape
    symbols = enumerate_reduced_symbol_vectors(c, K)
    n_par = symbols.shape[0]
    budget = cfg.power_budget * n_par
    phi = c.half_angle
    sinphi, cosphi = float(np.sin(phi)), float(np.cos(phi))
    phasors = rotation_phasors(c, symbols)
    upper = _upper_bound(H, budget, sinphi)
    if upper == 0.0:
        return SolveResult(
            X=np.zeros((n_t, n_par), dtype=np.complex128),
            t=0.0,
            status="converged",
            iterations=0,
            feasibility_residual=0.0,
        )

    rows = _margin_rows(H, phasors, sinphi, cosphi)
    dim = rows.shape[1]
    rng = np.random.default_rng([cfg.seed, 101])

    def random_start():
        x0 = rng.standard_normal(dim)
        return x0 * (np.sqrt(budget) / np.linalg.norm(x0))

    lo, hi = 0.0, upper
    best_t = 0.0
    best_x = np.zeros(dim)
    iterations = 0
    while hi - lo >= cfg.tol * upper:
        mid = 0.5 * (lo + hi)
        starts = [best_x] + [random_start() for _ in range(cfg.restarts)]
        reached, x_r, used = _feasibility_search(rows, budget, mid, starts, 400)
        iterations += used
        if reached > best_t:
            best_t, best_x = reached, x_r
        if best_t >= mid:
            lo = best_t
            if lo > hi:
                hi = lo
        else:
            hi = mid
    half = n_t * n_par
    X = (best_x[:half] + 1j * best_x[half:]).reshape(n_t, n_par)
    nrm2 = float(np.sum(X.real**2 + X.imag**2))
    if best_t > 0.0 and 0.0 < nrm2 < budget * (1.0 - 1e-12):
        X = X * np.sqrt(budget / nrm2)
    t_exact = evaluate_objective(H, X, c)
    residual = max(0.0, float(np.sum(X.real**2 + X.imag**2)) - budget)
    return SolveResult(
        X=X,
        t=t_exact,
        status="converged" if hi - lo < cfg.tol * upper else "max_iters",
        iterations=iterations,
        feasibility_residual=residual,
    )
