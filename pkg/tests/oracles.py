"""Independent brute-force oracles used by the test suite.

These deliberately avoid the closed-form expressions used by the package:
distances come from explicit point-to-ray minimization, and max-min
optima come from a dual minimum-norm program over the constraint
gradients.  Both are slow and simple on purpose.
"""

import numpy as np


def _ray_distance(p, ray_angle):
    """Euclidean distance from complex point ``p`` to the ray ``t*e^{j*angle}, t >= 0``.

    ``|p - t*u|^2`` is an exact quadratic in ``t``, so a coarse grid plus a
    three-point parabola fit recovers the unconstrained minimizer exactly;
    the ray constraint clamps it at zero.
    """
    u = complex(np.cos(ray_angle), np.sin(ray_angle))
    reach = 2.0 * abs(p) + 1.0
    ts = np.linspace(0.0, reach, 41)
    f = np.abs(p - ts * u) ** 2
    i = int(np.argmin(f))
    i = min(max(i, 1), len(ts) - 2)
    h = ts[1] - ts[0]
    denom = f[i - 1] - 2.0 * f[i] + f[i + 1]
    t_star = ts[i] if denom <= 0.0 else ts[i] + 0.5 * h * (f[i - 1] - f[i + 1]) / denom
    t_star = max(t_star, 0.0)
    return float(np.sqrt(np.abs(p - t_star * u) ** 2))


def boundary_distance(h, x, symbol_angle, half_angle):
    """Brute-force signed distance to the nearest decision boundary.

    The decision sector of the target symbol is bounded by the two rays at
    ``symbol_angle +/- half_angle``.  Returns the smaller of the two ray
    distances, negative when the noise-free point lies outside the sector
    (membership decided by angle comparison, not by any distance formula).

    Only valid when the point lies in the open half-plane ahead of the
    sector apex (``Re{z e^{-j*symbol_angle}} > 0``); callers arrange that.
    """
    z = complex(np.dot(np.asarray(h), np.asarray(x)))
    d = min(
        _ray_distance(z, symbol_angle + half_angle),
        _ray_distance(z, symbol_angle - half_angle),
    )
    offset = float(np.angle(z * np.exp(-1j * symbol_angle)))
    inside = abs(offset) < half_angle
    return d if inside else -d


def _margin_matrix(H, c, symbols):
    """Constraint gradients of the max-min program, built by plain probing.

    Each (user, column) pair contributes two margins, one per decision
    boundary; each is the signed perpendicular distance obtained by
    rotating the boundary onto the real axis and reading off the imaginary
    part.  Margins are linear in the stacked real coordinates of ``X``, so
    probing with unit vectors recovers the gradient rows exactly.
    """
    from slpnet.constellation import symbol_angles

    K, n_t = H.shape
    L = symbols.shape[0]
    phi = c.half_angle
    angles = symbol_angles(c, symbols)  # (L, K)

    def margins(X):
        vals = np.empty((K, L, 2))
        Z = H @ X
        for l in range(L):
            for k in range(K):
                z = Z[k, l] * np.exp(-1j * angles[l, k])
                for b, sgn in enumerate((1.0, -1.0)):
                    vals[k, l, b] = -sgn * (z * np.exp(-1j * sgn * phi)).imag
        return vals.ravel()

    dim = 2 * n_t * L
    rows = np.empty((K * L * 2, dim))
    for j in range(dim):
        X = np.zeros((n_t, L), dtype=np.complex128)
        col, rest = divmod(j, 2 * n_t)
        part, row_i = divmod(rest, n_t)
        X[row_i, col] = 1.0 if part == 0 else 1.0j
        rows[:, j] = margins(X)
    return rows


def dual_tstar(H, c, budget, iters=40000):
    """Independent optimum of the max-min program via its dual.

    ``max_{|x| <= r} min_i <a_i, x> = r * min_{lam in simplex} ||A^T lam||``
    for linear margins with gradient rows ``a_i``.  The simplex QP is
    solved by projected gradient with a Frank-Wolfe gap certificate;
    returns ``(t_star, certified_gap)`` where the true optimum lies within
    ``certified_gap`` of ``t_star``.
    """
    from slpnet.constellation import enumerate_reduced_symbol_vectors

    H = np.asarray(H, dtype=np.complex128)
    symbols = enumerate_reduced_symbol_vectors(c, H.shape[0])
    A = _margin_matrix(H, c, symbols)
    m = A.shape[0]
    G = A @ A.T
    lam = np.full(m, 1.0 / m)
    lip = 2.0 * float(np.linalg.eigvalsh(G)[-1]) + 1e-30
    step = 1.0 / lip
    for _ in range(iters):
        grad = 2.0 * G @ lam
        lam = _project_simplex(lam - step * grad)
    q = float(lam @ G @ lam)
    grad = 2.0 * G @ lam
    fw_gap = float(lam @ grad - grad.min())
    r = np.sqrt(budget)
    lo = np.sqrt(max(q - fw_gap, 0.0))
    hi = np.sqrt(q)
    return r * hi, r * (hi - lo)


def _project_simplex(v):
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def conv2d_same_naive(x, W, b, stride):
    """Direct-loop SAME-padded 2-D convolution over (N, C, H, W) input.

    Output cell (n, f, i, j) sums ``x_pad[n, c, i*sh + di, j*sw + dj] *
    W[f, c, di, dj]`` over all (c, di, dj), with the pad split so the extra
    cell (odd totals) goes after.  Quadruple loops on purpose.
    """
    N, C, H, Wd = x.shape
    F, _, kh, kw = W.shape
    sh, sw = stride
    oh = -(-H // sh)
    ow = -(-Wd // sw)
    pad_h = max((oh - 1) * sh + kh - H, 0)
    pad_w = max((ow - 1) * sw + kw - Wd, 0)
    top, left = pad_h // 2, pad_w // 2
    xp = np.zeros((N, C, H + pad_h, Wd + pad_w))
    xp[:, :, top : top + H, left : left + Wd] = x
    y = np.zeros((N, F, oh, ow))
    for n in range(N):
        for f in range(F):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for c in range(C):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += xp[n, c, i * sh + di, j * sw + dj] * W[f, c, di, dj]
                    y[n, f, i, j] = acc + b[f]
    return y
