"""Pure-numpy implementations of the solver hot kernels.

Twin of the compiled ``slpnet._kernels`` extension; same functions, same
semantics.  ``slpnet.kernels`` picks the compiled module when it imported
successfully and falls back to this one otherwise.

Conventions shared by both backends:

* ``H`` is (K, N_t) complex with rows ``h_k^H``; ``X`` is (N_t, L) complex.
* ``phasors`` is (K, L) complex, ``exp(-1j * symbol_angle)`` per entry.
* Margins come in pairs ``m_s = sin(phi)*Re(z) - s*cos(phi)*Im(z)`` for
  ``s = +/-1`` with ``z = (H @ X) * phasors``; the QoS distance is their
  minimum, ``sin(phi)*Re(z) - cos(phi)*|Im(z)|``.
* Gradients are packed complex: ``d/dRe + 1j * d/dIm``.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def _rotated(H, X, phasors):
    return (H @ X) * phasors


def qos_values(H, X, phasors, sinphi, cosphi):
    """QoS distance for every (user, column) pair; (K, L) float64."""
    z = _rotated(H, X, phasors)
    return sinphi * z.real - cosphi * np.abs(z.imag)


def min_margin(H, X, phasors, sinphi, cosphi):
    """Smallest QoS distance and its location.

    Returns ``(d_min, k, l, s)`` where ``s`` is the sign of ``Im(z)`` at
    the active entry (0 at an exact kink).
    """
    z = _rotated(H, X, phasors)
    d = sinphi * z.real - cosphi * np.abs(z.imag)
    k, l = np.unravel_index(np.argmin(d), d.shape)
    return float(d[k, l]), int(k), int(l), float(np.sign(z.imag[k, l]))


def loss_backward(H, X, phasors, sinphi, cosphi, coeff):
    """Pull a per-distance coefficient array back to a gradient on ``X``.

    Given ``coeff[k, l] = dL/dd[k, l]``, returns the packed complex
    gradient of ``L`` with respect to ``X`` (N_t, L).
    """
    z = _rotated(H, X, phasors)
    s = np.sign(z.imag)
    B = np.conj(phasors) * coeff * (sinphi - 1j * s * cosphi)
    return H.conj().T @ B


def softmin_objective(H, X, phasors, sinphi, cosphi, temp):
    """Temperature-``temp`` softmin of all linearized margins."""
    z = _rotated(H, X, phasors)
    m_plus = sinphi * z.real - cosphi * z.imag
    m_minus = sinphi * z.real + cosphi * z.imag
    m0 = min(m_plus.min(), m_minus.min())
    acc = np.sum(np.exp(-(m_plus - m0) / temp)) + np.sum(np.exp(-(m_minus - m0) / temp))
    return float(m0 - temp * np.log(acc))


def softmin_eval(H, X, phasors, sinphi, cosphi, temp):
    """Softmin objective and its packed complex gradient w.r.t. ``X``."""
    z = _rotated(H, X, phasors)
    m_plus = sinphi * z.real - cosphi * z.imag
    m_minus = sinphi * z.real + cosphi * z.imag
    m0 = min(m_plus.min(), m_minus.min())
    e_plus = np.exp(-(m_plus - m0) / temp)
    e_minus = np.exp(-(m_minus - m0) / temp)
    acc = e_plus.sum() + e_minus.sum()
    obj = float(m0 - temp * np.log(acc))
    w_plus = e_plus / acc
    w_minus = e_minus / acc
    # conj(alpha_s) = sinphi - 1j*s*cosphi for margin branch s
    B = np.conj(phasors) * (
        w_plus * (sinphi - 1j * cosphi) + w_minus * (sinphi + 1j * cosphi)
    )
    grad = H.conj().T @ B
    return obj, grad


def _project(X, budget):
    nrm2 = float(np.sum(X.real**2 + X.imag**2))
    if nrm2 > budget:
        X *= np.sqrt(budget / nrm2)
    return X


def ascent_run(H, X, phasors, sinphi, cosphi, budget, temps, iters_per_round,
               improve_abs, step_init):
    """Temperature-annealed projected gradient ascent on the softmin objective.

    ``X`` is updated in place.  Returns ``(gradient_steps, converged)``;
    ``converged`` is False when any annealing round exhausted its
    iteration budget without meeting the improvement tolerance.
    """
    _project(X, budget)
    steps = 0
    converged = True
    for temp in temps:
        # the workable step scale changes with temperature, so re-derive it
        # from the first gradient of every round
        step = float(step_init)
        prev = -np.inf
        it = 0
        stalled = False
        while it < iters_per_round:
            obj, G = softmin_eval(H, X, phasors, sinphi, cosphi, temp)
            gnorm2 = float(np.sum(G.real**2 + G.imag**2))
            if gnorm2 < 1e-30:
                stalled = True
                break
            if step <= 0.0:
                step = 0.3 * np.sqrt(budget / gnorm2)
            obj_new = obj
            accepted = False
            for _ in range(60):
                Xt = _project(X + step * G, budget)
                inc = float(np.sum(G.real * (Xt.real - X.real) + G.imag * (Xt.imag - X.imag)))
                if inc > 0.0:
                    obj_new = softmin_objective(H, Xt, phasors, sinphi, cosphi, temp)
                    if obj_new >= obj + 1e-4 * inc:
                        accepted = True
                        break
                step *= 0.5
            it += 1
            steps += 1
            if not accepted:
                stalled = True
                break
            X[:] = Xt
            step *= 1.3
            if obj_new - prev <= improve_abs and it > 1:
                stalled = True
                prev = obj_new
                break
            prev = obj_new
        if not stalled and it >= iters_per_round:
            converged = False
    return steps, converged


def polish_run(H, X, phasors, sinphi, cosphi, budget, iters):
    """Polyak-style subgradient polish on the exact min margin.

    Steps along the active margin's subgradient toward a slightly
    optimistic target; keeps the best iterate.  ``X`` is replaced in place
    by the best iterate found.  Returns ``(best_min_margin, steps)``.
    """
    best = X.copy()
    best_t = float(qos_values(H, X, phasors, sinphi, cosphi).min())
    cap = 0.1 * np.sqrt(budget)
    steps = 0
    for _ in range(iters):
        d, k, l, s = min_margin(H, X, phasors, sinphi, cosphi)
        g_col = (sinphi - 1j * s * cosphi) * np.conj(phasors[k, l]) * np.conj(H[k, :])
        gnorm2 = float(np.sum(g_col.real**2 + g_col.imag**2))
        if gnorm2 < 1e-30:
            break
        target = best_t + max(1e-3 * abs(best_t), 1e-12)
        stepsz = (target - d) / gnorm2
        stepsz = min(stepsz, cap / np.sqrt(gnorm2))
        X[:, l] += stepsz * g_col
        _project(X, budget)
        steps += 1
        t = float(qos_values(H, X, phasors, sinphi, cosphi).min())
        if t > best_t:
            best_t = t
            best[:] = X
    X[:] = best
    return best_t, steps
