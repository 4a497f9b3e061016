"""Backend selection for the solver hot kernels.

The compiled Cython extension is preferred; the pure-numpy twin is used
when the extension is unavailable (built with ``SLPNET_NO_EXT=1`` or a
failed build).  ``set_backend`` exists for tests and benchmarks that need
to compare the two.
"""

from __future__ import annotations

from . import _kernels_np

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

_active = _compiled if _compiled is not None else _kernels_np


def available_backends() -> list:
    names = ["numpy"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get_backend() -> str:
    return _active.BACKEND_NAME


def set_backend(name: str) -> None:
    global _active
    if name == "numpy":
        _active = _kernels_np
    elif name == "compiled":
        if _compiled is None:
            raise ValueError("compiled kernel backend is not available")
        _active = _compiled
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def qos_values(H, X, phasors, sinphi, cosphi):
    return _active.qos_values(H, X, phasors, sinphi, cosphi)


def min_margin(H, X, phasors, sinphi, cosphi):
    return _active.min_margin(H, X, phasors, sinphi, cosphi)


def loss_backward(H, X, phasors, sinphi, cosphi, coeff):
    return _active.loss_backward(H, X, phasors, sinphi, cosphi, coeff)


def softmin_objective(H, X, phasors, sinphi, cosphi, temp):
    return _active.softmin_objective(H, X, phasors, sinphi, cosphi, temp)


def softmin_eval(H, X, phasors, sinphi, cosphi, temp):
    return _active.softmin_eval(H, X, phasors, sinphi, cosphi, temp)


def ascent_run(H, X, phasors, sinphi, cosphi, budget, temps, iters_per_round,
               improve_abs, step_init):
    return _active.ascent_run(H, X, phasors, sinphi, cosphi, budget, temps,
                              iters_per_round, improve_abs, step_init)


def polish_run(H, X, phasors, sinphi, cosphi, budget, iters):
    return _active.polish_run(H, X, phasors, sinphi, cosphi, budget, iters)
