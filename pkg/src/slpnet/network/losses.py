"""Training losses for the neural precoder and their exact gradients.

The unsupervised loss drives the QoS margins directly:

    L = -nu + (1/lambda) * (1/(K*N_par)) * sum_{k,l} (nu - d_{k,l})**2

with ``nu`` the mean margin of the sample.  The supervised baseline is the
mean squared complex-entrywise error against solver labels.  Both losses
average over the batch, and both gradient routines return the packed
complex convention ``G = dL/dRe(X) + 1j * dL/dIm(X)`` expected by
``EPNN.backward``.

The margin uses the subgradient 0 for ``|Im z|`` at ``Im z = 0``
(``np.sign(0) == 0``), a measure-zero event during training.
"""

from __future__ import annotations

import numpy as np

from ..constellation import Constellation, enumerate_reduced_symbol_vectors, rotation_phasors

__all__ = [
    "batch_margins",
    "unsupervised_loss",
    "unsupervised_value_and_grad",
    "supervised_loss",
    "supervised_value_and_grad",
]


def _reduced_phasors(c: Constellation, users: int) -> np.ndarray:
    return rotation_phasors(c, enumerate_reduced_symbol_vectors(c, users))


def batch_margins(X: np.ndarray, H: np.ndarray, c: Constellation) -> np.ndarray:
    """QoS margins d_{k,l} over the reduced symbol set, batched.

    Parameters
    ----------
    X : (N, N_t, N_par) complex precoder batch.
    H : (N, K, N_t) complex channel batch.
    c : Constellation

    Returns
    -------
    (N, K, N_par) real margins.
    """
    X = np.asarray(X, dtype=np.complex128)
    H = np.asarray(H, dtype=np.complex128)
    phasors = _reduced_phasors(c, H.shape[1])
    z = np.einsum("bkn,bnl->bkl", H, X) * phasors[None]
    return np.sin(c.half_angle) * z.real - np.cos(c.half_angle) * np.abs(z.imag)


def unsupervised_loss(X: np.ndarray, H: np.ndarray, c: Constellation, lambda_reg: float) -> float:
    """Batch-mean unsupervised loss; accepts single samples or batches."""
    X, H = _batched(X, H)
    d = batch_margins(X, H, c)
    nu = d.mean(axis=(1, 2))
    var = ((nu[:, None, None] - d) ** 2).mean(axis=(1, 2))
    return float(np.mean(-nu + var / lambda_reg))


def unsupervised_value_and_grad(
    X: np.ndarray, H: np.ndarray, c: Constellation, lambda_reg: float
) -> tuple[float, np.ndarray]:
    """Loss value and packed complex gradient dL/dX of shape (N, N_t, N_par)."""
    X, H = _batched(X, H)
    if not lambda_reg > 0:
        raise ValueError(f"lambda_reg must be positive, got {lambda_reg}")
    phasors = _reduced_phasors(c, H.shape[1])
    sinphi = np.sin(c.half_angle)
    cosphi = np.cos(c.half_angle)
    z = np.einsum("bkn,bnl->bkl", H, X) * phasors[None]
    d = sinphi * z.real - cosphi * np.abs(z.imag)

    N = d.shape[0]
    n = d.shape[1] * d.shape[2]
    nu = d.mean(axis=(1, 2))
    dev = nu[:, None, None] - d
    loss = float(np.mean(-nu + (dev**2).mean(axis=(1, 2)) / lambda_reg))

    # dL_i/dd = -1/n - (2/(lambda*n)) * (nu - d); batch mean adds the 1/N.
    coeff = (-1.0 / n - (2.0 / (lambda_reg * n)) * dev) / N
    s = np.sign(z.imag)
    B = np.conj(phasors)[None] * coeff * (sinphi - 1j * s * cosphi)
    G = np.einsum("bkn,bkl->bnl", np.conj(H), B)
    return loss, G


def supervised_loss(X: np.ndarray, X_label: np.ndarray) -> float:
    """Mean squared complex-entrywise error, averaged over the batch."""
    X = np.asarray(X, dtype=np.complex128)
    X_label = np.asarray(X_label, dtype=np.complex128)
    if X.shape != X_label.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {X_label.shape}")
    diff = X - X_label
    return float((diff.real**2 + diff.imag**2).mean())


def supervised_value_and_grad(X: np.ndarray, X_label: np.ndarray) -> tuple[float, np.ndarray]:
    """MSE value and packed complex gradient (2/(N*n)) * (X - label)."""
    X = np.asarray(X, dtype=np.complex128)
    X_label = np.asarray(X_label, dtype=np.complex128)
    if X.shape != X_label.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {X_label.shape}")
    diff = X - X_label
    loss = float((diff.real**2 + diff.imag**2).mean())
    return loss, 2.0 * diff / diff.size


def _batched(X: np.ndarray, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.complex128)
    H = np.asarray(H, dtype=np.complex128)
    if X.ndim == 2:
        X = X[None]
    if H.ndim == 2:
        H = H[None]
    if X.ndim != 3 or H.ndim != 3 or X.shape[0] != H.shape[0]:
        raise ValueError(f"inconsistent batch shapes X {X.shape}, H {H.shape}")
    if H.shape[2] != X.shape[1]:
        raise ValueError(
            f"channel has {H.shape[2]} antennas but precoder has {X.shape[1]} rows"
        )
    return X, H
