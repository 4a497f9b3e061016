"""Zero-forcing block-level precoding ("BLP") baseline.

The baseline designs one beamformer per user from CSI alone: the channel is
inverted so that inter-user interference is exactly nulled, and the power
budget is split equally across users.  With unit-modulus PSK symbols the
per-symbol transmit power then equals ``P`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import Constellation, symbol_angles

__all__ = ["BlockPrecoder", "zf_precoder", "blp_transmit"]


@dataclass
class BlockPrecoder:
    """Per-user beamformers: column ``k`` of ``W`` serves user ``k``.

    Invariant: ``norm(W, 'fro')**2 <= P`` within 1e-9 relative, so the
    average (and, for PSK, exact) per-symbol transmit power respects the
    budget used at construction time.
    """

    W: np.ndarray  # (N_t, K) complex128

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.complex128)
        if self.W.ndim != 2:
            raise ValueError(f"W must be a 2-D (N_t, K) matrix, got shape {self.W.shape}")

    @property
    def antennas(self) -> int:
        return self.W.shape[0]

    @property
    def users(self) -> int:
        return self.W.shape[1]


def zf_precoder(H: np.ndarray, power_budget: float) -> BlockPrecoder:
    """Zero-forcing beamformers with equal per-user power.

    Starts from the right pseudo-inverse ``H^H (H H^H)^{-1}`` (which nulls
    all cross-user terms), then rescales every column to power
    ``power_budget / K``.  The effective channel ``H @ W`` is diagonal with
    positive real entries.

    Parameters
    ----------
    H : (K, N_t) complex array
        Channel matrix; requires ``K <= N_t`` and full row rank.
    power_budget : float
        Total transmit power ``P`` shared equally by the users.

    Raises
    ------
    ValueError
        If ``K > N_t``, if ``H`` is rank-deficient, or ``power_budget <= 0``.
    """
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2:
        raise ValueError(f"H must be a 2-D (K, N_t) matrix, got shape {H.shape}")
    K, n_t = H.shape
    if K > n_t:
        raise ValueError(
            f"zero-forcing needs K <= N_t, got K={K} users and N_t={n_t} antennas"
        )
    if not power_budget > 0:
        raise ValueError(f"power_budget must be positive, got {power_budget}")
    rank = np.linalg.matrix_rank(H)
    if rank < K:
        raise ValueError(
            f"channel matrix is rank-deficient: rank {rank} < {K} users; "
            "zero-forcing requires linearly independent user channels"
        )
    gram = H @ H.conj().T
    # Solve gram @ Y = H, i.e. W0 = H^H gram^{-1}, without forming the inverse.
    W0 = np.linalg.solve(gram, H).conj().T
    norms = np.linalg.norm(W0, axis=0)
    W = W0 * (np.sqrt(power_budget / K) / norms)
    return BlockPrecoder(W=W)


def blp_transmit(precoder: BlockPrecoder, symbols: np.ndarray, c: Constellation) -> np.ndarray:
    """Linearly precode one symbol vector: ``x = sum_k W[:, k] * e^{j theta_k}``.

    Parameters
    ----------
    precoder : BlockPrecoder
    symbols : (K,) integer array of constellation indices, one per user.
    c : Constellation

    Returns
    -------
    (N_t,) complex transmit vector.
    """
    symbols = np.asarray(symbols)
    if symbols.ndim != 1 or symbols.shape[0] != precoder.users:
        raise ValueError(
            f"expected {precoder.users} symbol indices, got shape {symbols.shape}"
        )
    points = np.exp(1j * symbol_angles(c, symbols))
    return precoder.W @ points
