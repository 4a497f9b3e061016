"""PSK constellation geometry, sector decision regions and the QoS distance.

The constellation is an M-PSK alphabet with symbol ``m`` placed at angle
``angle_offset + 2*pi*m/M``.  Decision regions are angular sectors of
half-angle ``phi = pi/M`` around each symbol.  The quality-of-service
metric of a noise-free received point ``z`` for a desired symbol at angle
``theta`` is the signed Euclidean distance from ``z`` to the nearest
decision boundary of that symbol's sector:

    d = (Re{z * exp(-1j*theta)} * tan(phi) - |Im{z * exp(-1j*theta)}|) * cos(phi)

``d > 0`` iff the point lies strictly inside the sector, and ``d`` then
equals the distance to the closer of the two boundary rays.

The module also provides the rotational-symmetry machinery: for K users
only ``M**(K-1)`` precoding vectors need to be designed (first user's
symbol pinned to index 0); the remaining columns follow by a phase
rotation that leaves every QoS distance unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Constellation",
    "make_constellation",
    "symbol_angles",
    "rotation_phasors",
    "qos_distance",
    "qos_matrix",
    "enumerate_reduced_symbol_vectors",
    "enumerate_full_symbol_vectors",
    "expand_precoders",
    "detect",
]


@dataclass(frozen=True)
class Constellation:
    """M-PSK constellation descriptor.

    Attributes
    ----------
    order : int
        Modulation order M (a power of two, M >= 2).
    angle_offset : float
        Angle of symbol index 0 in radians.  Symbol ``m`` sits at
        ``angle_offset + 2*pi*m/order``.
    """

    order: int
    angle_offset: float = 0.0

    @property
    def half_angle(self) -> float:
        """Half decision angle ``phi = pi / order``."""
        return np.pi / self.order

    def angles(self) -> np.ndarray:
        """Angles of all ``order`` symbols, index 0 first."""
        return self.angle_offset + 2.0 * np.pi * np.arange(self.order) / self.order

    def points(self) -> np.ndarray:
        """Unit-modulus constellation points ``exp(1j*angle)``."""
        return np.exp(1j * self.angles())


def make_constellation(order: int, angle_offset: float = 0.0) -> Constellation:
    """Build an M-PSK constellation.

    Raises
    ------
    ValueError
        If ``order`` is not a power of two or is below 2.
    """
    if not isinstance(order, (int, np.integer)):
        raise ValueError(f"constellation order must be an integer, got {order!r}")
    order = int(order)
    if order < 2 or (order & (order - 1)) != 0:
        raise ValueError(f"constellation order must be a power of two >= 2, got {order}")
    return Constellation(order=order, angle_offset=float(angle_offset))


def symbol_angles(c: Constellation, indices: np.ndarray) -> np.ndarray:
    """Map symbol indices to their constellation angles."""
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= c.order):
        raise ValueError(f"symbol indices must lie in [0, {c.order})")
    return c.angle_offset + 2.0 * np.pi * indices / c.order


def rotation_phasors(c: Constellation, symbols: np.ndarray) -> np.ndarray:
    """Per-(user, vector) derotation phasors ``exp(-1j*angle(s_l(k)))``.

    Parameters
    ----------
    symbols : (L, K) int array
        One symbol vector per row.

    Returns
    -------
    (K, L) complex array, ready to multiply entrywise onto ``H @ X``.
    """
    ang = symbol_angles(c, symbols)  # (L, K)
    return np.exp(-1j * ang).T.copy()


def qos_distance(
    channel_row: np.ndarray,
    precoder: np.ndarray,
    symbol_angle: float,
    half_angle: float,
) -> float:
    """Signed distance from the noise-free received point to the decision boundary.

    Parameters
    ----------
    channel_row : (N_t,) complex array
        Row of the channel matrix (``h^H`` as stored); the received point
        is ``channel_row @ x``.
    precoder : (N_t,) complex array
        Precoding vector ``x``.
    symbol_angle : float
        Angle of the desired symbol.
    half_angle : float
        Sector half-angle ``phi``, in (0, pi/2).

    Returns
    -------
    float
        Positive iff the point lies strictly inside the sector; when
        positive it equals the Euclidean distance to the nearest boundary
        ray.
    """
    channel_row = np.asarray(channel_row).ravel()
    precoder = np.asarray(precoder).ravel()
    if channel_row.shape != precoder.shape:
        raise ValueError(
            f"channel/precoder length mismatch: {channel_row.shape} vs {precoder.shape}"
        )
    if not 0.0 < half_angle < np.pi / 2:
        raise ValueError(f"half_angle must lie in (0, pi/2), got {half_angle}")
    z = (channel_row @ precoder) * np.exp(-1j * symbol_angle)
    return float((z.real * np.tan(half_angle) - abs(z.imag)) * np.cos(half_angle))


def qos_matrix(H: np.ndarray, X: np.ndarray, symbols: np.ndarray, c: Constellation) -> np.ndarray:
    """QoS distances for every (user, symbol vector) pair.

    Parameters
    ----------
    H : (K, N_t) complex array
        Channel matrix, row ``k`` holding ``h_k^H``.
    X : (N_t, L) complex array
        One precoding vector per column.
    symbols : (L, K) int array
        Symbol vector per column of ``X``.

    Returns
    -------
    (K, L) real array of distances.
    """
    H = np.asarray(H, dtype=np.complex128)
    X = np.asarray(X, dtype=np.complex128)
    symbols = np.asarray(symbols, dtype=np.int64)
    K, n_t = H.shape
    if X.shape[0] != n_t:
        raise ValueError(f"antenna mismatch: H has {n_t}, X has {X.shape[0]}")
    if symbols.shape != (X.shape[1], K):
        raise ValueError(
            f"symbol table shape {symbols.shape} does not match L={X.shape[1]}, K={K}"
        )
    phi = c.half_angle
    z = (H @ X) * rotation_phasors(c, symbols)
    return np.sin(phi) * z.real - np.cos(phi) * np.abs(z.imag)


def enumerate_reduced_symbol_vectors(c: Constellation, K: int) -> np.ndarray:
    """All symbol vectors with the first user's symbol pinned to index 0.

    Returns
    -------
    (M**(K-1), K) int array in lexicographic order over the trailing
    ``K-1`` entries.
    """
    if K < 1:
        raise ValueError(f"number of users must be >= 1, got {K}")
    M = c.order
    n_par = M ** (K - 1)
    out = np.zeros((n_par, K), dtype=np.int64)
    for k in range(1, K):
        period = M ** (K - 1 - k)
        out[:, k] = (np.arange(n_par) // period) % M
    return out


def enumerate_full_symbol_vectors(c: Constellation, K: int) -> np.ndarray:
    """All ``M**K`` symbol vectors in lexicographic order (first entry slowest)."""
    if K < 1:
        raise ValueError(f"number of users must be >= 1, got {K}")
    M = c.order
    total = M**K
    out = np.zeros((total, K), dtype=np.int64)
    for k in range(K):
        period = M ** (K - 1 - k)
        out[:, k] = (np.arange(total) // period) % M
    return out


def expand_precoders(X_par: np.ndarray, c: Constellation, K: int) -> np.ndarray:
    """Expand the reduced precoding matrix to all ``M**K`` symbol vectors.

    A full symbol vector whose first entry has index ``m1`` maps to the
    reduced column of the index-shifted vector ``(s - m1) mod M`` scaled by
    ``exp(1j * 2*pi*m1/M)``.  This phase equals the first symbol's angle
    when ``angle_offset`` is 0 and is exactly the rotation that leaves
    every QoS distance unchanged.  Columns are ordered like
    :func:`enumerate_full_symbol_vectors`.
    """
    X_par = np.asarray(X_par, dtype=np.complex128)
    M = c.order
    n_par = M ** (K - 1)
    if X_par.ndim != 2 or X_par.shape[1] != n_par:
        raise ValueError(
            f"reduced matrix must have {n_par} columns for M={M}, K={K}; got {X_par.shape}"
        )
    full = enumerate_full_symbol_vectors(c, K)  # (M**K, K)
    m1 = full[:, 0]
    base = (full - m1[:, None]) % M
    # Index of each base vector in the reduced enumeration (first entry is 0).
    weights = M ** np.arange(K - 1, -1, -1, dtype=np.int64)
    base_idx = base @ weights  # first entry contributes 0
    phases = np.exp(1j * 2.0 * np.pi * m1 / M)
    return X_par[:, base_idx] * phases[None, :]


def detect(c: Constellation, received) -> "int | np.ndarray":
    """Hard-decision detection onto the nearest symbol by angular distance.

    Exact boundary ties resolve to the smaller symbol index; a zero sample
    returns index 0 (degenerate convention so Monte Carlo runs never
    abort).  Accepts a scalar or an array of received points.
    """
    r = np.asarray(received, dtype=np.complex128)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if not np.all(np.isfinite(r.view(np.float64))):
        raise ValueError("received samples must be finite")
    ang = np.angle(r)  # zero samples give angle 0 -> land on symbol 0 for offset 0
    diff = ang[..., None] - c.angles()
    dist = np.abs((diff + np.pi) % (2.0 * np.pi) - np.pi)
    idx = np.argmin(dist, axis=-1)  # argmin takes the first (smallest) index on ties
    zero = r == 0
    if np.any(zero):
        idx = np.where(zero, 0, idx)
    if scalar:
        return int(idx[0])
    return idx
