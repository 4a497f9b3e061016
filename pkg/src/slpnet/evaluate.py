"""Monte Carlo SER estimation and wall-clock timing for precoder backends.

A *backend* turns one channel matrix into the reduced precoder matrix
``X_par`` (N_t x N_par); :func:`ser_sweep` expands it over the rotation
symmetry, transmits uniformly drawn symbol vectors through the true channel
plus circular complex Gaussian noise, hard-detects per user, and counts
symbol errors.  SNR is defined as ``snr_db = 10*log10(P / sigma^2)`` with
``P`` the per-symbol-vector power budget, so ``sigma^2 = P / 10**(snr/10)``.

Randomness uses one substream per channel (``default_rng([seed, index])``),
making the sweep reproducible and parallelizable across channels.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass

import numpy as np

from .blp import zf_precoder
from .constellation import (
    Constellation,
    detect,
    enumerate_full_symbol_vectors,
    enumerate_reduced_symbol_vectors,
    expand_precoders,
    symbol_angles,
)
from .maxmin import SolveConfig, solve_maxmin
from .network.model import EPNN, infer

__all__ = [
    "SerPoint",
    "SweepResult",
    "TimingRecord",
    "SolverBackend",
    "NeuralBackend",
    "BlpBackend",
    "ser_sweep",
    "timing_bench",
    "write_ser_csv",
    "write_ser_json",
    "write_timing_csv",
]

SER_SCHEMA = "slpnet-ser-1"
TIMING_SCHEMA = "slpnet-timing-1"


@dataclass(frozen=True)
class SerPoint:
    """One point of an SER-vs-SNR sweep; ``ser = errors / (trials * K)``."""

    snr_db: float
    ser: float
    trials: int
    errors: int


@dataclass
class SweepResult:
    """SER points for one backend plus the count of skipped channels."""

    points: list
    skipped: int = 0

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


@dataclass(frozen=True)
class TimingRecord:
    """Mean wall-clock time per precoding-matrix computation."""

    backend: str
    users: int
    antennas: int
    mean_ms: float
    samples: int


class SolverBackend:
    """Exact max-min-fairness precoder via :func:`slpnet.maxmin.solve_maxmin`."""

    def __init__(self, c: Constellation, cfg: SolveConfig | None = None):
        self.c = c
        self.cfg = cfg if cfg is not None else SolveConfig()
        self.name = "solver"

    def precode(self, H: np.ndarray) -> np.ndarray:
        result = solve_maxmin(H, self.c, self.cfg)
        if not np.all(np.isfinite(result.X)):
            raise ArithmeticError("solver produced non-finite precoder")
        return result.X


class NeuralBackend:
    """Trained EPNN inference backend."""

    def __init__(self, model: EPNN, name: str = "epnn"):
        self.model = model
        self.name = name

    def precode(self, H: np.ndarray) -> np.ndarray:
        return infer(self.model, H)


class BlpBackend:
    """Zero-forcing block-level precoding arranged as reduced SLP columns.

    The beamformer matrix ``W`` depends only on the channel; column ``l`` of
    the emitted precoder is ``W @ s_l`` for reduced symbol vector ``s_l``,
    so the evaluator can treat BLP exactly like any symbol-level scheme.
    """

    def __init__(self, c: Constellation, power_budget: float = 1.0):
        self.c = c
        self.power_budget = power_budget
        self.name = "blp"

    def precode(self, H: np.ndarray) -> np.ndarray:
        W = zf_precoder(H, self.power_budget).W
        symbols = enumerate_reduced_symbol_vectors(self.c, H.shape[0])
        points = np.exp(1j * symbol_angles(self.c, symbols))  # (L, K)
        return W @ points.T


def ser_sweep(
    backend,
    channels,
    c: Constellation,
    snr_db_list,
    symbols_per_channel: int = 100,
    seed: int = 0,
    power_budget: float = 1.0,
) -> SweepResult:
    """Estimate SER at each SNR for one backend over a channel set.

    Parameters
    ----------
    backend : object with ``precode(H) -> (N_t, N_par)`` and ``name``.
    channels : Dataset or (count, K, N_t) complex array.
    snr_db_list : iterable of SNR points in dB.
    symbols_per_channel : symbol vectors drawn per channel per SNR point.
    seed : top-level seed; channel ``i`` uses ``default_rng([seed, i])``.
    power_budget : ``P`` in the SNR definition ``sigma^2 = P/10**(snr/10)``.

    A backend that raises on some channel skips that channel (for every SNR
    point) and increments the result's ``skipped`` tally.
    """
    mats = np.asarray(getattr(channels, "channels", channels), dtype=np.complex128)
    if mats.ndim == 2:
        mats = mats[None]
    if symbols_per_channel < 1:
        raise ValueError(f"symbols_per_channel must be >= 1, got {symbols_per_channel}")
    snr_db_list = [float(s) for s in snr_db_list]
    K = mats.shape[1]
    full_symbols = enumerate_full_symbol_vectors(c, K)  # (M^K, K)
    n_full = full_symbols.shape[0]

    errors = np.zeros(len(snr_db_list), dtype=np.int64)
    trials = np.zeros(len(snr_db_list), dtype=np.int64)
    skipped = 0
    for i in range(mats.shape[0]):
        H = mats[i]
        try:
            X_par = backend.precode(H)
        except Exception:
            skipped += 1
            continue
        X_full = expand_precoders(X_par, c, K)  # (N_t, M^K)
        noiseless = H @ X_full  # (K, M^K)
        rng = np.random.default_rng([seed, i])
        for si, snr_db in enumerate(snr_db_list):
            sigma2 = power_budget / 10.0 ** (snr_db / 10.0)
            js = rng.integers(0, n_full, size=symbols_per_channel)
            noise = np.sqrt(sigma2 / 2.0) * (
                rng.standard_normal((K, symbols_per_channel))
                + 1j * rng.standard_normal((K, symbols_per_channel))
            )
            received = noiseless[:, js] + noise
            decided = detect(c, received)  # (K, S)
            errors[si] += int(np.sum(decided != full_symbols[js].T))
            trials[si] += symbols_per_channel
    points = [
        SerPoint(
            snr_db=snr_db_list[si],
            ser=float(errors[si] / (trials[si] * K)) if trials[si] else 0.0,
            trials=int(trials[si]),
            errors=int(errors[si]),
        )
        for si in range(len(snr_db_list))
    ]
    return SweepResult(points=points, skipped=skipped)


def timing_bench(backend, channels, repetitions: int = 10, warmup: int = 3) -> TimingRecord:
    """Mean wall-clock milliseconds per full precoding-matrix computation.

    Runs ``warmup`` untimed solves (JIT/cache effects), then ``repetitions``
    timed ones, cycling through the provided channels.  Timing is strictly
    sequential; if ``threadpoolctl`` is installed the BLAS pool is pinned to
    one thread for fairness.
    """
    if repetitions < 10:
        raise ValueError(f"need at least 10 repetitions, got {repetitions}")
    if warmup < 3:
        raise ValueError(f"need at least 3 warm-up solves, got {warmup}")
    mats = np.asarray(getattr(channels, "channels", channels), dtype=np.complex128)
    if mats.ndim == 2:
        mats = mats[None]
    n = mats.shape[0]

    def run():
        for r in range(warmup):
            backend.precode(mats[r % n])
        elapsed = 0.0
        for r in range(repetitions):
            H = mats[r % n]
            t0 = time.perf_counter()
            backend.precode(H)
            elapsed += time.perf_counter() - t0
        return elapsed

    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        elapsed = run()
    else:
        with threadpool_limits(limits=1):
            elapsed = run()
    return TimingRecord(
        backend=backend.name,
        users=mats.shape[1],
        antennas=mats.shape[2],
        mean_ms=1e3 * elapsed / repetitions,
        samples=repetitions,
    )


def _ser_rows(results: dict, users: int, antennas: int) -> list[dict]:
    rows = []
    for name, sweep in results.items():
        for p in sweep:
            rows.append(
                {
                    "backend": name,
                    "K": users,
                    "N_t": antennas,
                    "snr_db": p.snr_db,
                    "trials": p.trials,
                    "errors": p.errors,
                    "ser": p.ser,
                }
            )
    return rows


def write_ser_csv(path, results: dict, users: int, antennas: int):
    """Write sweeps (backend name -> SweepResult) as a flat CSV."""
    rows = _ser_rows(results, users, antennas)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["backend", "K", "N_t", "snr_db", "trials", "errors", "ser"]
        )
        writer.writeheader()
        writer.writerows(rows)


def write_ser_json(path, results: dict, users: int, antennas: int, config: dict | None = None):
    """Write sweeps plus the resolved run config as versioned JSON."""
    payload = {
        "schema": SER_SCHEMA,
        "rows": _ser_rows(results, users, antennas),
        "skipped": {name: sweep.skipped for name, sweep in results.items()},
    }
    if config is not None:
        payload["config"] = config
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_timing_csv(path, records: list[TimingRecord]):
    """Write timing records as CSV, with per-backend ratio columns vs K-min."""
    base: dict[str, float] = {}
    for rec in records:
        key = rec.backend
        if key not in base or rec.users < base[key][0]:
            base[key] = (rec.users, rec.mean_ms)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f,
            fieldnames=["backend", "K", "N_t", "mean_ms", "samples", "ratio_vs_min_K"],
        )
        writer.writeheader()
        for rec in records:
            writer.writerow(
                {
                    "backend": rec.backend,
                    "K": rec.users,
                    "N_t": rec.antennas,
                    "mean_ms": f"{rec.mean_ms:.6f}",
                    "samples": rec.samples,
                    "ratio_vs_min_K": f"{rec.mean_ms / base[rec.backend][1]:.4f}",
                }
            )
