"""Deterministic Monte-Carlo plumbing: keyed streams, chunked estimates, fits.

Reproducibility contract
------------------------
Every random draw in the package comes from a counter-based generator keyed
by ``(seed, stream)``.  Estimators split work into fixed-size chunks, derive
one sub-stream per chunk index, and reduce partial sums in chunk order.  The
resulting numbers are therefore bit-identical whatever the worker count —
``HOMOEOID_THREADS`` only changes how many chunks are evaluated concurrently,
never which generator produces which sample.

Stream ids for geometric contexts (points, radii, shell indices, …) are
derived from the IEEE-754 bit patterns of the defining floats through a
splitmix64-style mixer; Python's salted ``hash`` is never used.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

__all__ = [
    "DEFAULT_CHUNK",
    "MCEstimate",
    "ScalingFit",
    "derive_stream",
    "fit_power_law",
    "mc_mean",
    "rng_stream",
    "worker_count",
]

DEFAULT_CHUNK = 1 << 16
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """splitmix64 finaliser: bijective avalanche mixer on 64-bit words."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _to_word(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, (float, np.floating)):
        # IEEE-754 bit pattern: platform-stable, unlike hash(float)
        return int(np.float64(part).view(np.uint64))
    if isinstance(part, str):
        word = 1469598103934665603  # FNV-1a offset basis
        for b in part.encode("utf-8"):
            word = ((word ^ b) * 1099511628211) & _MASK64
        return word
    if isinstance(part, np.ndarray):
        word = 0
        for v in np.asarray(part, dtype=float).ravel():
            word = _mix64(word ^ int(np.float64(v).view(np.uint64)) ^ _GOLDEN)
        return word
    if isinstance(part, (tuple, list)):
        word = 0
        for p in part:
            word = _mix64(word ^ _to_word(p) ^ _GOLDEN)
        return word
    raise TypeError(f"cannot derive a stream id from {type(part).__name__}")


def derive_stream(*parts) -> int:
    """Collapse a context (ints, floats, strings, arrays) into a stream id.

    Deterministic across processes and platforms.  Distinct contexts should
    include a distinguishing leading tag (usually a short string) so that
    independently sampled quantities never share a stream by accident.
    """
    word = 0x8BADF00D
    for part in parts:
        word = _mix64(word ^ _to_word(part) ^ _GOLDEN)
    return word


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for the (seed, stream) pair, via a keyed counter-based RNG."""
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def worker_count() -> int:
    """Worker cap from ``HOMOEOID_THREADS`` (default 1, i.e. serial)."""
    raw = os.environ.get("HOMOEOID_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


@dataclasses.dataclass(frozen=True)
class MCEstimate:
    """A Monte-Carlo estimate with its standard error.

    ``std_error`` is the sample standard deviation divided by ``sqrt(n)``;
    ``inf`` when fewer than two samples contributed.
    """

    value: float
    std_error: float
    n_samples: int
    seed: int

    def interval(self, sigmas: float = 3.0) -> tuple[float, float]:
        return self.value - sigmas * self.std_error, self.value + sigmas * self.std_error

    def consistent_with(self, other: float, sigmas: float = 3.0) -> bool:
        lo, hi = self.interval(sigmas)
        return lo <= other <= hi


@dataclasses.dataclass(frozen=True)
class ScalingFit:
    """Least-squares power-law fit in log-log coordinates.

    ``points`` holds the fitted ``(log-abscissa, log-ordinate)`` pairs;
    ``max_abs_residual`` is in the log-ordinate.
    """

    slope: float
    intercept: float
    max_abs_residual: float
    points: tuple[tuple[float, float], ...]


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> ScalingFit:
    """OLS fit of ``log y = slope * log x + intercept``.

    Requires at least three strictly positive, finite points.  All supplied
    points participate in the fit — callers choose the window, the fit never
    discards data.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("x and y must be 1-d sequences of equal length")
    if xa.shape[0] < 3:
        raise ValueError(f"power-law fit needs >= 3 points, got {xa.shape[0]}")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise ValueError("power-law fit needs finite data")
    if np.any(xa <= 0) or np.any(ya <= 0):
        raise ValueError("power-law fit needs strictly positive data")
    lx, ly = np.log(xa), np.log(ya)
    design = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    return ScalingFit(
        slope=float(slope),
        intercept=float(intercept),
        max_abs_residual=float(np.max(np.abs(resid))),
        points=tuple((float(a), float(b)) for a, b in zip(lx, ly)),
    )


def _chunk_bounds(n_samples: int, chunk: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, n_samples)) for lo in range(0, n_samples, chunk)]


def mc_mean(
    sample_fn: Callable[[np.random.Generator, int], Array],
    n_samples: int,
    *,
    seed: int,
    stream: int = 0,
    chunk: int = DEFAULT_CHUNK,
) -> MCEstimate | list[MCEstimate]:
    """Chunked mean of ``sample_fn(rng, m)`` over ``n_samples`` draws.

    ``sample_fn`` must return one value per sample: shape ``(m,)`` for a
    scalar statistic or ``(m, k)`` for ``k`` statistics evaluated on a shared
    batch (the latter yields a list of per-column estimates whose samples are
    *identical*, which is what makes partition checks exact).

    Chunking is deterministic: chunk ``c`` always sees the generator
    ``rng_stream(seed, derive_stream("chunk", stream, c))``, and partial sums
    are reduced in chunk order, so the result is independent of the worker
    count used to evaluate chunks.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if chunk <= 0:
        raise ValueError("chunk must be positive")
    bounds = _chunk_bounds(n_samples, chunk)

    def run_chunk(idx: int) -> tuple[Array, Array, int]:
        lo, hi = bounds[idx]
        rng = rng_stream(seed, derive_stream("chunk", stream, idx))
        values = np.asarray(sample_fn(rng, hi - lo), dtype=float)
        if values.shape[0] != hi - lo:
            raise ValueError("sample_fn returned a batch of the wrong length")
        return np.sum(values, axis=0), np.sum(values * values, axis=0), hi - lo

    workers = worker_count()
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run_chunk, range(len(bounds))))
    else:
        partials = [run_chunk(i) for i in range(len(bounds))]

    total = partials[0][0] * 0.0
    total_sq = partials[0][1] * 0.0
    for s, s2, _m in partials:  # fixed order: bit-identical for any worker count
        total = total + s
        total_sq = total_sq + s2

    def finish(s: float, s2: float) -> MCEstimate:
        mean = s / n_samples
        if n_samples < 2:
            return MCEstimate(float(mean), math.inf, n_samples, seed)
        var = max((s2 - n_samples * mean * mean) / (n_samples - 1), 0.0)
        return MCEstimate(float(mean), math.sqrt(var / n_samples), n_samples, seed)

    if np.ndim(total) == 0:
        return finish(float(total), float(total_sq))
    return [finish(float(s), float(s2)) for s, s2 in zip(total, total_sq)]
