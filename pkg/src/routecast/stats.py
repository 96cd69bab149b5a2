"""Bootstrap confidence intervals, paired difference tests, deviation scores.

Intervals use the non-parametric percentile bootstrap: resample the
outcomes with replacement (same size), take the mean of each resample,
and report the 2.5th and 97.5th percentiles of those means over 10,000
resamples. Estimates from small or one-sided samples carry a
``reliable=False`` flag (n < 30, or fewer than 5 positive or negative
outcomes for binary data).

Resample ``j`` draws its indices from an independent xoshiro256** stream
seeded with ``derive_seed(seed, j)``, so results do not depend on
execution order and a scalar reimplementation can reproduce them draw for
draw. The hot path below runs all streams in lockstep with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from routecast.errors import RoutecastError
from routecast.rng import _GOLDEN, derive_seed

__all__ = [
    "BootstrapCI",
    "PairedDiffResult",
    "EmptyOutcomes",
    "LengthMismatch",
    "DegenerateInput",
    "bootstrap_ci",
    "paired_diff",
    "deviation_scores",
]


class EmptyOutcomes(RoutecastError):
    """bootstrap_ci requires at least one outcome."""


class LengthMismatch(RoutecastError):
    """Paired tests require equal-length, non-empty outcome vectors."""


class DegenerateInput(RoutecastError):
    """Deviation scores require at least two seeds."""


@dataclass(frozen=True)
class BootstrapCI:
    mean: float
    lo: float
    hi: float
    n: int
    resamples: int
    reliable: bool
    seed: int


@dataclass(frozen=True)
class PairedDiffResult:
    mean_diff: float
    lo: float
    hi: float
    significant: bool


# ---------------------------------------------------------------------------
# Vectorized xoshiro256**: one independent stream per resample, advanced in
# lockstep. Must match routecast.rng.Xoshiro256 draw for draw.
# ---------------------------------------------------------------------------

_U = np.uint64


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def _rotl_vec(x: np.ndarray, k: int) -> np.ndarray:
    return (x << _U(k)) | (x >> _U(64 - k))


class _VecXoshiro256:
    """``n`` xoshiro256** streams advanced one step per call."""

    def __init__(self, seeds: np.ndarray) -> None:
        state = seeds.astype(np.uint64, copy=True)
        words = []
        for _ in range(4):
            state = state + _U(_GOLDEN)
            words.append(_mix64_vec(state))
        self._s = words

    def next_u64(self) -> np.ndarray:
        s = self._s
        result = _rotl_vec(s[1] * _U(5), 7) * _U(9)
        t = s[1] << _U(17)
        s[2] = s[2] ^ s[0]
        s[3] = s[3] ^ s[1]
        s[1] = s[1] ^ s[2]
        s[0] = s[0] ^ s[3]
        s[2] = s[2] ^ t
        s[3] = _rotl_vec(s[3], 45)
        return result


def _child_seeds(seed: int, count: int) -> np.ndarray:
    indices = np.arange(1, count + 1, dtype=np.uint64)
    return _mix64_vec(_U(seed & (2**64 - 1)) + indices * _U(_GOLDEN))


def _resample_means(values: np.ndarray, resamples: int, seed: int) -> np.ndarray:
    """Means of ``resamples`` same-size with-replacement resamples."""
    n = values.size
    gen = _VecXoshiro256(_child_seeds(seed, resamples))
    sums = np.zeros(resamples, dtype=np.float64)
    n_u = _U(n)
    for _ in range(n):
        idx = (gen.next_u64() % n_u).astype(np.intp)
        sums += values[idx]
    return sums / n


def _percentiles(means: np.ndarray) -> tuple[float, float]:
    lo, hi = np.percentile(means, [2.5, 97.5], method="linear")
    return float(lo), float(hi)


def _is_binary(values: np.ndarray) -> bool:
    return bool(np.isin(values, (0.0, 1.0)).all())


def bootstrap_ci(
    outcomes: Sequence[float],
    resamples: int = 10_000,
    *,
    seed: int,
) -> BootstrapCI:
    """Percentile-bootstrap 95% confidence interval of the mean.

    Deterministic given (outcomes, resamples, seed).
    """
    values = np.asarray(outcomes, dtype=np.float64)
    if values.size == 0:
        raise EmptyOutcomes("cannot bootstrap an empty outcome list")
    n = int(values.size)
    lo, hi = _percentiles(_resample_means(values, resamples, seed))
    reliable = n >= 30
    if reliable and _is_binary(values):
        positives = int(values.sum())
        reliable = min(positives, n - positives) >= 5
    return BootstrapCI(
        mean=float(values.mean()),
        lo=lo,
        hi=hi,
        n=n,
        resamples=resamples,
        reliable=reliable,
        seed=seed,
    )


def paired_diff(
    outcomes_a: Sequence[float],
    outcomes_b: Sequence[float],
    resamples: int = 10_000,
    *,
    seed: int,
) -> PairedDiffResult:
    """Paired bootstrap difference test between two outcome vectors.

    Builds the per-target difference vector (+1 where B succeeded and A
    failed, -1 for the reverse, 0 otherwise for binary outcomes),
    bootstraps its mean, and calls the difference significant when the 95%
    interval excludes zero.
    """
    a = np.asarray(outcomes_a, dtype=np.float64)
    b = np.asarray(outcomes_b, dtype=np.float64)
    if a.size != b.size:
        raise LengthMismatch(f"outcome lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise LengthMismatch("paired test requires at least one outcome")
    diffs = b - a
    lo, hi = _percentiles(_resample_means(diffs, resamples, seed))
    return PairedDiffResult(
        mean_diff=float(diffs.mean()),
        lo=lo,
        hi=hi,
        significant=bool(lo > 0.0 or hi < 0.0),
    )


def deviation_scores(metrics_per_seed: Sequence[Sequence[float]]) -> tuple[list[float], int]:
    """Per-seed deviation scores and the index of the minimizing seed.

    For each metric column, z = (value - column mean) / column standard
    deviation (population form); a seed's score is the sum of its squared
    z-scores. Zero-variance columns contribute nothing. Ties resolve to
    the lowest seed index.
    """
    matrix = np.asarray(metrics_per_seed, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise DegenerateInput("deviation scores require a matrix with >= 2 seed rows")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # population (divisor n)
    # a column of identical values must contribute nothing, even when the
    # inexact float mean leaves a ~1e-17 residual standard deviation
    constant = (matrix == matrix[0]).all(axis=0)
    varying = ~constant & (std > 0)
    z = np.divide(matrix - mean, std, out=np.zeros_like(matrix), where=varying)
    scores = (z**2).sum(axis=1)
    return [float(s) for s in scores], int(np.argmin(scores))
