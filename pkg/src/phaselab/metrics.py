"""Circular statistics over sets of phase estimates.

Invalid estimates are passed as NaN (or masked with ``valid``) and never
enter a statistic; they are only counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import wrap_phase

__all__ = [
    "DEFAULT_LEVEL",
    "DEFAULT_REPLICATES",
    "DispersionStat",
    "EfficiencyPoint",
    "MetricsError",
    "bootstrap_distribution",
    "bootstrap_interval",
    "circular_bias",
    "circular_dispersion",
    "efficiency_difference",
    "hit_frequency",
    "mean_resultant",
]

DEFAULT_REPLICATES = 400
DEFAULT_LEVEL = 0.68


class MetricsError(ArithmeticError):
    """A statistic is undefined for the given data (e.g. no valid estimates)."""


@dataclass(frozen=True)
class DispersionStat:
    sigma2: float
    n_valid: int
    n_invalid: int
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class EfficiencyPoint:
    window: float
    f_g: float
    f_p: float
    delta_e: float
    stderr: float


def _split_valid(phases, valid=None):
    phases = np.asarray(phases, dtype=float).ravel()
    mask = np.isfinite(phases)
    if valid is not None:
        mask &= np.asarray(valid, dtype=bool).ravel()
    return phases[mask], int(mask.sum()), int((~mask).sum())


def mean_resultant(phases) -> complex:
    """Mean of ``exp(i theta)`` with compensated (exactly rounded) sums."""
    phases = np.asarray(phases, dtype=float).ravel()
    if phases.size == 0:
        raise MetricsError("mean resultant of an empty set")
    n = phases.size
    return complex(math.fsum(np.cos(phases)) / n, math.fsum(np.sin(phases)) / n)


def _dispersion_fast(phases):
    if phases.size == 0:
        return math.nan
    r = np.mean(np.cos(phases)) ** 2 + np.mean(np.sin(phases)) ** 2
    return 1.0 - r


def circular_dispersion(
    phases,
    valid=None,
    replicates: int = DEFAULT_REPLICATES,
    level: float = DEFAULT_LEVEL,
    seed: int = 0,
) -> DispersionStat:
    """Dispersion ``1 - |<exp(i theta)>|^2`` with a bootstrap interval.

    Parameters
    ----------
    phases : array_like
        Estimated phases; NaN entries count as invalid.
    valid : array_like of bool, optional
        Additional validity mask.
    replicates, level, seed
        Passed to :func:`bootstrap_interval`.  ``replicates=0`` skips the
        bootstrap and returns a zero-width interval.

    Raises
    ------
    MetricsError
        If no valid phase remains.
    """
    good, n_valid, n_invalid = _split_valid(phases, valid)
    if n_valid == 0:
        raise MetricsError("dispersion needs at least one valid phase")
    sigma2 = min(max(1.0 - abs(mean_resultant(good)) ** 2, 0.0), 1.0)
    if replicates and n_valid >= 2:
        low, high = bootstrap_interval(good, _dispersion_fast, replicates, level, seed, point=sigma2)
    else:
        low = high = sigma2
    return DispersionStat(sigma2, n_valid, n_invalid, max(low, 0.0), min(high, 1.0))


def circular_bias(phases, true_phase: float, valid=None) -> float:
    """Wrapped offset of the circular mean direction from ``true_phase``."""
    good, n_valid, _ = _split_valid(phases, valid)
    if n_valid == 0:
        raise MetricsError("bias needs at least one valid phase")
    r = mean_resultant(good)
    if abs(r) < 1e-12:
        raise MetricsError("mean direction undefined: resultant vector vanishes")
    return wrap_phase(math.atan2(r.imag, r.real) - true_phase)


def hit_frequency(phases, true_phase: float, window: float, valid=None) -> float:
    """Fraction of valid phases within circular distance ``window`` of ``true_phase``."""
    if not 0 < window <= math.pi:
        raise ValueError(f"window must lie in (0, pi], got {window}")
    good, n_valid, _ = _split_valid(phases, valid)
    if n_valid == 0:
        raise MetricsError("hit frequency of an empty set")
    distance = np.abs(wrap_phase(good - true_phase))
    return float(np.count_nonzero(distance <= window)) / n_valid


def efficiency_difference(f_p: float, f_g: float) -> float:
    for name, f in (("f_p", f_p), ("f_g", f_g)):
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {f}")
    return f_p - f_g


def bootstrap_distribution(
    values,
    statistic: Callable,
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
) -> np.ndarray:
    """Statistic evaluated on ``replicates`` resamples drawn with replacement.

    ``values`` is an array, or a tuple of equally long arrays resampled
    jointly along their first axis (paired data).  Returns an array of shape
    ``(replicates,) + shape(statistic(values))``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    paired = isinstance(values, tuple)
    arrays = tuple(np.asarray(v) for v in values) if paired else (np.asarray(values),)
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("paired arrays must have equal length")
    if n < 2:
        raise MetricsError("bootstrap needs at least two values")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xB0075,)))
    out = []
    for _ in range(replicates):
        idx = rng.integers(0, n, n)
        sample = tuple(a[idx] for a in arrays)
        out.append(statistic(*sample) if paired else statistic(sample[0]))
    return np.asarray(out, dtype=float)


def bootstrap_interval(
    values,
    statistic: Callable,
    replicates: int = DEFAULT_REPLICATES,
    level: float = DEFAULT_LEVEL,
    seed: int = 0,
    point=None,
):
    """Percentile bootstrap interval, deterministic for a given ``seed``.

    The interval is widened, if needed, to contain the statistic of the
    original data (``point``; computed when not given).  Vector-valued
    statistics give arrays of lower and upper bounds.

    Raises
    ------
    MetricsError
        With fewer than two values.
    """
    if replicates < 200:
        raise ValueError("bootstrap_interval needs at least 200 replicates")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    dist = bootstrap_distribution(values, statistic, replicates, seed)
    if point is None:
        point = statistic(*values) if isinstance(values, tuple) else statistic(np.asarray(values))
    point = np.asarray(point, dtype=float)
    tail = 50.0 * (1.0 - level)
    low = np.nanpercentile(dist, tail, axis=0)
    high = np.nanpercentile(dist, 100.0 - tail, axis=0)
    low = np.minimum(low, point)
    high = np.maximum(high, point)
    if low.ndim == 0:
        return float(low), float(high)
    return low, high
