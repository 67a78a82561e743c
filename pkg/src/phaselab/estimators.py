"""Phase estimators for four-channel photocount frames.

Three estimators are provided, each in a per-sample form returning a
:class:`PhaseEstimate` and a vectorised ``*_batch`` form over an ``(n, 4)``
count array used by the sweeps:

* NFM: the quadrature-difference phase, which is the maximum of a Gaussian
  likelihood with phase-insensitive noise.
* Poissonian ML: maximum of the Poisson likelihood over phase and visibility,
  closed form inside the unit disk and a 1-D search on the ``V = 1`` circle
  otherwise (``constrained``); the bare closed form is the unconstrained ML.
* Single-parameter ML: Poisson likelihood with ``V = 1`` assumed for every
  sample, maximised by safeguarded Newton iteration.

The log-likelihoods and a brute-force grid maximiser are exposed as test
oracles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import CountSample, channel_means, wrap_phase

__all__ = [
    "EstimateArrays",
    "GaussianNoiseModel",
    "LikelihoodKind",
    "Method",
    "PhaseEstimate",
    "Quadratures",
    "boundary_loglik",
    "boundary_ml_phase",
    "boundary_ml_batch",
    "boundary_score",
    "gaussian_loglik",
    "grid_ml_oracle",
    "nfm_batch",
    "nfm_estimate",
    "poisson_loglik",
    "poisson_ml_batch",
    "poisson_ml_estimate",
    "quadratures",
    "single_param_batch",
    "single_param_ml_estimate",
    "unconstrained_ml_estimate",
]

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
MAX_NEWTON_STEP = 0.5
MIN_CURVATURE = 1e-12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_SCAN_POINTS = 129


class Method(str, enum.Enum):
    NFM = "nfm"
    ML_CONSTRAINED = "ml_constrained"
    ML_UNCONSTRAINED = "ml_unconstrained"
    ML_SINGLE_PARAM = "ml_single_param"

    @property
    def short(self) -> str:
        """Tag used in estimate files."""
        return _SHORT_NAMES[self]


_SHORT_NAMES = {
    Method.NFM: "nfm",
    Method.ML_CONSTRAINED: "ml",
    Method.ML_UNCONSTRAINED: "mlu",
    Method.ML_SINGLE_PARAM: "ml1",
}


class LikelihoodKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"


class Quadratures(NamedTuple):
    dc: int
    ds: int
    sc: int
    ss: int


@dataclass(frozen=True)
class PhaseEstimate:
    theta: float
    visibility_hat: float | None
    method: Method
    valid: bool
    on_boundary: bool = False


@dataclass(frozen=True)
class GaussianNoiseModel:
    noise_var: float = 1.0

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be > 0, got {self.noise_var}")


class EstimateArrays(NamedTuple):
    """Column-wise estimates for a batch of frames.

    ``theta`` and ``visibility`` are NaN where ``valid`` is False.
    ``fallback`` marks boundary solutions obtained by the bracketing search
    instead of Newton iteration.
    """

    theta: np.ndarray
    visibility: np.ndarray
    valid: np.ndarray
    on_boundary: np.ndarray
    fallback: np.ndarray

    def estimate(self, i: int, method: Method) -> PhaseEstimate:
        valid = bool(self.valid[i])
        vis = float(self.visibility[i])
        return PhaseEstimate(
            theta=float(self.theta[i]),
            visibility_hat=vis if valid and not math.isnan(vis) else None,
            method=method,
            valid=valid,
            on_boundary=bool(self.on_boundary[i]),
        )


def _as_counts(counts) -> np.ndarray:
    arr = np.asarray(counts, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"counts must have shape (n, 4), got {arr.shape}")
    if (arr < 0).any():
        raise ValueError("counts must be non-negative")
    return arr


def quadratures(sample: CountSample) -> Quadratures:
    n3, n4, n5, n6 = (int(n) for n in sample)
    return Quadratures(n3 - n4, n5 - n6, n3 + n4, n5 + n6)


# ---------------------------------------------------------------------------
# NFM / Gaussian ML


def nfm_batch(counts) -> EstimateArrays:
    c = _as_counts(counts)
    dc = (c[:, 0] - c[:, 1]).astype(float)
    ds = (c[:, 2] - c[:, 3]).astype(float)
    total = c.sum(axis=1).astype(float)
    valid = (dc != 0) | (ds != 0)
    radius = np.hypot(dc, ds)
    theta = np.where(valid, wrap_phase(np.arctan2(ds, dc)), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        vis = np.where(valid, np.minimum(2.0 * radius / total, 1.0), np.nan)
    false = np.zeros(len(c), dtype=bool)
    return EstimateArrays(theta, vis, valid, false, false.copy())


def nfm_estimate(sample: CountSample) -> PhaseEstimate:
    """NFM phase and the matching Gaussian-ML visibility.

    Invalid when both quadrature differences vanish.
    """
    return nfm_batch(sample).estimate(0, Method.NFM)


# ---------------------------------------------------------------------------
# Likelihoods


def gaussian_loglik(sample, phase, visibility, intensity, noise: GaussianNoiseModel = GaussianNoiseModel()):
    """Gaussian log-likelihood up to an additive constant."""
    means = np.asarray(channel_means(phase, intensity, visibility))
    resid = np.asarray(sample, dtype=float) - means
    return -float(resid @ resid) / (2.0 * noise.noise_var)


def poisson_loglik(sample, phase, visibility, intensity) -> float:
    """``sum_i n_i ln(mean_i)`` with ``0 ln 0 = 0``.

    Returns ``-inf`` when a channel with counts has zero mean.  The dropped
    ``exp(-mean)/n!`` factors do not depend on phase or visibility.
    """
    means = channel_means(phase, intensity, visibility)
    total = 0.0
    for n, m in zip(sample, means):
        if n == 0:
            continue
        if m <= 0:
            return -math.inf
        total += n * math.log(m)
    return total


def _xlogy(n, x):
    """``n * log(x)`` elementwise, 0 where ``n == 0``, -inf where ``x <= 0 < n``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = n * np.log(np.where(x > 0, x, 1.0))
    out = np.where(n == 0, 0.0, out)
    return np.where((n > 0) & ~(x > 0), -np.inf, out)


def _pair_loglik(c, x, y):
    """Poisson log-likelihood in the Cartesian coordinates ``x = V cos, y = V sin``."""
    return (
        _xlogy(c[..., 0], 1.0 + x)
        + _xlogy(c[..., 1], 1.0 - x)
        + _xlogy(c[..., 2], 1.0 + y)
        + _xlogy(c[..., 3], 1.0 - y)
    )


def boundary_loglik(sample, theta):
    """Poisson log-likelihood on the ``V = 1`` circle (constant terms dropped)."""
    c = np.asarray(sample, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = _pair_loglik(c, np.cos(theta), np.sin(theta))
    return float(out) if out.ndim == 0 else out


def _score_and_curvature(c, theta):
    """First and second derivative of :func:`boundary_loglik` in ``theta``.

    Terms of channels without counts are dropped so that forbidden phases of
    empty channels do not produce 0/0.
    """
    n3, n4, n5, n6 = (c[..., k] for k in range(4))
    cos, sin = np.cos(theta), np.sin(theta)
    dens = (1.0 + cos, 1.0 - cos, 1.0 + sin, 1.0 - sin)
    nums = (-sin, sin, cos, -cos)
    score = np.zeros(np.shape(theta))
    curv = np.zeros(np.shape(theta))
    with np.errstate(divide="ignore", invalid="ignore"):
        for n, num, den in zip((n3, n4, n5, n6), nums, dens):
            has = n > 0
            score = score + np.where(has, n * num / den, 0.0)
            curv = curv - np.where(has, n / den, 0.0)
    return score, curv


def boundary_score(sample, theta):
    """Derivative of the ``V = 1`` log-likelihood with respect to phase."""
    score, _ = _score_and_curvature(np.asarray(sample, dtype=float), np.asarray(theta, dtype=float))
    return float(score) if np.ndim(score) == 0 else score


# ---------------------------------------------------------------------------
# Boundary (V = 1) maximisation


def _bracket_search(c, theta0):
    """Golden-section search for the maximum on ``[theta0 - pi/2, theta0 + pi/2]``.

    The likelihood may be ``-inf`` at up to three points of the bracket, so a
    coarse scan first locates the best grid cell; golden-section search then
    runs on the two cells around it.
    """
    offsets = np.linspace(-np.pi / 2, np.pi / 2, _SCAN_POINTS)
    grid = theta0[:, None] + offsets[None, :]
    values = _pair_loglik(c[:, None, :], np.cos(grid), np.sin(grid))
    best = np.argmax(values, axis=1)
    h = offsets[1] - offsets[0]
    centre = theta0 + offsets[best]
    lo = np.maximum(centre - h, theta0 - np.pi / 2)
    hi = np.minimum(centre + h, theta0 + np.pi / 2)
    return _golden_section(c, lo, hi)


def _golden_section(c, lo, hi, tol=1e-12, max_iter=200):
    a, b = lo.astype(float).copy(), hi.astype(float).copy()
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = _pair_loglik(c, np.cos(x1), np.sin(x1))
    f2 = _pair_loglik(c, np.cos(x2), np.sin(x2))
    for _ in range(max_iter):
        if np.all(b - a < tol):
            break
        left = f1 >= f2
        a_new = np.where(left, a, x1)
        b_new = np.where(left, x2, b)
        x1_new = np.where(left, b_new - _GOLDEN * (b_new - a_new), x2)
        x2_new = np.where(left, x1, a_new + _GOLDEN * (b_new - a_new))
        probe = np.where(left, x1_new, x2_new)
        fp = _pair_loglik(c, np.cos(probe), np.sin(probe))
        f1_new = np.where(left, fp, f2)
        f2_new = np.where(left, f1, fp)
        a, b, x1, x2, f1, f2 = a_new, b_new, x1_new, x2_new, f1_new, f2_new
    return 0.5 * (a + b)


def boundary_ml_batch(counts, theta0):
    """Maximise the ``V = 1`` likelihood starting from ``theta0``.

    Newton iteration ``theta <- theta - l'/l''`` runs until the step falls
    below ``NEWTON_TOL`` (at most ``NEWTON_MAX_ITER`` steps).  Rows where the
    curvature is below ``MIN_CURVATURE`` in magnitude, a step exceeds
    ``MAX_NEWTON_STEP``, the derivatives are not finite, the likelihood
    decreases, or Newton does not converge are re-solved by golden-section
    search on ``[theta0 - pi/2, theta0 + pi/2]``.

    Returns
    -------
    theta : ndarray
        Maximisers wrapped to ``(-pi, pi]``.
    fallback : ndarray of bool
        Rows solved by the bracketing search.
    """
    c = _as_counts(counts).astype(float)
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), (len(c),)).copy()
    theta = theta0.copy()
    active = np.ones(len(c), dtype=bool)
    fallback = ~np.isfinite(theta0)
    active &= ~fallback
    current = _pair_loglik(c, np.cos(theta), np.sin(theta))
    for _ in range(NEWTON_MAX_ITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        score, curv = _score_and_curvature(c[idx], theta[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            step = -score / curv
        bad = (
            ~np.isfinite(score)
            | ~np.isfinite(curv)
            | (np.abs(curv) < MIN_CURVATURE)
            | ~(np.abs(step) <= MAX_NEWTON_STEP)
        )
        proposal = theta[idx] + np.where(bad, 0.0, step)
        value = _pair_loglik(c[idx], np.cos(proposal), np.sin(proposal))
        # a Newton step on the concave boundary likelihood must not lose ground
        bad |= value < current[idx] - 1e-9 * (1.0 + np.abs(current[idx]))
        fallback[idx[bad]] = True
        good = idx[~bad]
        theta[good] = proposal[~bad]
        current[good] = value[~bad]
        done = np.abs(step[~bad]) < NEWTON_TOL
        active[idx[bad]] = False
        active[good[done]] = False
    fallback |= active
    if fallback.any():
        rows = np.flatnonzero(fallback)
        theta[rows] = _bracket_search(c[rows], theta0[rows])
    return wrap_phase(theta), fallback


def boundary_ml_phase(sample: CountSample, theta0: float) -> float:
    """Local maximiser of the ``V = 1`` likelihood reached from ``theta0``.

    Raises
    ------
    ValueError
        For an all-zero sample, whose likelihood is flat.
    """
    if sum(sample) == 0:
        raise ValueError("all-zero sample: the boundary likelihood is flat")
    theta, _ = boundary_ml_batch(sample, theta0)
    return float(theta[0])


# ---------------------------------------------------------------------------
# Poissonian ML


def _pair_ratios(c):
    sc = c[:, 0] + c[:, 1]
    ss = c[:, 2] + c[:, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(sc > 0, (c[:, 0] - c[:, 1]) / np.where(sc > 0, sc, 1), 0.0)
        b = np.where(ss > 0, (c[:, 2] - c[:, 3]) / np.where(ss > 0, ss, 1), 0.0)
    valid = (sc > 0) & (ss > 0) & ((a != 0) | (b != 0))
    return a, b, valid


def poisson_ml_batch(counts, constrained: bool = True) -> EstimateArrays:
    """Poissonian ML over a batch.

    The closed form is ``theta = atan2(b, a)``, ``V = hypot(a, b)`` with
    ``a = (n3 - n4)/(n3 + n4)`` and ``b = (n5 - n6)/(n5 + n6)``.  When
    ``constrained`` and ``V > 1`` the phase is re-maximised on ``V = 1``.
    Unconstrained estimates keep the raw (possibly > 1) visibility.
    """
    c = _as_counts(counts)
    a, b, valid = _pair_ratios(c)
    raw_vis = np.hypot(a, b)
    theta0 = np.arctan2(b, a)
    theta = np.where(valid, wrap_phase(theta0), np.nan)
    vis = np.where(valid, raw_vis, np.nan)
    boundary = np.zeros(len(c), dtype=bool)
    fallback = np.zeros(len(c), dtype=bool)
    if constrained:
        boundary = valid & (raw_vis > 1.0)
        if boundary.any():
            rows = np.flatnonzero(boundary)
            theta[rows], fallback[rows] = boundary_ml_batch(c[rows], theta0[rows])
            vis[rows] = 1.0
    return EstimateArrays(theta, vis, valid, boundary, fallback)


def poisson_ml_estimate(sample: CountSample) -> PhaseEstimate:
    """Constrained Poissonian ML estimate of phase and visibility."""
    return poisson_ml_batch(sample, constrained=True).estimate(0, Method.ML_CONSTRAINED)


def unconstrained_ml_estimate(sample: CountSample) -> PhaseEstimate:
    """Closed-form Poissonian ML applied regardless of the ``V <= 1`` constraint.

    ``visibility_hat`` is omitted because the raw value may exceed one.
    """
    est = poisson_ml_batch(sample, constrained=False)
    valid = bool(est.valid[0])
    return PhaseEstimate(float(est.theta[0]), None, Method.ML_UNCONSTRAINED, valid, False)


def single_param_batch(counts) -> EstimateArrays:
    """Single-parameter ML (``V = 1`` assumed) over a batch."""
    c = _as_counts(counts)
    a, b, valid = _pair_ratios(c)
    theta = np.full(len(c), np.nan)
    fallback = np.zeros(len(c), dtype=bool)
    if valid.any():
        rows = np.flatnonzero(valid)
        theta[rows], fallback[rows] = boundary_ml_batch(c[rows], np.arctan2(b[rows], a[rows]))
    vis = np.where(valid, 1.0, np.nan)
    return EstimateArrays(theta, vis, valid, valid.copy(), fallback)


def single_param_ml_estimate(sample: CountSample) -> PhaseEstimate:
    return single_param_batch(sample).estimate(0, Method.ML_SINGLE_PARAM)


# ---------------------------------------------------------------------------
# Brute-force oracle


def _grid_values(kind, c, theta, vis, intensity, noise_var):
    """Log-likelihood on broadcast ``theta`` x ``vis`` arrays (no range checks)."""
    x = vis * np.cos(theta)
    y = vis * np.sin(theta)
    if kind is LikelihoodKind.POISSON:
        return _pair_loglik(c, x, y)
    half = 0.5 * intensity
    means = (half * (1 + x), half * (1 - x), half * (1 + y), half * (1 - y))
    sq = sum((c[k] - m) ** 2 for k, m in enumerate(means))
    return -sq / (2.0 * noise_var)


def _parabola_offset(fm, f0, fp):
    """Vertex offset (in grid units) of the parabola through three points."""
    denom = fm - 2.0 * f0 + fp
    if not (np.isfinite(denom) and denom < 0):
        return 0.0
    return float(np.clip(0.5 * (fm - fp) / denom, -1.0, 1.0))


def grid_ml_oracle(sample, likelihood_kind, theta_steps: int = 720, v_steps: int = 200,
                   noise: GaussianNoiseModel = GaussianNoiseModel()) -> PhaseEstimate:
    """Maximise a log-likelihood by exhaustive grid search plus one quadratic step.

    The grid covers ``theta`` in ``(-pi, pi]`` (``theta_steps`` nodes) and
    ``V`` in ``[0, 1]`` (``v_steps + 1`` nodes).  Around the best node a
    2-D quadratic model built from central differences is maximised; if the
    model is not concave, leaves the cell or leaves ``V <= 1``, separate
    1-D parabolic refinements are used instead.  The Gaussian likelihood is
    evaluated with ``N`` equal to half the total count.
    """
    if theta_steps < 360 or v_steps < 100:
        raise ValueError("grid_ml_oracle needs theta_steps >= 360 and v_steps >= 100")
    kind = LikelihoodKind(likelihood_kind)
    method = Method.NFM if kind is LikelihoodKind.GAUSSIAN else Method.ML_CONSTRAINED
    c = np.asarray(sample, dtype=float)
    total = float(c.sum())
    invalid = PhaseEstimate(math.nan, None, method, False, False)
    if total == 0:
        return invalid
    intensity = 0.5 * total
    ht = 2 * np.pi / theta_steps
    hv = 1.0 / v_steps
    thetas = np.pi - ht * np.arange(theta_steps)[::-1]
    vs = hv * np.arange(v_steps + 1)
    f = _grid_values(kind, c, thetas[:, None], vs[None, :], intensity, noise.noise_var)
    if not np.isfinite(f).any() or np.nanmax(f) - np.nanmin(f[np.isfinite(f)]) <= 0:
        return invalid
    i, j = np.unravel_index(int(np.argmax(f)), f.shape)
    t0, v0 = thetas[i], vs[j]
    if v0 == 0:
        return invalid

    def val(dt, dv):
        return float(_grid_values(kind, c, t0 + dt * ht, v0 + dv * hv, intensity, noise.noise_var))

    f0 = val(0, 0)
    ftm, ftp = val(-1, 0), val(1, 0)
    fvm, fvp = val(0, -1), val(0, 1)
    fmm, fmp, fpm, fpp = val(-1, -1), val(-1, 1), val(1, -1), val(1, 1)
    stencil = np.array([f0, ftm, ftp, fvm, fvp, fmm, fmp, fpm, fpp])
    theta, vis = t0, v0
    refined = False
    if np.all(np.isfinite(stencil)):
        grad = np.array([0.5 * (ftp - ftm), 0.5 * (fvp - fvm)])
        hess = np.array([
            [ftp - 2 * f0 + ftm, 0.25 * (fpp - fpm - fmp + fmm)],
            [0.25 * (fpp - fpm - fmp + fmm), fvp - 2 * f0 + fvm],
        ])
        if hess[0, 0] < 0 and np.linalg.det(hess) > 0:
            step = -np.linalg.solve(hess, grad)
            cand_v = v0 + step[1] * hv
            if np.all(np.abs(step) <= 1.0) and 0.0 <= cand_v <= 1.0:
                theta, vis = t0 + step[0] * ht, cand_v
                refined = True
    if not refined:
        theta = t0 + _parabola_offset(ftm, f0, ftp) * ht
        if 0 < j < v_steps:
            vis = v0 + _parabola_offset(fvm, f0, fvp) * hv
    return PhaseEstimate(wrap_phase(theta), float(np.clip(vis, 0.0, 1.0)), method, True, bool(vis >= 1.0))
