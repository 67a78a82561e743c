"""Simulation scenarios: parameter sweeps, jitter calibration and file I/O.

Every sweep point simulates its own frame set from a substream keyed by the
scenario and the point's physical parameters, so a point's result does not
depend on the rest of the grid or on the number of workers.

Estimator tags used in column names:

========  ==============================================
``nfm``   NFM (Gaussian ML) phase
``ml``    Poissonian ML with the ``V <= 1`` constraint
``mlu``   closed-form Poissonian ML applied to every frame
``ml1``   single-parameter ML assuming ``V = 1``
========  ==============================================

When several estimators are compared on one frame set, statistics use the
frames for which all of them are valid; ``<tag>_n_invalid`` counts the frames
excluded from that estimator's statistic.
"""

from __future__ import annotations

import ast
import csv
import enum
import hashlib
import logging
import math
import operator
import os
import struct
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import estimators as est
from . import metrics, theory
from .model import ConfigError, ExperimentConfig, SamplingMode, open_output, simulate_counts, wrap_phase

__all__ = [
    "ESTIMATORS",
    "JitterCalibration",
    "Scenario",
    "SweepResult",
    "calibrate_jitter",
    "default_intensity_grid",
    "default_window_grid",
    "estimate_counts",
    "frames_for_intensity",
    "load_config",
    "read_config",
    "read_results",
    "run_bias_sweep",
    "run_intensity_sweep",
    "run_phase_sweep",
    "run_window_sweep",
    "write_config",
    "write_results",
]

log = logging.getLogger(__name__)

ESTIMATORS: dict[str, Callable[[np.ndarray], est.EstimateArrays]] = {
    "nfm": est.nfm_batch,
    "ml": lambda c: est.poisson_ml_batch(c, constrained=True),
    "mlu": lambda c: est.poisson_ml_batch(c, constrained=False),
    "ml1": est.single_param_batch,
}

_THEORY_FOR = {"nfm": theory.FormulaId.NFM_ASYM, "mlu": theory.FormulaId.ML_UNCONSTR_ASYM}

PARAM_COLUMNS = ("frames", "intensity", "visibility", "true_phase", "jitter_sigma",
                 "sampling_mode", "pulses_per_frame", "seed")

FRAMES_SCALE = 1e5


class Scenario(str, enum.Enum):
    INTENSITY_SWEEP = "intensity_sweep"
    WINDOW_SWEEP = "window_sweep"
    PHASE_SWEEP = "phase_sweep"
    BIAS_SWEEP = "bias_sweep"


_SCENARIO_IDS = {s: i + 1 for i, s in enumerate(Scenario)}


@dataclass
class SweepResult:
    """Rows of one sweep, one per grid point.

    ``independent`` names the leading column(s); ``columns`` is the full
    column order used when writing.  ``configs`` holds the exact
    configuration of every row and ``config_echo`` the base configuration.
    """

    scenario: Scenario
    independent: tuple[str, ...]
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    config_echo: ExperimentConfig | None = None
    configs: list[ExperimentConfig] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)


@dataclass(frozen=True)
class JitterCalibration:
    sigma: float
    uncertainty: float
    warning: bool = False


# ---------------------------------------------------------------------------
# shared machinery


def _point_key(scenario: Scenario, config: ExperimentConfig) -> tuple[int, int]:
    """Substream key from the scenario and the physical parameters of a point."""
    blob = struct.pack(
        "<4d16sQ",
        config.intensity,
        config.visibility,
        config.true_phase,
        config.jitter_sigma,
        config.sampling_mode.value.encode(),
        config.pulses_per_frame,
    )
    digest = int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little")
    return _SCENARIO_IDS[scenario], digest


def _bootstrap_seed(config: ExperimentConfig, key: tuple[int, int]) -> int:
    return (config.seed ^ (key[1] * 0x9E3779B97F4A7C15)) & (2**64 - 1)


def estimate_counts(counts: np.ndarray, tags: Sequence[str]) -> dict[str, est.EstimateArrays]:
    unknown = [t for t in tags if t not in ESTIMATORS]
    if unknown:
        raise ConfigError(f"unknown estimator(s) {unknown}; choose from {sorted(ESTIMATORS)}")
    return {t: ESTIMATORS[t](counts) for t in tags}


def _common_valid(estimates: dict[str, est.EstimateArrays]) -> np.ndarray:
    masks = [e.valid for e in estimates.values()]
    return np.logical_and.reduce(masks)


def _require_valid(mask: np.ndarray, where: str) -> None:
    if mask.sum() < 2:
        raise metrics.MetricsError(f"{where}: fewer than two frames with valid estimates")


def _params_row(config: ExperimentConfig) -> dict:
    return {
        "frames": config.frames,
        "intensity": config.intensity,
        "visibility": config.visibility,
        "true_phase": config.true_phase,
        "jitter_sigma": config.jitter_sigma,
        "sampling_mode": config.sampling_mode.value,
        "pulses_per_frame": config.pulses_per_frame,
        "seed": config.seed,
    }


def _dispersion_block(
    phases: dict[str, np.ndarray],
    replicates: int,
    level: float,
    seed: int,
    reference: str | None = None,
) -> dict[str, float]:
    """Dispersions of several paired phase arrays with joint bootstrap intervals.

    With a ``reference`` tag, ``diff_<tag>`` (reference minus tag) and
    ``rel_diff_<tag>`` (difference over the reference) are added for every
    other tag.
    """
    tags = list(phases)
    trig = []
    for t in tags:
        trig.extend([np.cos(phases[t]), np.sin(phases[t])])

    def stats(*cols):
        sig = [1.0 - (np.mean(cols[2 * i]) ** 2 + np.mean(cols[2 * i + 1]) ** 2) for i in range(len(tags))]
        out = list(sig)
        if reference is not None:
            r = sig[tags.index(reference)]
            for i, t in enumerate(tags):
                if t != reference:
                    out.extend([r - sig[i], (r - sig[i]) / r if r > 0 else math.nan])
        return np.array(out)

    point = []
    for t in tags:
        point.append(metrics.circular_dispersion(phases[t], replicates=0).sigma2)
    if reference is not None:
        r = point[tags.index(reference)]
        for i, t in enumerate(tags):
            if t != reference:
                point.extend([r - point[i], (r - point[i]) / r if r > 0 else math.nan])
    point = np.array(point)
    low, high = metrics.bootstrap_interval(tuple(trig), stats, replicates, level, seed, point=point)
    names = [f"{t}_sigma2" for t in tags]
    if reference is not None:
        for t in tags:
            if t != reference:
                names.extend([f"diff_{t}", f"rel_diff_{t}"])
    row = {}
    for name, p, lo, hi in zip(names, point, low, high):
        base = name[: -len("_sigma2")] if name.endswith("_sigma2") else name
        row[name] = float(p)
        row[f"{base}_ci_low"] = float(lo)
        row[f"{base}_ci_high"] = float(hi)
    return row


def _dispersion_columns(tags, reference=None):
    cols = []
    for t in tags:
        cols += [f"{t}_sigma2", f"{t}_ci_low", f"{t}_ci_high", f"{t}_n_invalid"]
    if reference is not None:
        for t in tags:
            if t != reference:
                cols += [f"diff_{t}", f"diff_{t}_ci_low", f"diff_{t}_ci_high",
                         f"rel_diff_{t}", f"rel_diff_{t}_ci_low", f"rel_diff_{t}_ci_high"]
    return cols


def _theory_values(formulas, config: ExperimentConfig) -> dict[str, float]:
    row = {}
    for f in formulas:
        try:
            row[f"theory_{f.value}"] = theory.evaluate(f, config.intensity, config.visibility, config.true_phase)
        except ValueError:
            row[f"theory_{f.value}"] = math.nan
    return row


def _simulate_point(scenario, config, workers):
    key = _point_key(scenario, config)
    counts = simulate_counts(config, stream_key=key, workers=workers)
    return counts, _bootstrap_seed(config, key)


# ---------------------------------------------------------------------------
# grids


def default_intensity_grid(points: int = 16) -> list[float]:
    return list(np.geomspace(0.1, 60.0, points))


def default_window_grid(points: int = 32) -> list[float]:
    return list(np.linspace(0.05, math.pi, points))


def frames_for_intensity(intensity: float, floor: int, scale: float = FRAMES_SCALE) -> int:
    """Frames at one intensity: proportional to ``1/N`` with a floor."""
    return max(int(floor), int(math.ceil(scale / intensity)))


# ---------------------------------------------------------------------------
# scenarios


def run_intensity_sweep(
    base: ExperimentConfig,
    intensity_grid: Sequence[float] | None = None,
    estimators: Sequence[str] = ("nfm", "ml", "mlu"),
    scale_frames: bool = True,
    replicates: int = metrics.DEFAULT_REPLICATES,
    level: float = metrics.DEFAULT_LEVEL,
    workers: int | None = 1,
) -> SweepResult:
    """Dispersions of NFM and ML estimators against mean photon number.

    Reports each estimator's dispersion and the absolute and relative
    difference from NFM, all with joint bootstrap intervals.  With
    ``scale_frames`` the frame count at ``N`` is
    ``max(base.frames, ceil(1e5 / N))``.
    """
    grid = default_intensity_grid() if intensity_grid is None else list(intensity_grid)
    if not grid:
        raise ConfigError("intensity grid is empty")
    tags = list(dict.fromkeys(["nfm", *estimators]))
    formulas = [theory.FormulaId.NFM_ASYM, theory.FormulaId.ML_UNCONSTR_ASYM, theory.FormulaId.CRLB_ASYM]
    columns = ["intensity", *_dispersion_columns(tags, "nfm"), *(f"theory_{f.value}" for f in formulas)]
    columns += [c for c in PARAM_COLUMNS if c != "intensity"]
    result = SweepResult(Scenario.INTENSITY_SWEEP, ("intensity",), columns, config_echo=base)
    for n in grid:
        frames = frames_for_intensity(n, base.frames) if scale_frames else base.frames
        config = base.replace(intensity=float(n), frames=frames)
        counts, boot_seed = _simulate_point(Scenario.INTENSITY_SWEEP, config, workers)
        estimates = estimate_counts(counts, tags)
        mask = _common_valid(estimates)
        _require_valid(mask, f"intensity {n}")
        row = {"intensity": config.intensity}
        row.update(_dispersion_block({t: estimates[t].theta[mask] for t in tags}, replicates, level, boot_seed, "nfm"))
        for t in tags:
            row[f"{t}_n_invalid"] = int(frames - mask.sum())
        row.update(_theory_values(formulas, config))
        row.update(_params_row(config))
        result.rows.append(row)
        result.configs.append(config)
        log.info("intensity %.4g: %d frames, nfm %.5g", n, frames, row["nfm_sigma2"])
    return result


def run_window_sweep(
    config: ExperimentConfig,
    window_grid: Sequence[float] | None = None,
    replicates: int = metrics.DEFAULT_REPLICATES,
    level: float = metrics.DEFAULT_LEVEL,
    workers: int | None = 1,
) -> SweepResult:
    """Hit frequencies of NFM and constrained ML against phase-window width.

    ``window`` is the full width of the acceptance window centred on the
    true phase; an estimate is a hit when its circular distance from the
    true phase is at most ``window / 2`` (the ``half_width`` column).  All
    windows are evaluated on one frame set; ``stderr`` is the bootstrap
    standard deviation of ``delta_e``.
    """
    grid = default_window_grid() if window_grid is None else list(window_grid)
    if not grid:
        raise ConfigError("window grid is empty")
    widths = np.asarray(grid, dtype=float)
    if np.any(widths <= 0) or np.any(widths > 2 * math.pi):
        raise ConfigError("window widths must lie in (0, 2 pi]")
    columns = ["window", "half_width", "f_g", "f_p", "delta_e", "stderr", "delta_e_ci_low",
               "delta_e_ci_high", "nfm_n_invalid", "ml_n_invalid", *PARAM_COLUMNS]
    result = SweepResult(Scenario.WINDOW_SWEEP, ("window",), columns, config_echo=config)
    counts, boot_seed = _simulate_point(Scenario.WINDOW_SWEEP, config, workers)
    estimates = estimate_counts(counts, ("nfm", "ml"))
    mask = _common_valid(estimates)
    _require_valid(mask, "window sweep")
    half = widths / 2
    dist_g = np.abs(wrap_phase(estimates["nfm"].theta[mask] - config.true_phase))
    dist_p = np.abs(wrap_phase(estimates["ml"].theta[mask] - config.true_phase))
    hits_g = dist_g[:, None] <= half[None, :]
    hits_p = dist_p[:, None] <= half[None, :]

    def delta(hg, hp):
        return hp.mean(axis=0) - hg.mean(axis=0)

    dist = metrics.bootstrap_distribution((hits_g, hits_p), delta, replicates, boot_seed)
    stderr = dist.std(axis=0, ddof=1)
    point = delta(hits_g, hits_p)
    low, high = metrics.bootstrap_interval((hits_g, hits_p), delta, replicates, level, boot_seed, point=point)
    n_invalid = int(config.frames - mask.sum())
    for j, w in enumerate(widths):
        f_g = metrics.hit_frequency(estimates["nfm"].theta[mask], config.true_phase, min(half[j], math.pi))
        f_p = metrics.hit_frequency(estimates["ml"].theta[mask], config.true_phase, min(half[j], math.pi))
        row = {
            "window": float(w),
            "half_width": float(half[j]),
            "f_g": f_g,
            "f_p": f_p,
            "delta_e": metrics.efficiency_difference(f_p, f_g),
            "stderr": float(stderr[j]),
            "delta_e_ci_low": float(low[j]),
            "delta_e_ci_high": float(high[j]),
            "nfm_n_invalid": n_invalid,
            "ml_n_invalid": n_invalid,
        }
        row.update(_params_row(config))
        result.rows.append(row)
        result.configs.append(config)
    return result


def efficiency_points(result: SweepResult) -> list[metrics.EfficiencyPoint]:
    """Window-sweep rows as :class:`~phaselab.metrics.EfficiencyPoint` records."""
    return [
        metrics.EfficiencyPoint(r["window"], r["f_g"], r["f_p"], r["delta_e"], r["stderr"])
        for r in result.rows
    ]


def run_phase_sweep(
    config: ExperimentConfig,
    phase_grid: Sequence[float] | None = None,
    estimators: Sequence[str] = ("nfm", "mlu", "ml"),
    replicates: int = metrics.DEFAULT_REPLICATES,
    level: float = metrics.DEFAULT_LEVEL,
    workers: int | None = 1,
    reference: str | None = None,
) -> SweepResult:
    """Dispersions against true phase, with theory baselines.

    The default grid is ``k pi / 16`` for ``k = 0..8``.  Jitter from
    ``config.jitter_sigma`` is injected per frame.  With a ``reference``
    tag, paired ``diff_<tag>`` columns (reference minus tag) are added.
    """
    grid = [k * math.pi / 16 for k in range(9)] if phase_grid is None else list(phase_grid)
    if not grid:
        raise ConfigError("phase grid is empty")
    tags = list(dict.fromkeys(estimators))
    if reference is not None and reference not in tags:
        raise ConfigError(f"reference estimator {reference!r} is not among {tags}")
    formulas = [theory.FormulaId.NFM_ASYM, theory.FormulaId.ML_UNCONSTR_ASYM, theory.FormulaId.CRLB_ASYM]
    if config.visibility == 1.0:
        formulas += [theory.FormulaId.ML_CONSTR_ASYM, theory.FormulaId.SINGLE_PARAM_ASYM]
    columns = ["true_phase", *_dispersion_columns(tags, reference), *(f"theory_{f.value}" for f in formulas)]
    columns += [c for c in PARAM_COLUMNS if c != "true_phase"]
    result = SweepResult(Scenario.PHASE_SWEEP, ("true_phase",), columns, config_echo=config)
    for phase in grid:
        point = config.replace(true_phase=float(phase))
        counts, boot_seed = _simulate_point(Scenario.PHASE_SWEEP, point, workers)
        estimates = estimate_counts(counts, tags)
        mask = _common_valid(estimates)
        _require_valid(mask, f"phase {phase}")
        row = {"true_phase": point.true_phase}
        row.update(_dispersion_block({t: estimates[t].theta[mask] for t in tags}, replicates, level, boot_seed,
                                     reference))
        for t in tags:
            row[f"{t}_n_invalid"] = int(point.frames - mask.sum())
        row.update(_theory_values(formulas, point))
        row.update(_params_row(point))
        result.rows.append(row)
        result.configs.append(point)
    return result


def run_bias_sweep(
    config: ExperimentConfig,
    actual_visibility_grid: Sequence[float],
    phase_grid: Sequence[float],
    expected_v_one: bool = True,
    replicates: int = metrics.DEFAULT_REPLICATES,
    level: float = metrics.DEFAULT_LEVEL,
    workers: int | None = 1,
) -> SweepResult:
    """Circular bias of an estimator that may assume the wrong visibility.

    Data are simulated with each actual visibility; with ``expected_v_one``
    the single-parameter estimator (``V = 1`` assumed) is used, otherwise the
    constrained two-parameter ML, which estimates the visibility.
    """
    vis_grid, phases = list(actual_visibility_grid), list(phase_grid)
    if not vis_grid or not phases:
        raise ConfigError("bias sweep grids must be nonempty")
    tag = "ml1" if expected_v_one else "ml"
    columns = ["actual_visibility", "true_phase", f"{tag}_bias", f"{tag}_ci_low", f"{tag}_ci_high",
               f"{tag}_stderr", f"{tag}_n_invalid",
               *(c for c in PARAM_COLUMNS if c not in ("visibility", "true_phase"))]
    result = SweepResult(Scenario.BIAS_SWEEP, ("actual_visibility", "true_phase"), columns, config_echo=config)
    for v in vis_grid:
        for phase in phases:
            point = config.replace(visibility=float(v), true_phase=float(phase))
            counts, boot_seed = _simulate_point(Scenario.BIAS_SWEEP, point, workers)
            e = ESTIMATORS[tag](counts)
            theta = e.theta[e.valid]
            _require_valid(e.valid, f"bias point V={v}, phase={phase}")
            trig = (np.cos(theta), np.sin(theta))

            def bias(c, s, _phase=point.true_phase):
                return wrap_phase(math.atan2(np.mean(s), np.mean(c)) - _phase)

            b = metrics.circular_bias(theta, point.true_phase)
            dist = metrics.bootstrap_distribution(trig, bias, replicates, boot_seed)
            low, high = metrics.bootstrap_interval(trig, bias, replicates, level, boot_seed, point=b)
            row = {
                "actual_visibility": point.visibility,
                "true_phase": point.true_phase,
                f"{tag}_bias": b,
                f"{tag}_ci_low": low,
                f"{tag}_ci_high": high,
                f"{tag}_stderr": float(dist.std(ddof=1)),
                f"{tag}_n_invalid": int(point.frames - e.valid.sum()),
            }
            row.update(_params_row(point))
            result.rows.append(row)
            result.configs.append(point)
    return result


def calibrate_jitter(
    observed: SweepResult,
    estimator: str = "nfm",
    baseline: SweepResult | None = None,
    replicates: int = metrics.DEFAULT_REPLICATES,
    seed: int = 0,
) -> JitterCalibration:
    """Infer the phase-jitter amplitude from excess dispersion.

    Small independent phase errors add their dispersions, so the jitter
    estimate is ``sqrt(mean_k max(0, observed_k - baseline_k))`` over the
    phase grid.  The baseline is the theory column for ``estimator``
    (``nfm`` or ``mlu``) unless a jitter-free ``baseline`` sweep is given.
    The uncertainty is the bootstrap standard deviation over grid points.
    """
    if observed.scenario is not Scenario.PHASE_SWEEP:
        raise ConfigError("calibrate_jitter needs a phase-sweep result")
    col = f"{estimator}_sigma2"
    if col not in observed.columns:
        raise ConfigError(f"observed result has no column {col}")
    obs = observed.column(col)
    if baseline is not None:
        ref = baseline.column(col)
        if len(ref) != len(obs):
            raise ConfigError("baseline and observed sweeps must share the phase grid")
    else:
        if estimator not in _THEORY_FOR:
            raise ConfigError(f"no theory baseline for estimator {estimator!r}; pass a baseline sweep")
        ref = observed.column(f"theory_{_THEORY_FOR[estimator].value}")
    excess = obs - ref
    if not np.all(np.isfinite(excess)):
        raise metrics.MetricsError("non-finite dispersion or baseline values")
    mean_excess = float(np.mean(np.maximum(excess, 0.0)))
    warning = float(np.mean(excess)) < 0
    if warning:
        log.warning("observed dispersion is below the baseline on average; jitter set to 0")
        return JitterCalibration(0.0, 0.0, True)
    sigma = math.sqrt(mean_excess)
    if len(excess) < 2:
        return JitterCalibration(sigma, math.nan, False)
    dist = metrics.bootstrap_distribution(
        excess, lambda e: math.sqrt(np.mean(np.maximum(e, 0.0))), replicates, seed
    )
    return JitterCalibration(sigma, float(dist.std(ddof=1)), False)


# ---------------------------------------------------------------------------
# configuration files

_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}
REQUIRED_KEYS = ("intensity", "visibility", "true_phase", "frames")
GRID_KEYS = ("grid_intensity", "grid_window", "grid_phase", "grid_visibility")
SEED_ENV = "PHASELAB_SEED"

_BIN_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_number(text: str) -> float:
    """Evaluate a numeric literal that may use ``pi`` and ``+ - * /``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BIN_OPS:
            return _BIN_OPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(text)

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def parse_grid(text: str) -> list[float]:
    """Parse ``a, b, c`` or ``lin:start:stop:count`` or ``log:start:stop:count``."""
    text = text.strip()
    for prefix, fn in (("lin:", np.linspace), ("log:", np.geomspace)):
        if text.startswith(prefix):
            parts = text[len(prefix):].split(":")
            if len(parts) != 3:
                raise ValueError(f"expected {prefix}start:stop:count, got {text!r}")
            start, stop = parse_number(parts[0]), parse_number(parts[1])
            count = int(parts[2])
            if count < 1:
                raise ValueError("grid count must be >= 1")
            return [float(x) for x in fn(start, stop, count)]
    values = [parse_number(p) for p in text.split(",") if p.strip()]
    if not values:
        raise ValueError("empty grid")
    return values


def _coerce(key: str, raw: str):
    if key in ("frames", "pulses_per_frame", "seed"):
        value = int(raw, 0)
        return value
    if key == "sampling_mode":
        return SamplingMode(raw.strip())
    return parse_number(raw)


def load_config(path) -> tuple[ExperimentConfig, dict[str, list[float]]]:
    """Read a ``key = value`` configuration file.

    Returns the experiment configuration and any ``grid_*`` entries.  A
    missing seed falls back to ``$PHASELAB_SEED`` and then to 0.

    Raises
    ------
    ConfigError
        Naming the file and line for unknown keys, duplicate keys, malformed
        or out-of-range values, and naming any missing required key.
    """
    values: dict = {}
    grids: dict[str, list[float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, raw = (s.strip() for s in text.split("=", 1))
            if key in values or key in grids:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                if key in GRID_KEYS:
                    grids[key] = parse_grid(raw)
                elif key in _CONFIG_KEYS:
                    values[key] = _coerce(key, raw)
                else:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {raw!r}") from None
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing required key(s): {', '.join(missing)}")
    if "seed" not in values:
        values["seed"] = seed_from_env()
    try:
        return ExperimentConfig(**values), grids
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def seed_from_env(default: int = 0) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def read_config(path) -> ExperimentConfig:
    return load_config(path)[0]


def _fmt(value) -> str:
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_config(config: ExperimentConfig, path, grids: dict[str, Sequence[float]] | None = None) -> None:
    lines = [f"{f.name} = {_fmt(getattr(config, f.name))}" for f in fields(ExperimentConfig)]
    for key, grid in (grids or {}).items():
        if key not in GRID_KEYS:
            raise ConfigError(f"unknown grid key {key!r}")
        lines.append(f"{key} = {', '.join(_fmt(float(g)) for g in grid)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# result files


def write_results(result: SweepResult, path) -> None:
    """Write sweep rows as CSV; floats use shortest round-trip repr."""
    with open_output(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result.columns)
        for row in result.rows:
            writer.writerow([_fmt(row[c]) for c in result.columns])


def read_results(path, scenario: Scenario | str | None = None) -> SweepResult:
    """Read a CSV written by :func:`write_results` back into a :class:`SweepResult`.

    The scenario is inferred from the first column when not given.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ConfigError(f"{path}:1: empty result file")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields, got {len(raw)}")
            row = {}
            for key, text in zip(header, raw):
                try:
                    row[key] = float(text)
                except ValueError:
                    row[key] = text
            rows.append(row)
    if scenario is None:
        inferred = {
            "intensity": Scenario.INTENSITY_SWEEP,
            "window": Scenario.WINDOW_SWEEP,
            "true_phase": Scenario.PHASE_SWEEP,
            "actual_visibility": Scenario.BIAS_SWEEP,
        }
        if header[0] not in inferred:
            raise ConfigError(f"{path}:1: cannot infer scenario from column {header[0]!r}")
        scenario = inferred[header[0]]
    scenario = Scenario(scenario)
    independent = ("actual_visibility", "true_phase") if scenario is Scenario.BIAS_SWEEP else (header[0],)
    return SweepResult(scenario, independent, list(header), rows)
