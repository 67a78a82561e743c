"""Four-channel interferometer model and photocount frame generation.

Each frame is a tuple of counts ``(n3, n4, n5, n6)`` from the two quadrature
pairs of an 8-port homodyne (or 0 / pi/2 Mach-Zehnder) measurement.  Counts
are drawn either directly from Poisson distributions or by accumulating many
weak pulses on click/no-click detectors.

Frames are generated in fixed-size blocks, each block owning an independent
substream derived from ``(seed, stream key, block index)``.  The counts of a
frame therefore depend only on the seed, the stream key and the frame index,
never on how many workers produced them.
"""

from __future__ import annotations

import contextlib
import csv
import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "BLOCK_FRAMES",
    "ChannelMeans",
    "ConfigError",
    "CountSample",
    "ExperimentConfig",
    "SamplingMode",
    "apply_phase_jitter",
    "channel_means",
    "channel_means_array",
    "frame_at",
    "open_output",
    "read_counts_csv",
    "sample_frame",
    "sample_frame_weak_pulses",
    "simulate_counts",
    "substream",
    "wrap_phase",
    "write_counts_csv",
]

BLOCK_FRAMES = 1024
_MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """Invalid experiment parameters or configuration input."""


class SamplingMode(str, enum.Enum):
    DIRECT_POISSON = "direct_poisson"
    WEAK_PULSE = "weak_pulse"


@dataclass(frozen=True)
class ExperimentConfig:
    """Controlled parameters of one simulated experiment.

    Parameters
    ----------
    intensity : float
        Mean photon number per frame in each quadrature pair (``N``).
    visibility : float
        Fringe visibility in ``[0, 1]``.
    true_phase : float
        Phase shift set in the interferometer, radians.
    frames : int
        Number of repeated measurements.
    seed : int
        Unsigned 64-bit master seed.
    jitter_sigma : float
        Standard deviation of the per-frame Gaussian phase fluctuation.
    sampling_mode : SamplingMode
        ``direct_poisson`` or ``weak_pulse``.
    pulses_per_frame : int
        Weak pulses accumulated per frame (``weak_pulse`` mode only).
    """

    intensity: float
    visibility: float
    true_phase: float
    frames: int
    seed: int = 0
    jitter_sigma: float = 0.0
    sampling_mode: SamplingMode = SamplingMode.DIRECT_POISSON
    pulses_per_frame: int = 1

    def __post_init__(self):
        try:
            mode = SamplingMode(self.sampling_mode)
        except ValueError:
            raise ConfigError(
                f"sampling_mode must be one of "
                f"{[m.value for m in SamplingMode]}, got {self.sampling_mode!r}"
            ) from None
        object.__setattr__(self, "sampling_mode", mode)
        for name in ("intensity", "visibility", "true_phase", "jitter_sigma"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ConfigError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name in ("frames", "seed", "pulses_per_frame"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not self.intensity > 0:
            raise ConfigError(f"intensity must be > 0, got {self.intensity}")
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigError(f"visibility must lie in [0, 1], got {self.visibility}")
        if self.jitter_sigma < 0:
            raise ConfigError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if self.frames < 1:
            raise ConfigError(f"frames must be >= 1, got {self.frames}")
        if self.pulses_per_frame < 1:
            raise ConfigError(f"pulses_per_frame must be >= 1, got {self.pulses_per_frame}")
        if not 0 <= self.seed <= _MAX_SEED:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def replace(self, **changes) -> "ExperimentConfig":
        fields = {**self.__dict__, **changes}
        return ExperimentConfig(**fields)


class ChannelMeans(NamedTuple):
    m3: float
    m4: float
    m5: float
    m6: float


class CountSample(NamedTuple):
    n3: int
    n4: int
    n5: int
    n6: int


def wrap_phase(theta):
    """Wrap angles to the half-open interval ``(-pi, pi]``."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _check_channel_params(intensity, visibility):
    if not intensity > 0:
        raise ConfigError(f"intensity must be > 0, got {intensity}")
    if not 0.0 <= visibility <= 1.0:
        raise ConfigError(f"visibility must lie in [0, 1], got {visibility}")


def channel_means(true_phase: float, intensity: float, visibility: float) -> ChannelMeans:
    """Mean counts of the four output channels.

    ``m3, m4 = N/2 (1 +- V cos phase)`` and ``m5, m6 = N/2 (1 +- V sin phase)``.
    """
    _check_channel_params(intensity, visibility)
    half = 0.5 * intensity
    c = visibility * math.cos(true_phase)
    s = visibility * math.sin(true_phase)
    # the max() guards against -0.0 / tiny negatives from rounding at V = 1
    return ChannelMeans(
        max(half * (1.0 + c), 0.0),
        max(half * (1.0 - c), 0.0),
        max(half * (1.0 + s), 0.0),
        max(half * (1.0 - s), 0.0),
    )


def channel_means_array(phases, intensity: float, visibility: float) -> np.ndarray:
    """Vectorised :func:`channel_means`; returns shape ``(len(phases), 4)``."""
    _check_channel_params(intensity, visibility)
    phases = np.asarray(phases, dtype=float)
    half = 0.5 * intensity
    c = visibility * np.cos(phases)
    s = visibility * np.sin(phases)
    means = half * np.stack([1.0 + c, 1.0 - c, 1.0 + s, 1.0 - s], axis=-1)
    return np.clip(means, 0.0, None)


def sample_frame(means: ChannelMeans, rng: np.random.Generator) -> CountSample:
    """Draw one frame of independent Poisson counts."""
    counts = rng.poisson(np.asarray(means, dtype=float))
    return CountSample(*(int(c) for c in counts))


def _click_probability(means):
    return -np.expm1(-np.asarray(means, dtype=float))


def sample_frame_weak_pulses(
    config: ExperimentConfig,
    rng: np.random.Generator,
    means: ChannelMeans | None = None,
    explicit: bool = False,
) -> CountSample:
    """Accumulate one frame from ``pulses_per_frame`` weak pulses.

    Each pulse carries mean ``m_i / pulses_per_frame`` in channel ``i`` and a
    binary detector clicks with probability ``1 - exp(-mu_i)``.  The frame
    count is the number of clicks.  With ``explicit=True`` every pulse is
    drawn individually; otherwise the click total is drawn from the binomial
    law it follows, which is equal in distribution and much cheaper.
    """
    if config.sampling_mode is not SamplingMode.WEAK_PULSE:
        raise ConfigError("sample_frame_weak_pulses requires sampling_mode = weak_pulse")
    if means is None:
        means = channel_means(config.true_phase, config.intensity, config.visibility)
    p = _click_probability(np.asarray(means, dtype=float) / config.pulses_per_frame)
    if explicit:
        clicks = rng.random((config.pulses_per_frame, 4)) < p
        counts = clicks.sum(axis=0)
    else:
        counts = rng.binomial(config.pulses_per_frame, p)
    return CountSample(*(int(c) for c in counts))


def apply_phase_jitter(true_phase: float, jitter_sigma: float, rng: np.random.Generator) -> float:
    """Return ``true_phase`` plus a zero-mean Gaussian offset, wrapped.

    With ``jitter_sigma == 0`` the input is returned untouched and the stream
    is not advanced.
    """
    if jitter_sigma < 0:
        raise ConfigError(f"jitter_sigma must be >= 0, got {jitter_sigma}")
    if jitter_sigma == 0:
        return true_phase
    return wrap_phase(true_phase + rng.normal(0.0, jitter_sigma))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``.

    Built from ``numpy.random.SeedSequence`` with ``key`` as the spawn key,
    so distinct keys give statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def _simulate_block(config: ExperimentConfig, stream_key: tuple, block: int) -> np.ndarray:
    start = block * BLOCK_FRAMES
    size = min(BLOCK_FRAMES, config.frames - start)
    rng = substream(config.seed, *stream_key, block)
    if config.jitter_sigma > 0:
        phases = wrap_phase(config.true_phase + rng.normal(0.0, config.jitter_sigma, size))
        means = channel_means_array(phases, config.intensity, config.visibility)
    else:
        means = np.broadcast_to(
            np.asarray(channel_means(config.true_phase, config.intensity, config.visibility)),
            (size, 4),
        )
    if config.sampling_mode is SamplingMode.WEAK_PULSE:
        p = _click_probability(means / config.pulses_per_frame)
        return rng.binomial(config.pulses_per_frame, p).astype(np.int64)
    return rng.poisson(means).astype(np.int64)


def simulate_counts(
    config: ExperimentConfig,
    stream_key: Sequence[int] = (),
    workers: int | None = 1,
) -> np.ndarray:
    """Simulate ``config.frames`` frames; returns an int64 array ``(frames, 4)``.

    ``stream_key`` distinguishes independent experiments sharing one seed
    (e.g. points of a sweep).  ``workers`` only affects speed: blocks are
    generated from their own substreams and reassembled in order.
    """
    stream_key = tuple(int(k) for k in stream_key)
    n_blocks = -(-config.frames // BLOCK_FRAMES)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or n_blocks == 1:
        blocks = [_simulate_block(config, stream_key, b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda b: _simulate_block(config, stream_key, b), range(n_blocks)))
    return np.concatenate(blocks, axis=0)


def frame_at(config: ExperimentConfig, index: int, stream_key: Sequence[int] = ()) -> CountSample:
    """Regenerate the single frame ``index`` of :func:`simulate_counts`."""
    if not 0 <= index < config.frames:
        raise IndexError(f"frame index {index} outside [0, {config.frames})")
    block, offset = divmod(index, BLOCK_FRAMES)
    counts = _simulate_block(config, tuple(int(k) for k in stream_key), block)
    return CountSample(*(int(c) for c in counts[offset]))


COUNTS_HEADER = ("frame", "n3", "n4", "n5", "n6")


@contextlib.contextmanager
def open_output(target):
    """Yield a text stream for a path, or pass an open stream through."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            yield fh


def write_counts_csv(counts, path) -> None:
    counts = np.asarray(counts)
    with open_output(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COUNTS_HEADER)
        for i, row in enumerate(counts):
            writer.writerow([i, *(int(c) for c in row)])


def read_counts_csv(path) -> np.ndarray:
    """Read a counts file written by :func:`write_counts_csv`.

    Raises
    ------
    ConfigError
        On a wrong header, a malformed row, negative counts, or frame
        indices that are not 0-based and strictly increasing.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COUNTS_HEADER:
            raise ConfigError(f"{path}:1: expected header {','.join(COUNTS_HEADER)}")
        previous = -1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ConfigError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                values = [int(v) for v in row]
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-integer field in {row}") from None
            frame, *counts = values
            if previous < 0 and frame != 0:
                raise ConfigError(f"{path}:{lineno}: frame indices must start at 0")
            if frame <= previous:
                raise ConfigError(f"{path}:{lineno}: frame indices must be strictly increasing")
            if min(counts) < 0:
                raise ConfigError(f"{path}:{lineno}: negative count")
            previous = frame
            rows.append(counts)
    return np.asarray(rows, dtype=np.int64).reshape(-1, 4)
