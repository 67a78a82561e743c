"""Monte Carlo lab for interferometric phase estimation.

Compares the NFM (Gaussian-noise) phase estimator with Poissonian maximum
likelihood estimators on simulated four-channel photocount data, against
closed-form asymptotics and the Cramer-Rao bound.
"""

__version__ = "0.1.0"

from .model import ConfigError, CountSample, ExperimentConfig, SamplingMode, simulate_counts  # noqa: E402
from .metrics import MetricsError  # noqa: E402

__all__ = [
    "ConfigError",
    "CountSample",
    "ExperimentConfig",
    "MetricsError",
    "SamplingMode",
    "__version__",
    "simulate_counts",
]
