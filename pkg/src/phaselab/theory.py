"""Closed-form large-intensity dispersions, Fisher information and CRLB."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from scipy import integrate

__all__ = [
    "FormulaId",
    "TheoryPoint",
    "constrained_ml_asymptotic",
    "crlb_asymptotic",
    "evaluate",
    "fisher_information",
    "integrated_cost",
    "nfm_asymptotic",
    "single_param_asymptotic",
    "unconstrained_ml_asymptotic",
]


class FormulaId(str, enum.Enum):
    NFM_ASYM = "nfm_asym"
    ML_UNCONSTR_ASYM = "ml_unconstr_asym"
    ML_CONSTR_ASYM = "ml_constr_asym"
    CRLB_ASYM = "crlb_asym"
    FISHER_EXACT = "fisher_exact"
    SINGLE_PARAM_ASYM = "single_param_asym"


@dataclass(frozen=True)
class TheoryPoint:
    formula_id: FormulaId
    intensity: float
    visibility: float
    phase: float
    value: float


def _check(intensity, visibility=1.0, allow_zero_visibility=False):
    if not intensity > 0:
        raise ValueError(f"intensity must be > 0, got {intensity}")
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility}")
    if visibility == 0 and not allow_zero_visibility:
        raise ValueError("formula diverges at visibility = 0")


def nfm_asymptotic(intensity: float, visibility: float) -> float:
    """Leading-order NFM dispersion ``1 / (V^2 N)``."""
    _check(intensity, visibility)
    return 1.0 / (visibility**2 * intensity)


def unconstrained_ml_asymptotic(intensity: float, visibility: float, phase: float) -> float:
    """Leading-order dispersion of the closed-form Poisson ML phase applied to every sample."""
    _check(intensity, visibility)
    v2 = visibility**2
    return (1.0 - 0.5 * v2 * math.sin(2 * phase) ** 2) / (v2 * intensity)


def constrained_ml_asymptotic(intensity: float, phase: float) -> float:
    """Approximate constrained-ML dispersion at ``V = 1``.

    Midway between the unconstrained and single-parameter results, so only
    an approximation to the true constrained estimator.
    """
    _check(intensity)
    return (1.0 + 0.5 * math.cos(2 * phase) ** 2) / (2.0 * intensity)


def fisher_information(intensity: float, visibility: float, phase: float) -> float:
    """Per-frame Fisher information on the phase of four Poisson channels.

    ``I = N V^2 [sin^2/(1 - V^2 cos^2) + cos^2/(1 - V^2 sin^2)]``, from
    ``sum_i (d m_i / d phase)^2 / m_i``.  At ``V = 1`` the limit ``2N``
    is returned.
    """
    _check(intensity, visibility, allow_zero_visibility=True)
    if visibility == 1.0:
        return 2.0 * intensity
    v2 = visibility**2
    c2 = math.cos(phase) ** 2
    s2 = math.sin(phase) ** 2
    return intensity * v2 * (s2 / (1.0 - v2 * c2) + c2 / (1.0 - v2 * s2))


def crlb_asymptotic(intensity: float, visibility: float, phase: float) -> float:
    """Cramer-Rao bound on the phase for known ``N`` and ``V``.

    At ``V = 1`` and ``phase = k pi/2`` the closed form is 0/0; the
    continuous limit ``1/(2N)`` is used there via the Fisher information.
    """
    _check(intensity, visibility)
    v2 = visibility**2
    s = math.sin(2 * phase) ** 2
    num = v2 - 1.0 - 0.25 * v2 * v2 * s
    den = v2 - 1.0 - 0.5 * v2 * s
    if abs(den) < 1e-12:
        return 1.0 / fisher_information(intensity, visibility, phase)
    return num / den / (v2 * intensity)


def single_param_asymptotic(intensity: float) -> float:
    _check(intensity)
    return 1.0 / (2.0 * intensity)


def evaluate(formula_id, intensity: float, visibility: float = 1.0, phase: float = 0.0) -> float:
    """Evaluate any formula by id; phase-free formulas ignore ``phase``."""
    formula = FormulaId(formula_id)
    if formula is FormulaId.NFM_ASYM:
        return nfm_asymptotic(intensity, visibility)
    if formula is FormulaId.ML_UNCONSTR_ASYM:
        return unconstrained_ml_asymptotic(intensity, visibility, phase)
    if formula is FormulaId.ML_CONSTR_ASYM:
        if visibility != 1.0:
            raise ValueError("ml_constr_asym is defined only at visibility = 1")
        return constrained_ml_asymptotic(intensity, phase)
    if formula is FormulaId.CRLB_ASYM:
        return crlb_asymptotic(intensity, visibility, phase)
    if formula is FormulaId.FISHER_EXACT:
        return fisher_information(intensity, visibility, phase)
    return single_param_asymptotic(intensity)


def integrated_cost(formula_id, intensity: float) -> float:
    """Integral of a ``V = 1`` dispersion formula over a full period of phase.

    Adaptive quadrature over ``[0, 2 pi)`` to relative accuracy well below
    1e-6.
    """
    formula = FormulaId(formula_id)
    if formula is FormulaId.FISHER_EXACT:
        raise ValueError("integrated_cost applies to dispersion formulas only")
    value, _ = integrate.quad(
        lambda t: evaluate(formula, intensity, 1.0, t),
        0.0,
        2.0 * math.pi,
        epsabs=0.0,
        epsrel=1e-10,
        limit=200,
        points=[k * math.pi / 4 for k in range(1, 8)],
    )
    return value
