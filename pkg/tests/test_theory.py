import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phaselab import theory
from phaselab.model import channel_means
from phaselab.theory import FormulaId

N = st.floats(0.5, 1e4)
V = st.floats(0.05, 0.999)
PHI = st.floats(-math.pi, math.pi)


def fisher_by_sum(n, v, phi, h=1e-6):
    """Poisson Fisher information from the channel means by finite differences."""
    m = np.array(channel_means(phi, n, v))
    dm = (np.array(channel_means(phi + h, n, v)) - np.array(channel_means(phi - h, n, v))) / (2 * h)
    keep = m > 0
    return float(np.sum(dm[keep] ** 2 / m[keep]))


class TestClosedForms:
    def test_nfm(self):
        assert theory.nfm_asymptotic(100, 0.5) == pytest.approx(0.04)

    @given(N, V)
    def test_unconstrained_equals_nfm_on_axes(self, n, v):
        assert theory.unconstrained_ml_asymptotic(n, v, 0.0) == pytest.approx(theory.nfm_asymptotic(n, v))
        assert theory.unconstrained_ml_asymptotic(n, v, math.pi / 2) == pytest.approx(theory.nfm_asymptotic(n, v))

    def test_unconstrained_diagonal_at_full_visibility(self):
        assert theory.unconstrained_ml_asymptotic(100, 1.0, math.pi / 4) == pytest.approx(0.005)

    def test_constrained_between_bounds(self):
        for phi in np.linspace(0, math.pi, 9):
            c = theory.constrained_ml_asymptotic(50, phi)
            assert 1 / 100 <= c <= 1.5 / 100 + 1e-15

    def test_crlb_full_visibility(self):
        for phi in (0.0, 0.3, math.pi / 4, math.pi / 2):
            assert theory.crlb_asymptotic(100, 1.0, phi) == pytest.approx(0.005, rel=1e-12)

    def test_crlb_exact_value(self):
        assert theory.crlb_asymptotic(100, 1.0, 0.3) == 0.005

    def test_single_param(self):
        assert theory.single_param_asymptotic(1000) == 0.0005

    @pytest.mark.parametrize("bad", [dict(intensity=0.0), dict(intensity=1.0, visibility=1.5),
                                     dict(intensity=1.0, visibility=0.0)])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            theory.crlb_asymptotic(bad["intensity"], bad.get("visibility", 1.0), 0.0)

    def test_constrained_needs_full_visibility(self):
        with pytest.raises(ValueError):
            theory.evaluate("ml_constr_asym", 10, 0.9, 0.0)


class TestFisher:
    @given(N, V, PHI)
    def test_matches_channel_sum(self, n, v, phi):
        assert theory.fisher_information(n, v, phi) == pytest.approx(fisher_by_sum(n, v, phi), rel=1e-6)

    @given(N, V, PHI)
    def test_crlb_is_inverse_fisher(self, n, v, phi):
        assert theory.crlb_asymptotic(n, v, phi) == pytest.approx(1 / theory.fisher_information(n, v, phi), rel=1e-9)

    @given(N, V, PHI)
    def test_crlb_below_estimators(self, n, v, phi):
        crlb = theory.crlb_asymptotic(n, v, phi)
        assert crlb <= theory.unconstrained_ml_asymptotic(n, v, phi) * (1 + 1e-12)
        assert crlb <= theory.nfm_asymptotic(n, v) * (1 + 1e-12)

    def test_full_visibility_limit(self):
        assert theory.fisher_information(7.0, 1.0, 0.0) == 14.0
        assert theory.fisher_information(7.0, 1 - 1e-9, 0.4) == pytest.approx(14.0, rel=1e-6)

    def test_zero_visibility(self):
        assert theory.fisher_information(7.0, 0.0, 0.4) == 0.0


class TestIntegratedCost:
    @pytest.mark.parametrize(
        "formula,expected",
        [
            (FormulaId.NFM_ASYM, 2 * math.pi),
            (FormulaId.ML_UNCONSTR_ASYM, 1.5 * math.pi),
            (FormulaId.ML_CONSTR_ASYM, 1.25 * math.pi),
            (FormulaId.SINGLE_PARAM_ASYM, math.pi),
            (FormulaId.CRLB_ASYM, math.pi),
        ],
    )
    def test_values(self, formula, expected):
        n = 1000.0
        assert theory.integrated_cost(formula, n) == pytest.approx(expected / n, rel=1e-6)

    def test_rejects_information(self):
        with pytest.raises(ValueError):
            theory.integrated_cost(FormulaId.FISHER_EXACT, 10)


def test_evaluate_dispatch():
    for f in FormulaId:
        v = theory.evaluate(f, 100.0, 1.0, 0.2)
        assert math.isfinite(v) and v > 0
    with pytest.raises(ValueError):
        theory.evaluate("nope", 1.0)
