"""Closed-form and quadrature moment factors of the relaxed samplers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poisson_relax import (
    CUBIC,
    HARD,
    SIGMOID,
    moment_factors,
    moment_factors_cubic,
    moment_factors_quadrature,
    moment_factors_sigmoid,
)


def _sigmoid_reference(tau: float):
    # independent derivation: c = tau*softplus(1/tau), v = c - tau*sigmoid(1/tau)
    x = 1.0 / tau
    softplus = math.log1p(math.exp(-abs(x))) + max(x, 0.0)
    sig = 1.0 / (1.0 + math.exp(-x))
    c = tau * softplus
    v = c - tau * sig
    return c, v


def test_sigmoid_closed_form_matches_reference():
    for tau in (0.05, 0.1, 0.5, 1.0, 2.0, 10.0):
        c_ref, v_ref = _sigmoid_reference(tau)
        mf = moment_factors_sigmoid(tau)
        assert mf.c == pytest.approx(c_ref, rel=1e-12)
        assert mf.v == pytest.approx(v_ref, rel=1e-12)
        assert mf.fano == pytest.approx(v_ref / c_ref, rel=1e-12)


def test_two_decimal_table():
    table = {
        ("sigmoid", 0.1): (1.00, 0.90, 0.90),
        ("sigmoid", 0.5): (1.06, 0.62, 0.59),
        ("sigmoid", 1.0): (1.31, 0.58, 0.44),
        ("cubic", 0.1): (1.00, 0.97, 0.97),
        ("cubic", 0.5): (1.00, 0.87, 0.87),
        ("cubic", 1.0): (1.00, 0.74, 0.74),
    }
    for (kind, tau), (c2, v2, f2) in table.items():
        ind = SIGMOID if kind == "sigmoid" else CUBIC
        mf = moment_factors(ind, tau)
        assert round(mf.c, 2) == pytest.approx(c2), (kind, tau)
        assert round(mf.v, 2) == pytest.approx(v2), (kind, tau)
        assert round(mf.fano, 2) == pytest.approx(f2), (kind, tau)


def test_cubic_mean_factor_is_exactly_one_up_to_tau_one():
    for tau in (1e-6, 0.02, 0.3, 0.77, 1.0):
        assert moment_factors_cubic(tau).c == 1.0


def test_cubic_variance_linear_in_tau_below_one():
    for tau in (0.1, 0.5, 1.0):
        assert moment_factors_cubic(tau).v == pytest.approx(1.0 - 9.0 * tau / 35.0, rel=1e-12)


def test_cubic_pinned_above_one():
    mf = moment_factors_cubic(2.0)
    assert mf.c == pytest.approx(1.0546875, rel=1e-12)
    assert mf.v == pytest.approx(0.5898716517857143, rel=1e-10)


def test_cubic_branch_continuity_at_tau_one():
    lo = moment_factors_cubic(1.0 - 1e-9)
    hi = moment_factors_cubic(1.0 + 1e-9)
    at = moment_factors_cubic(1.0)
    assert lo.c == pytest.approx(at.c, abs=1e-6)
    assert hi.c == pytest.approx(at.c, abs=1e-6)
    assert lo.v == pytest.approx(at.v, abs=1e-6)
    assert hi.v == pytest.approx(at.v, abs=1e-6)


def test_hard_and_tau_zero_are_exact():
    assert moment_factors(HARD, 0.7) == moment_factors(HARD, 0.0)
    mf = moment_factors(SIGMOID, 0.0)
    assert (mf.c, mf.v, mf.fano) == (1.0, 1.0, 1.0)


def test_closed_forms_reject_nonpositive_tau():
    with pytest.raises(ValueError):
        moment_factors_sigmoid(0.0)
    with pytest.raises(ValueError):
        moment_factors_cubic(-0.5)


def test_small_tau_does_not_overflow():
    mf = moment_factors_sigmoid(1e-4)
    assert np.isfinite(mf.c) and np.isfinite(mf.v)
    assert mf.c == pytest.approx(1.0, abs=1e-3)


def test_quadrature_matches_closed_form_pinned():
    for ind, tau in ((CUBIC, 0.5), (SIGMOID, 0.1), (SIGMOID, 1.0), (CUBIC, 2.0)):
        a = moment_factors(ind, tau)
        b = moment_factors_quadrature(ind, tau)
        assert a.c == pytest.approx(b.c, abs=1e-8)
        assert a.v == pytest.approx(b.v, abs=1e-8)


def test_quadrature_matches_closed_form_log_grid():
    grid = np.logspace(math.log10(0.01), math.log10(5.0), 25)
    for ind in (SIGMOID, CUBIC):
        for tau in grid:
            a = moment_factors(ind, float(tau))
            b = moment_factors_quadrature(ind, float(tau))
            assert abs(a.c - b.c) < 1e-6, (ind.kind, tau)
            assert abs(a.v - b.v) < 1e-6, (ind.kind, tau)


def test_quadrature_hard_is_exact():
    mf = moment_factors_quadrature(HARD, 0.4)
    assert (mf.c, mf.v) == (1.0, 1.0)


@settings(max_examples=120, deadline=None)
@given(st.floats(1e-3, 50.0))
def test_variance_never_exceeds_mean_factor(tau):
    # f in [0,1] forces f^2 <= f, hence v <= c, hence Fano <= 1
    for ind in (SIGMOID, CUBIC):
        mf = moment_factors(ind, tau)
        assert mf.v <= mf.c + 1e-12
        assert mf.fano == pytest.approx(mf.v / mf.c, rel=1e-12)
        assert mf.c > 0
