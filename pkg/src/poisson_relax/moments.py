"""Analytic moment factors of the arrival-time relaxation.

The smoothed arrival sum is a shot-noise functional of a Poisson process,
so Campbell's theorem gives its mean and variance in closed form: with
f the indicator and u = (1 - t)/tau,

    E[z]   = rate * c(tau),  c(tau) = tau * integral of f   over (-inf, 1/tau]
    Var[z] = rate * v(tau),  v(tau) = tau * integral of f^2 over (-inf, 1/tau]

Both factors are evaluated in closed form for the sigmoid and cubic
indicators and by adaptive quadrature for cross-checking.  f^2 <= f gives
v <= c always (the relaxation can only shrink the Fano factor below 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .indicators import SoftIndicator, indicator_eval


@dataclass(frozen=True)
class MomentFactors:
    """Mean factor c, variance factor v, and their ratio fano = v/c."""

    c: float
    v: float
    fano: float


def _factors(c: float, v: float) -> MomentFactors:
    return MomentFactors(c=c, v=v, fano=v / c)


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError("tau must be positive")


def moment_factors_sigmoid(tau: float) -> MomentFactors:
    """Closed-form factors for the sigmoid indicator.

    c = tau * softplus(1/tau) and v = tau * (softplus(1/tau) - sigma(1/tau)),
    with softplus(x) computed as x + log1p(exp(-x)) so 1/tau never
    overflows the exponential.
    """
    _check_tau(tau)
    x = 1.0 / tau
    softplus = x + math.log1p(math.exp(-x))
    sig = 1.0 / (1.0 + math.exp(-x))
    return _factors(tau * softplus, tau * (softplus - sig))


def moment_factors_cubic(tau: float) -> MomentFactors:
    """Closed-form factors for the cubic smoothstep indicator.

    For tau <= 1 the smoothing window lies inside the unit interval and
    symmetry cancels the mean shift: c = 1 exactly, v = 1 - 9*tau/35.
    For tau > 1 the window is clipped at arrival time 0; with
    beta = (1 + tau)/(2*tau),

        c = tau * beta^3 * (2 - beta)
        v = tau * (18*beta^5/5 - 4*beta^6 + 8*beta^7/7)

    continuous with the small-tau branch at tau = 1.
    """
    _check_tau(tau)
    if tau <= 1.0:
        return _factors(1.0, 1.0 - 9.0 * tau / 35.0)
    beta = (1.0 + tau) / (2.0 * tau)
    c = tau * beta**3 * (2.0 - beta)
    v = tau * (18.0 * beta**5 / 5.0 - 4.0 * beta**6 + 8.0 * beta**7 / 7.0)
    return _factors(c, v)


def moment_factors(ind: SoftIndicator, tau: float) -> MomentFactors:
    """Factors for any indicator kind; tau = 0 is the exact hard limit."""
    if tau == 0 or ind.kind == "hard":
        return _factors(1.0, 1.0)
    if ind.kind == "sigmoid":
        return moment_factors_sigmoid(tau)
    return moment_factors_cubic(tau)


_MAX_DEPTH = 60


def _adaptive_simpson(f, a, b, tol):
    # Standard recursive Simpson with Richardson correction; the absolute
    # error target is split across subintervals.
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        if abs(err) <= 15.0 * tol:
            return left + right + err / 15.0
        if depth >= _MAX_DEPTH:
            raise RuntimeError(
                "quadrature failed to converge within the refinement budget"
            )
        return recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) + recurse(
            m, b, fm, frm, fb, right, 0.5 * tol, depth + 1
        )

    return recurse(a, b, fa, fm, fb, whole, tol, 0)


def moment_factors_quadrature(
    ind: SoftIndicator, tau: float, tol: float = 1e-10
) -> MomentFactors:
    """Factors by numeric integration of f and f^2, for cross-checks.

    The cubic integrand is integrated only over its compact support plus
    the flat region where f = 1; the sigmoid's lower limit is cut at
    -40 - 1/tau, where f is below 1e-17.  Raises RuntimeError if the
    adaptive refinement budget is exhausted before reaching ``tol``.
    """
    _check_tau(tau)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if ind.kind == "hard":
        return _factors(1.0, 1.0)
    hi = 1.0 / tau

    def f(u):
        return indicator_eval(ind, u)[0]

    def f2(u):
        return indicator_eval(ind, u)[0] ** 2

    if ind.kind == "cubic":
        top = min(1.0, hi)
        flat = max(0.0, hi - 1.0)
        int_f = _adaptive_simpson(f, -1.0, top, tol) + flat
        int_f2 = _adaptive_simpson(f2, -1.0, top, tol) + flat
    else:
        lo = -40.0 - hi
        int_f = _adaptive_simpson(f, lo, hi, tol)
        int_f2 = _adaptive_simpson(f2, lo, hi, tol)
    return _factors(tau * int_f, tau * int_f2)
