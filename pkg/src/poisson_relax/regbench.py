"""Scalar gradient-estimation benchmark.

Estimate d/d(rate) of E[f(z)] for a family of scalar test functions with
z Poisson, comparing each stochastic estimator against a truncated-series
exact gradient, with mean-absolute-error sweeps over temperature and an
optimal-temperature search.

The differentiation variable here is the rate itself (not its log), so
pathwise chain terms convert the samplers' log-rate derivative via
dz/d(rate) = dlog / rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .indicators import CUBIC, SIGMOID
from .poisson import adaptive_upperbound, poisson_pmf_log, sample_poisson_exact_batch
from .pvae import METHODS
from .relax import eat_rsample_batch, gsm_rsample_batch
from .rng import RngStream, stable_child

# Horizon tail mass for the benchmark's relaxed draws; matches the 1e-3
# convention used for the adaptive event-count bound elsewhere in the library.
BENCH_TAIL = 1e-3

# Desk-scale temperature grid: 12 log-spaced points on [0.1, 1].
DEFAULT_TAU_GRID = tuple(np.logspace(-1.0, 0.0, 12))

FUNCTION_IDS = (
    "z",
    "sqrt_z",
    "z_sq",
    "z15_minus_2z",
    "cos_sq",
    "sigmoid_z",
    "zsq_over_lambda",
)

_EAT_IND = {"eat-sigmoid": SIGMOID, "eat-cubic": CUBIC}


@dataclass(frozen=True)
class TestFunction:
    """A test function f with the pieces the estimators need.

    ``value`` and ``deriv`` are defined on non-negative reals because
    relaxed draws are real-valued; functions with a rate in their body
    close over it (``bound_rate`` records which) and expose the explicit
    partial d f / d rate separately.
    """

    id: str
    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    dfdrate: Callable[[np.ndarray], np.ndarray] | None = None
    bound_rate: float | None = None


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    e = np.exp(np.where(pos, -z, z))
    out[...] = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
    return out


def make_test_function(fid: str, rate: float | None = None) -> TestFunction:
    """Build a test function; ``rate`` is required for rate-dependent ids.

    Square roots clamp at 0: sqrt and z^1.5 take derivative 0 and 1.5*0
    respectively there rather than diverging, since relaxed draws can sit
    exactly at 0.
    """
    if fid == "z":
        return TestFunction(fid, lambda z: z, lambda z: np.ones_like(z))
    if fid == "sqrt_z":
        return TestFunction(
            fid,
            lambda z: np.sqrt(np.maximum(z, 0.0)),
            lambda z: np.where(z > 0, 0.5 / np.sqrt(np.maximum(z, 1e-300)), 0.0),
        )
    if fid == "z_sq":
        return TestFunction(fid, lambda z: z * z, lambda z: 2.0 * z)
    if fid == "z15_minus_2z":
        return TestFunction(
            fid,
            lambda z: np.maximum(z, 0.0) ** 1.5 - 2.0 * z,
            lambda z: 1.5 * np.sqrt(np.maximum(z, 0.0)) - 2.0,
        )
    if fid == "cos_sq":
        return TestFunction(fid, lambda z: np.cos(z) ** 2, lambda z: -np.sin(2.0 * z))
    if fid == "sigmoid_z":
        return TestFunction(
            fid, _sigmoid, lambda z: _sigmoid(z) * (1.0 - _sigmoid(z))
        )
    if fid == "zsq_over_lambda":
        if rate is None or not rate > 0:
            raise ValueError("zsq_over_lambda needs a positive rate to close over")
        r = float(rate)
        return TestFunction(
            fid,
            lambda z: z * z / r,
            lambda z: 2.0 * z / r,
            dfdrate=lambda z: -(z * z) / (r * r),
            bound_rate=r,
        )
    raise ValueError(f"unknown test function {fid!r}; expected one of {FUNCTION_IDS}")


def _check_binding(f: TestFunction, rate: float) -> None:
    if f.bound_rate is not None and f.bound_rate != rate:
        raise ValueError(
            f"test function {f.id!r} is bound to rate {f.bound_rate}, "
            f"but was evaluated at rate {rate}"
        )


def exact_scalar_grad(
    f: TestFunction, rate: float, distribution_only: bool = False
) -> float:
    """Truncated-series gradient of E[f(z)] w.r.t. the rate.

    Sums f(z) * p(z) * (z/rate - 1) for z = 0..floor(rate + 10*sqrt(rate))
    + 20.  For rate-dependent functions the explicit partial E[df/drate]
    is added (total derivative); ``distribution_only`` drops it to
    differentiate the distribution alone.  The 10-sigma horizon leaves a
    tail below 1e-20 relative for any desk-scale rate, so doubling the
    truncation moves the result by well under 1e-8.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    _check_binding(f, rate)
    top = int(math.floor(rate + 10.0 * math.sqrt(rate))) + 20
    z = np.arange(top + 1, dtype=np.float64)
    p = np.exp(poisson_pmf_log(z.astype(np.int64), rate))
    grad = float(np.sum(f.value(z) * p * (z / rate - 1.0)))
    if f.dfdrate is not None and not distribution_only:
        grad += float(np.sum(p * f.dfdrate(z)))
    return grad


def estimate_scalar_grad(
    f: TestFunction,
    rate: float,
    method: str,
    tau: float,
    n_mc: int,
    rng: RngStream,
    distribution_only: bool = False,
) -> float:
    """Monte Carlo gradient estimate of E[f(z)] w.r.t. the rate.

    Pathwise methods average f'(z_relaxed) * dlog / rate; the score method
    averages f(z) * (z/rate - 1) over exact draws; "exact" delegates to
    the truncated series and ignores tau/n_mc/rng.  Rate-dependent
    functions add the sampled mean of df/drate unless
    ``distribution_only``.  At tau = 0 pathwise derivatives vanish, so
    only that explicit partial survives.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "exact":
        return exact_scalar_grad(f, rate, distribution_only)
    if not rate > 0:
        raise ValueError("rate must be positive")
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    _check_binding(f, rate)
    rates = np.full(int(n_mc), float(rate))
    if method == "score":
        z = sample_poisson_exact_batch(rates, rng).astype(np.float64)
        per_draw = f.value(z) * (z / rate - 1.0)
    else:
        M = adaptive_upperbound(rate, BENCH_TAIL)
        if method == "gsm":
            z, dl = gsm_rsample_batch(rates, M + 1, tau, rng)
        else:
            z, dl = eat_rsample_batch(rates, M, tau, _EAT_IND[method], rng)
        per_draw = f.deriv(z) * dl / rate
    if f.dfdrate is not None and not distribution_only:
        per_draw = per_draw + f.dfdrate(z)
    return float(per_draw.mean())


@dataclass(frozen=True)
class MaeRow:
    """Mean absolute error of one estimator cell against the exact gradient."""

    function: str
    method: str
    rate: float
    tau: float
    mae: float
    se_mae: float
    exact_grad: float
    n_mc: int
    n_repeats: int


def mae_sweep(
    fid: str,
    rates,
    taus,
    methods,
    n_mc: int = 100,
    n_repeats: int = 20,
    seed: int = 0,
) -> list[MaeRow]:
    """MAE of repeated independent estimates per (method, rate, tau) cell.

    Each repeat runs ``estimate_scalar_grad`` with ``n_mc`` draws on its
    own sub-stream of ``seed``; the cell reports the mean and standard
    error of the absolute errors.  Sub-streams are keyed by the cell's
    own coordinates, so each cell's numbers are deterministic per seed
    and independent of grid order.
    """
    rates = [float(r) for r in rates]
    taus = [float(t) for t in taus]
    methods = list(methods)
    if not rates or not taus or not methods:
        raise ValueError("rates, taus, and methods must be non-empty")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    master = RngStream(seed, stream=505)
    rows = []
    for method in methods:
        for rate in rates:
            f = make_test_function(fid, rate)
            exact = exact_scalar_grad(f, rate)
            for tau in taus:
                cell_stream = master.spawn(stable_child(fid, method, rate, tau))
                errs = np.empty(n_repeats)
                for j in range(n_repeats):
                    est = estimate_scalar_grad(
                        f, rate, method, tau, n_mc, cell_stream.spawn(j)
                    )
                    errs[j] = abs(est - exact)
                se = float(errs.std(ddof=1) / math.sqrt(n_repeats)) if n_repeats > 1 else 0.0
                rows.append(
                    MaeRow(
                        function=fid,
                        method=method,
                        rate=rate,
                        tau=tau,
                        mae=float(errs.mean()),
                        se_mae=se,
                        exact_grad=exact,
                        n_mc=int(n_mc),
                        n_repeats=int(n_repeats),
                    )
                )
    return rows


def optimal_tau(
    fid: str,
    rate: float,
    method: str,
    tau_grid=DEFAULT_TAU_GRID,
    n_mc: int = 100,
    n_repeats: int = 20,
    seed: int = 0,
):
    """Grid-minimizing temperature and its MAE.

    The grid is scanned in ascending order and exact MAE ties keep the
    first hit, so ties resolve toward the smaller temperature.
    """
    grid = sorted(float(t) for t in tau_grid)
    if not grid:
        raise ValueError("tau_grid must be non-empty")
    rows = mae_sweep(fid, [rate], grid, [method], n_mc, n_repeats, seed)
    maes = np.array([row.mae for row in rows])
    best = int(np.argmin(maes))
    return grid[best], float(maes[best])
