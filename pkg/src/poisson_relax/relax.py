"""Differentiable relaxations of Poisson sampling.

Two pathwise relaxations are provided, both reparameterized so a sample
carries its own derivative with respect to the log-rate:

* arrival-time smoothing: cumulate exponential inter-arrival times and sum
  a soft indicator of "arrived before time 1" over them, temperature tau
  scaling the indicator's argument;
* Gumbel-softmax over counts: perturb count logits with Gumbel noise and
  take a tau-tempered softmax, the value being the soft weights' expected
  count.

A score-function estimator with an exponential-moving-average baseline is
included as the non-pathwise alternative, plus forward-only samplers for
two over/under-dispersed generalizations (gamma-mixed rates and a
factorial-tempered count family).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .indicators import SoftIndicator
from .poisson import _lnfact_table, adaptive_upperbound
from .rng import RngStream


@dataclass(frozen=True)
class RelaxedSample:
    """One relaxed draw: its value, its pathwise log-rate derivative, and
    the arrival/category horizon M it was produced with."""

    value: float
    dlog: float
    arrival_count: int


def _check_rates(rates) -> np.ndarray:
    arr = np.ascontiguousarray(rates, dtype=np.float64)
    if arr.size and not np.all(arr > 0):
        raise ValueError("rates must be positive")
    return arr


def eat_rsample_batch(rates, M: int, tau: float, ind: SoftIndicator, rng: RngStream):
    """Arrival-time relaxed draws for a batch of rates.

    Parameters
    ----------
    rates : array of positive floats
        One independent draw is produced per entry.
    M : int
        Number of inter-arrival terms per draw; choose via
        ``adaptive_upperbound`` (or ``eat_support_upperbound`` when the
        smoothed value must see the indicator's full reach past time 1).
    tau : float
        Temperature >= 0.  At 0 the hard threshold is used and the
        derivative is identically 0.
    ind : SoftIndicator
    rng : RngStream

    Returns
    -------
    (values, dlogs) : pair of float arrays shaped like ``rates``.
    """
    arr = _check_rates(rates)
    M = int(M)
    if M < 1:
        raise ValueError("M must be >= 1")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    key, start = rng.reserve(arr.size * M)
    return _backend.eat_batch(arr, M, tau, ind.code, key, start)


def eat_rsample(
    rate: float, M: int, tau: float, ind: SoftIndicator, rng: RngStream
) -> RelaxedSample:
    """Single arrival-time relaxed draw; see ``eat_rsample_batch``."""
    values, dlogs = eat_rsample_batch(np.array([rate]), M, tau, ind, rng)
    return RelaxedSample(float(values[0]), float(dlogs[0]), int(M))


def eat_support_upperbound(
    rate: float, tau: float, ind: SoftIndicator, tail_mass: float = 1e-9
) -> int:
    """Arrival horizon that covers the smoothed indicator's reach.

    ``adaptive_upperbound`` truncates where the *count* distribution's tail
    falls below alpha, which is the right horizon for hard counting but
    clips smooth indicators that still respond past arrival time 1.  This
    bound extends the time horizon to T where the expected smoothed
    contribution beyond T drops below ``tail_mass``: T = 1 + tau for the
    compact cubic, T = 1 + tau * ln(rate * tau / tail_mass) for the
    sigmoid's exponential tail, T = 1 for hard counting, then sizes M to
    hold all arrivals in [0, T] up to the same tail mass.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if tau == 0 or ind.kind == "hard":
        horizon = 1.0
    elif ind.kind == "cubic":
        horizon = 1.0 + tau
    else:
        u = math.log(rate * tau / tail_mass)
        horizon = 1.0 + tau * min(45.0, max(0.0, u))
    return adaptive_upperbound(rate * horizon, tail_mass)


def gsm_rsample_batch(rates, M: int, tau: float, rng: RngStream):
    """Gumbel-softmax relaxed draws over the counts {0, ..., M-1}.

    Returns (values, dlogs) arrays shaped like ``rates``.  Note the M
    categories encode counts 0..M-1, so representing counts up to an
    upperbound B needs M = B + 1.  At tau = 0 each draw is the hard argmax
    category with derivative 0.
    """
    arr = _check_rates(rates)
    M = int(M)
    if M < 1:
        raise ValueError("M must be >= 1")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    lnfact = _lnfact_table(M)[:M]
    key, start = rng.reserve(arr.size * M)
    return _backend.gsm_batch(arr, lnfact, M, tau, key, start)


def gsm_rsample(rate: float, M: int, tau: float, rng: RngStream) -> RelaxedSample:
    """Single Gumbel-softmax relaxed draw; see ``gsm_rsample_batch``."""
    values, dlogs = gsm_rsample_batch(np.array([rate]), M, tau, rng)
    return RelaxedSample(float(values[0]), float(dlogs[0]), int(M))


def gsm_rsample_from_logits(logits, tau: float, n: int, rng: RngStream):
    """n Gumbel-softmax draws sharing one unnormalized logit vector.

    The softmax never needs the normalizing constant, so any unnormalized
    count logits work, e.g. from ``com_poisson_logits``.  Returns
    (values, dlogs) of length n.
    """
    arr = np.ascontiguousarray(logits, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("logits must be a non-empty 1-d array")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    n = int(n)
    if n < 0:
        raise ValueError("n must be >= 0")
    key, start = rng.reserve(n * arr.size)
    return _backend.gsm_shared_logits_batch(arr, n, tau, key, start)


def score_logq_grad(z, rate):
    """Derivative of the Poisson log-likelihood w.r.t. the log-rate: z - rate."""
    rarr = np.asarray(rate, dtype=np.float64)
    if rarr.size and not np.all(rarr > 0):
        raise ValueError("rate must be positive")
    out = np.asarray(z, dtype=np.float64) - rarr
    if np.isscalar(z) and np.isscalar(rate):
        return float(out)
    return out


@dataclass
class EmaBaseline:
    """Exponential-moving-average reward baseline.

    ``update`` folds a batch-mean loss in as
    value <- (1 - momentum) * value + momentum * batch_mean, i.e. momentum
    weights the incoming batch.
    """

    value: float = 0.0
    momentum: float = 0.9

    def update(self, batch_mean: float) -> None:
        self.value = (1.0 - self.momentum) * self.value + self.momentum * float(
            batch_mean
        )


def score_estimate_grad(loss_per_sample, z_samples, rate: float, baseline: EmaBaseline):
    """Score-function gradient estimate with a lagged EMA baseline.

    Computes mean((loss_i - b) * (z_i - rate)) using the baseline value b
    as it stood *before* this call, then folds the batch-mean loss into the
    baseline.  Raises on an empty batch.
    """
    losses = np.asarray(loss_per_sample, dtype=np.float64).ravel()
    z = np.asarray(z_samples, dtype=np.float64).ravel()
    if losses.size == 0:
        raise ValueError("need at least one sample")
    if losses.shape != z.shape:
        raise ValueError("loss_per_sample and z_samples must match in length")
    estimate = float(np.mean((losses - baseline.value) * (z - rate)))
    baseline.update(float(losses.mean()))
    return estimate


def nb_two_step_sample_batch(
    r: float, mu: float, tau: float, ind: SoftIndicator, n: int, rng: RngStream
):
    """n forward draws from the gamma-mixed (negative binomial) relaxation.

    Each draw mixes rate ~ Gamma(shape=r, rate=mu/(1-mu)), so the hard
    count has mean r(1-mu)/mu and variance r(1-mu)/mu^2 (dispersion 1/mu),
    then smooths with the arrival-time relaxation.  Forward sampling only;
    no derivative is defined here.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    key, start = rng.reserve(n * _backend.GAMMA_STRIDE)
    lam = _backend.gamma_batch(r, n, key, start) * ((1.0 - mu) / mu)
    # A zero gamma draw (possible by underflow at small shape) degenerates
    # to rate 0; nudge so the arrival kernel's division stays defined.
    lam = np.maximum(lam, 1e-300)
    M = eat_support_upperbound(float(lam.max()), tau, ind, 1e-9)
    key2, start2 = rng.reserve(n * M)
    values, _ = _backend.eat_batch(lam, M, tau, ind.code, key2, start2)
    return values


def nb_two_step_sample(
    r: float, mu: float, tau: float, ind: SoftIndicator, rng: RngStream
) -> float:
    """Single gamma-mixed relaxed draw; see ``nb_two_step_sample_batch``."""
    return float(nb_two_step_sample_batch(r, mu, tau, ind, 1, rng)[0])


def com_poisson_logits(rate: float, nu: float, M: int) -> np.ndarray:
    """Unnormalized count logits m*ln(rate) - nu*ln(m!) for m = 0..M-1.

    nu = 1 recovers the Poisson logits; nu > 1 thins the tails
    (under-dispersed), nu < 1 fattens them.  Feed to
    ``gsm_rsample_from_logits``; the softmax's normalization invariance
    makes the partition function unnecessary.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    if not nu > 0:
        raise ValueError("nu must be positive")
    M = int(M)
    if M < 1:
        raise ValueError("M must be >= 1")
    m = np.arange(M, dtype=np.float64)
    return m * math.log(rate) - nu * _lnfact_table(M)[:M]
