"""numba implementations of the hot sampling kernels.

Same counter layout as the numpy backend; see that module's docstring.  The
loops are scalar and allocation-free on the inside, which is what the jit
buys us; keep them boring.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0
_INV52 = 1.0 / 4503599627370496.0

KIND_HARD = 0
KIND_SIGMOID = 1
KIND_CUBIC = 2

GAMMA_MAX_TRIES = 64
GAMMA_STRIDE = 3 * GAMMA_MAX_TRIES + 1


@njit(cache=True, inline="always")
def _raw(key, idx):
    z = key + (idx + U64(1)) * _GOLDEN
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _unit_oc(key, idx):
    return (np.float64(_raw(key, idx) >> U64(11)) + 1.0) * _INV53


@njit(cache=True, inline="always")
def _unit_oo(key, idx):
    # 52 mantissa bits: the 53-bit form rounds the all-ones word to 1.0
    return (np.float64(_raw(key, idx) >> U64(12)) + 0.5) * _INV52


@njit(cache=True, inline="always")
def _ind_value_deriv(kind, x):
    if kind == KIND_SIGMOID:
        if x >= 0.0:
            s = 1.0 / (1.0 + math.exp(-x))
        else:
            e = math.exp(x)
            s = e / (1.0 + e)
        return s, s * (1.0 - s)
    if kind == KIND_CUBIC:
        w = (x + 1.0) * 0.5
        if w <= 0.0:
            return 0.0, 0.0
        if w >= 1.0:
            return 1.0, 0.0
        return (3.0 - 2.0 * w) * w * w, 3.0 * w * (1.0 - w)
    if x > 0.0:
        return 1.0, 0.0
    return 0.0, 0.0


@njit(cache=True)
def eat_batch(rates, M, tau, kind, key, start):
    n = rates.shape[0]
    values = np.empty(n)
    dlogs = np.zeros(n)
    hard = kind == KIND_HARD or tau == 0.0
    for i in range(n):
        lam = rates[i]
        base = start + U64(i) * U64(M)
        t = 0.0
        if hard:
            cnt = 0
            for m in range(M):
                u = _unit_oc(key, base + U64(m))
                t += -math.log(u) / lam
                if t < 1.0:
                    cnt += 1
            values[i] = float(cnt)
        else:
            acc = 0.0
            dacc = 0.0
            for m in range(M):
                u = _unit_oc(key, base + U64(m))
                t += -math.log(u) / lam
                f, fp = _ind_value_deriv(kind, (1.0 - t) / tau)
                acc += f
                dacc += fp * t
            values[i] = acc
            dlogs[i] = dacc / tau
    return values, dlogs


@njit(cache=True)
def hard_count_batch(rates, M, key, start):
    n = rates.shape[0]
    counts = np.empty(n, dtype=np.int64)
    for i in range(n):
        lam = rates[i]
        base = start + U64(i) * U64(M)
        t = 0.0
        cnt = 0
        for m in range(M):
            u = _unit_oc(key, base + U64(m))
            t += -math.log(u) / lam
            if t < 1.0:
                cnt += 1
        counts[i] = cnt
    return counts


@njit(cache=True)
def _gsm_row(scratch, M, tau):
    """Softmax over a filled scratch row of (logit + gumbel) values."""
    if tau == 0.0:
        best = 0
        for m in range(1, M):
            if scratch[m] > scratch[best]:
                best = m
        return float(best), 0.0
    amax = scratch[0] / tau
    for m in range(M):
        scratch[m] /= tau
        if scratch[m] > amax:
            amax = scratch[m]
    s0 = 0.0
    for m in range(M):
        scratch[m] = math.exp(scratch[m] - amax)
        s0 += scratch[m]
    value = 0.0
    second = 0.0
    for m in range(M):
        wm = scratch[m] / s0
        value += wm * m
        second += wm * m * m
    return value, (second - value * value) / tau


@njit(cache=True)
def gsm_batch(rates, lnfact, M, tau, key, start):
    n = rates.shape[0]
    values = np.empty(n)
    dlogs = np.empty(n)
    scratch = np.empty(M)
    for i in range(n):
        loglam = math.log(rates[i])
        base = start + U64(i) * U64(M)
        for m in range(M):
            g = -math.log(-math.log(_unit_oo(key, base + U64(m))))
            scratch[m] = m * loglam - lnfact[m] + g
        values[i], dlogs[i] = _gsm_row(scratch, M, tau)
    return values, dlogs


@njit(cache=True)
def gsm_shared_logits_batch(logits, n, tau, key, start):
    M = logits.shape[0]
    values = np.empty(n)
    dlogs = np.empty(n)
    scratch = np.empty(M)
    for i in range(n):
        base = start + U64(i) * U64(M)
        for m in range(M):
            g = -math.log(-math.log(_unit_oo(key, base + U64(m))))
            scratch[m] = logits[m] + g
        values[i], dlogs[i] = _gsm_row(scratch, M, tau)
    return values, dlogs


@njit(cache=True)
def gamma_batch(shape, n, key, start):
    if shape <= 0.0:
        raise ValueError("shape must be positive")
    a = shape if shape >= 1.0 else shape + 1.0
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(n)
    for i in range(n):
        base = start + U64(i) * U64(GAMMA_STRIDE)
        accepted = False
        for t in range(GAMMA_MAX_TRIES):
            slot = base + U64(3 * t)
            u1 = _unit_oo(key, slot)
            u2 = _unit_oo(key, slot + U64(1))
            u3 = _unit_oc(key, slot + U64(2))
            x = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
            v = 1.0 + c * x
            v = v * v * v
            if v <= 0.0:
                continue
            if math.log(u3) < 0.5 * x * x + d - d * v + d * math.log(v):
                out[i] = d * v
                accepted = True
                break
        if not accepted:
            raise RuntimeError("gamma rejection sampler exceeded its try budget")
    if shape < 1.0:
        for i in range(n):
            ub = _unit_oc(key, start + U64(i) * U64(GAMMA_STRIDE) + U64(GAMMA_STRIDE - 1))
            out[i] *= ub ** (1.0 / shape)
    return out
