"""Vectorized numpy implementations of the hot sampling kernels.

Counter layout is part of each kernel's contract and must match the numba
backend exactly: kernels never draw "the next" uniform, they compute the
counter index of every draw from (row, slot).  Work is chunked over rows to
bound memory; chunk size cannot affect results because of the indexing.
"""

from __future__ import annotations

import numpy as np

from .rng import raw_block, to_unit_oc, to_unit_oo

KIND_HARD = 0
KIND_SIGMOID = 1
KIND_CUBIC = 2

# About 4M doubles (32 MB) per temporary.
_CHUNK_ELEMS = 1 << 22

GAMMA_MAX_TRIES = 64
GAMMA_STRIDE = 3 * GAMMA_MAX_TRIES + 1


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _indicator(kind: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indicator value and derivative, elementwise."""
    if kind == KIND_SIGMOID:
        s = _sigmoid(x)
        return s, s * (1.0 - s)
    if kind == KIND_CUBIC:
        w = np.clip((x + 1.0) * 0.5, 0.0, 1.0)
        return (3.0 - 2.0 * w) * w * w, 3.0 * w * (1.0 - w)
    f = (x > 0).astype(np.float64)
    return f, np.zeros_like(x)


def _row_chunks(n: int, m: int):
    step = max(1, _CHUNK_ELEMS // max(m, 1))
    for lo in range(0, n, step):
        yield lo, min(lo + step, n)


def eat_batch(rates, M, tau, kind, key, start):
    """Relaxed arrival-count draws for each rate.

    Row i consumes counter slots [start + i*M, start + (i+1)*M).  Returns
    (values, dlogs) where dlogs is the pathwise derivative of value with
    respect to log(rate); the hard path (kind or tau zero) has dlog = 0.
    """
    rates = np.asarray(rates, dtype=np.float64)
    n = rates.shape[0]
    values = np.empty(n)
    dlogs = np.zeros(n)
    hard = kind == KIND_HARD or tau == 0.0
    for lo, hi in _row_chunks(n, M):
        rows = hi - lo
        idx0 = start + lo * M
        bits = raw_block(key, idx0, rows * M).reshape(rows, M)
        u = to_unit_oc(bits)
        t = np.cumsum(-np.log(u) / rates[lo:hi, None], axis=1)
        if hard:
            values[lo:hi] = (t < 1.0).sum(axis=1)
        else:
            f, fp = _indicator(kind, (1.0 - t) / tau)
            values[lo:hi] = f.sum(axis=1)
            dlogs[lo:hi] = (fp * t).sum(axis=1) / tau
    return values, dlogs


def hard_count_batch(rates, M, key, start):
    """Exact Poisson counts (arrivals before time 1), truncated at M."""
    rates = np.asarray(rates, dtype=np.float64)
    n = rates.shape[0]
    counts = np.empty(n, dtype=np.int64)
    for lo, hi in _row_chunks(n, M):
        rows = hi - lo
        bits = raw_block(key, start + lo * M, rows * M).reshape(rows, M)
        t = np.cumsum(-np.log(to_unit_oc(bits)) / rates[lo:hi, None], axis=1)
        counts[lo:hi] = (t < 1.0).sum(axis=1)
    return counts


def _gsm_core(logits, tau, bits):
    """Soft-argmax draws given per-row logits and raw Gumbel bits."""
    rows, M = logits.shape
    m = np.arange(M, dtype=np.float64)
    g = -np.log(-np.log(to_unit_oo(bits)))
    a = logits + g
    if tau == 0.0:
        return np.argmax(a, axis=1).astype(np.float64), np.zeros(rows)
    a /= tau
    a -= a.max(axis=1, keepdims=True)
    w = np.exp(a)
    w /= w.sum(axis=1, keepdims=True)
    value = w @ m
    second = w @ (m * m)
    return value, (second - value * value) / tau


def gsm_batch(rates, lnfact, M, tau, key, start):
    """Gumbel-softmax relaxed draws over categories 0..M-1 per rate.

    Row i consumes counter slots [start + i*M, start + (i+1)*M).  ``lnfact``
    is the shared log-factorial table of length M, built by the caller so
    both backends use bit-identical logits.
    """
    rates = np.asarray(rates, dtype=np.float64)
    n = rates.shape[0]
    values = np.empty(n)
    dlogs = np.empty(n)
    m = np.arange(M, dtype=np.float64)
    for lo, hi in _row_chunks(n, M):
        rows = hi - lo
        bits = raw_block(key, start + lo * M, rows * M).reshape(rows, M)
        logits = m * np.log(rates[lo:hi, None]) - lnfact[None, :]
        values[lo:hi], dlogs[lo:hi] = _gsm_core(logits, tau, bits)
    return values, dlogs


def gsm_shared_logits_batch(logits, n, tau, key, start):
    """n Gumbel-softmax draws from one fixed logit vector."""
    logits = np.asarray(logits, dtype=np.float64)
    M = logits.shape[0]
    values = np.empty(n)
    dlogs = np.empty(n)
    for lo, hi in _row_chunks(n, M):
        rows = hi - lo
        bits = raw_block(key, start + lo * M, rows * M).reshape(rows, M)
        values[lo:hi], dlogs[lo:hi] = _gsm_core(
            np.broadcast_to(logits, (rows, M)).copy(), tau, bits
        )
    return values, dlogs


def gamma_batch(shape, n, key, start):
    """n standard Gamma(shape, rate=1) draws via squeeze-free rejection.

    Marsaglia-Tsang for shape >= 1, with the usual shape+1 boost below 1.
    Draw i owns counter slots [start + i*STRIDE, start + (i+1)*STRIDE):
    3 slots per proposal (two for the normal, one for the accept test) and
    the final slot for the boost uniform.  Rejection beyond MAX_TRIES has
    probability ~1e-90 per draw and raises rather than recycling slots.
    """
    if shape <= 0:
        raise ValueError("shape must be positive")
    a = shape if shape >= 1.0 else shape + 1.0
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)

    out = np.empty(n)
    pending = np.arange(n)
    for t in range(GAMMA_MAX_TRIES):
        if pending.size == 0:
            break
        base = start + pending * GAMMA_STRIDE + 3 * t
        u1 = to_unit_oo(raw_block_at(key, base))
        u2 = to_unit_oo(raw_block_at(key, base + 1))
        u3 = to_unit_oc(raw_block_at(key, base + 2))
        x = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        v = 1.0 + c * x
        v = v * v * v
        ok = v > 0.0
        lv = np.log(np.where(ok, v, 1.0))
        accept = ok & (np.log(u3) < 0.5 * x * x + d - d * v + d * lv)
        out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    if pending.size:
        raise RuntimeError("gamma rejection sampler exceeded its try budget")
    if shape < 1.0:
        boost = to_unit_oc(
            raw_block_at(key, start + np.arange(n) * GAMMA_STRIDE + GAMMA_STRIDE - 1)
        )
        out *= boost ** (1.0 / shape)
    return out


def raw_block_at(key, indices):
    """Raw outputs at arbitrary counter indices (uint64 vector)."""
    idx = np.asarray(indices, dtype=np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + idx * np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z
