"""Kernel backend selection.

Two interchangeable implementations of the sampling kernels exist: numba
jit loops (default) and a pure-numpy vectorized fallback.  The environment
variable POISSON_RELAX_BACKEND picks one at import time ("numba" or
"numpy"); ``set_backend`` switches at runtime.  Both consume the same
counter-addressed random streams, so a given seed produces equivalent
samples on either path (hard counts agree exactly; smoothed values agree to
floating-point roundoff of the reduction order).
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from . import _kernels_numpy

ENV_VAR = "POISSON_RELAX_BACKEND"

_active_name = None
_active_module = None


def _load(name: str):
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


def set_backend(name: str) -> None:
    global _active_name, _active_module
    _active_module = _load(name)
    _active_name = name


def get_backend_name() -> str:
    if _active_name is None:
        _init_from_env()
    return _active_name


def _get() -> object:
    if _active_module is None:
        _init_from_env()
    return _active_module


def _init_from_env() -> None:
    requested = os.environ.get(ENV_VAR, "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        warnings.warn(
            f"{ENV_VAR}={requested!r} not recognized; using numba", stacklevel=2
        )
        requested = "numba"
    try:
        set_backend(requested)
    except ImportError:
        warnings.warn("numba unavailable; falling back to numpy kernels", stacklevel=2)
        set_backend("numpy")


def _norm(rates) -> np.ndarray:
    return np.ascontiguousarray(rates, dtype=np.float64)


# Thin normalizing wrappers: every kernel takes the key/start pair produced
# by RngStream.reserve, converted here so numba sees uint64 rather than a
# python int that might not fit in int64.


def eat_batch(rates, M, tau, kind, key, start):
    return _get().eat_batch(
        _norm(rates), int(M), float(tau), int(kind), np.uint64(key), np.uint64(start)
    )


def hard_count_batch(rates, M, key, start):
    return _get().hard_count_batch(_norm(rates), int(M), np.uint64(key), np.uint64(start))


def gsm_batch(rates, lnfact, M, tau, key, start):
    return _get().gsm_batch(
        _norm(rates),
        np.ascontiguousarray(lnfact, dtype=np.float64),
        int(M),
        float(tau),
        np.uint64(key),
        np.uint64(start),
    )


def gsm_shared_logits_batch(logits, n, tau, key, start):
    return _get().gsm_shared_logits_batch(
        np.ascontiguousarray(logits, dtype=np.float64),
        int(n),
        float(tau),
        np.uint64(key),
        np.uint64(start),
    )


def gamma_batch(shape, n, key, start):
    return _get().gamma_batch(float(shape), int(n), np.uint64(key), np.uint64(start))


GAMMA_STRIDE = _kernels_numpy.GAMMA_STRIDE
