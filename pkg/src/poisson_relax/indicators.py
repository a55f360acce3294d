"""Smooth step functions used to soften the arrival-time threshold.

Three kinds: a hard 0/1 threshold, the logistic sigmoid, and a cubic
smoothstep with compact support [-1, 1].  Values lie in [0, 1] and are
monotone non-decreasing; derivatives exist everywhere for the two smooth
kinds (the cubic's derivative is 0 outside its support and continuous at
the edges).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels_numpy import KIND_CUBIC, KIND_HARD, KIND_SIGMOID

_CODES = {"hard": KIND_HARD, "sigmoid": KIND_SIGMOID, "cubic": KIND_CUBIC}


@dataclass(frozen=True)
class SoftIndicator:
    """A step-function family member, identified by kind.

    kind is one of "hard", "sigmoid", "cubic".
    """

    kind: str

    def __post_init__(self):
        if self.kind not in _CODES:
            raise ValueError(
                f"unknown indicator kind {self.kind!r}; "
                f"expected one of {sorted(_CODES)}"
            )

    @property
    def code(self) -> int:
        """Integer tag understood by the sampling kernels."""
        return _CODES[self.kind]


HARD = SoftIndicator("hard")
SIGMOID = SoftIndicator("sigmoid")
CUBIC = SoftIndicator("cubic")


def indicator_eval(ind: SoftIndicator, u):
    """Evaluate an indicator and its derivative at u.

    Parameters
    ----------
    ind : SoftIndicator
    u : float or ndarray

    Returns
    -------
    (value, derivative) with the shape of u.  The hard kind reports
    derivative 0 everywhere (the distributional point mass at 0 is not
    represented).
    """
    arr = np.asarray(u, dtype=np.float64)
    if ind.kind == "sigmoid":
        # Evaluate via exp of the negative magnitude so neither branch
        # overflows.
        pos = arr >= 0
        e = np.exp(np.where(pos, -arr, arr))
        val = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
        der = val * (1.0 - val)
    elif ind.kind == "cubic":
        w = np.clip((arr + 1.0) * 0.5, 0.0, 1.0)
        val = (3.0 - 2.0 * w) * w * w
        der = 3.0 * w * (1.0 - w)
    else:
        val = (arr > 0).astype(np.float64)
        der = np.zeros_like(val)
    if np.isscalar(u):
        return float(val), float(der)
    return val, der
