"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way and avoids
the library's own vectorized paths, so agreement between the two is
evidence rather than tautology.
"""

import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15


def ref_splitmix_output(key: int, index: int) -> int:
    """Output ``index`` of the counter stream with ``key``, in pure ints."""
    z = (key + (index + 1) * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def fd_central(f, x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def fd_gradient(f, u: np.ndarray, h: float) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    g = np.empty_like(u)
    for k in range(u.size):
        up, dn = u.copy(), u.copy()
        up[k] += h
        dn[k] -= h
        g[k] = (f(up) - f(dn)) / (2.0 * h)
    return g


def fd_jacobian(f, u: np.ndarray, h: float) -> np.ndarray:
    """Central finite-difference Jacobian of a vector function of a vector."""
    cols = []
    for k in range(u.size):
        up, dn = u.copy(), u.copy()
        up[k] += h
        dn[k] -= h
        cols.append((f(up) - f(dn)) / (2.0 * h))
    return np.stack(cols, axis=1)


def poisson_pmf_brute(m: int, rate: float) -> float:
    return math.exp(m * math.log(rate) - rate - math.lgamma(m + 1))


def poisson_kl_brute(q: np.ndarray, p: np.ndarray) -> float:
    """KL between factorized Poissons by brute-force summation over counts.

    Sums q ln(q/p) over enough of the support to make truncation error
    irrelevant at test tolerances; used to cross-check the closed form.
    """
    total = 0.0
    for qk, pk in zip(np.atleast_1d(q), np.atleast_1d(p)):
        top = int(qk + 12 * math.sqrt(qk) + 60)
        for z in range(top + 1):
            pz_q = poisson_pmf_brute(z, qk)
            if pz_q < 1e-300:
                continue
            log_ratio = (z * (math.log(qk) - math.log(pk))) - qk + pk
            total += pz_q * log_ratio
    return total


def se_of_variance(samples: np.ndarray) -> float:
    """Standard error of the sample variance from the fourth moment."""
    n = samples.size
    mean = samples.mean()
    s2 = samples.var(ddof=1)
    m4 = np.mean((samples - mean) ** 4)
    return math.sqrt(max(m4 - (n - 3) / (n - 1) * s2 * s2, 0.0) / n)


def chi2_gof_pvalue(samples: np.ndarray, rate: float) -> float:
    """Chi-square goodness of fit of integer draws against Poisson(rate).

    Bins are pooled at both ends until every expected count is at least 5;
    the statistic is compared to chi2 with (bins - 1) degrees of freedom.
    """
    from scipy import stats as sps

    n = samples.size
    top = int(samples.max())
    ks = np.arange(top + 2)
    probs = np.array([poisson_pmf_brute(int(k), rate) for k in ks])
    expected = probs * n
    observed = np.bincount(samples.astype(np.int64), minlength=top + 2).astype(float)
    keep = np.where(expected >= 5.0)[0]
    lo, hi = keep[0], keep[-1]
    obs = np.concatenate(
        [[observed[: lo + 1].sum()], observed[lo + 1 : hi], [observed[hi:].sum()]]
    )
    exp = np.concatenate(
        [[expected[: lo + 1].sum()], expected[lo + 1 : hi], [n - expected[:hi].sum()]]
    )
    stat = float(((obs - exp) ** 2 / exp).sum())
    return float(sps.chi2.sf(stat, len(obs) - 1))
