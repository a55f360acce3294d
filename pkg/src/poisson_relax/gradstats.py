"""Gradient-estimator quality metrics against the analytic oracle.

Stochastic gradients of the linear model's reconstruction loss are
collected at pinned latent rates, compared with the exact gradient, and
summarized by bias/covariance, cosine alignments, and curvature-weighted
energies.  The energies plug into an exact second-order account of one
SGD step: on a quadratic loss the six-term breakdown below has no Taylor
error, so predicted and realized loss changes can be compared directly.

Decomposing an estimator as ghat = g_true + bias + noise with noise
covariance Sigma and Hessian H:

    bias_energy   = bias' H bias
    noise_energy  = tr(H Sigma)
    signal_energy = g_true' H g_true
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poisson import sample_poisson_exact_batch
from .pvae import (
    LinearPvae,
    METHODS,
    _draw_z,
    recon_grad_exact,
    recon_hessian_exact,
)
from .rng import RngStream, stable_child

# Full covariance is stored up to this latent width, diagonal-only above;
# tr(H Sigma) then uses only matching diagonals and results flag it.
_FULL_COV_MAX_K = 256


@dataclass
class GradStats:
    """Summary of one estimator's gradient draws at one operating point."""

    g_true: np.ndarray
    g_mean: np.ndarray
    bias: np.ndarray
    cov: np.ndarray
    cov_is_diagonal: bool
    cos_mean: float | None
    cos_sample: float | None
    bias_energy: float
    noise_energy: float
    signal_energy: float
    norm_bias_energy: float | None
    norm_noise_energy: float | None
    h_min_eig: float
    n_samples: int


def collect_grads(
    x,
    model: LinearPvae,
    method: str,
    tau: float,
    fixed_rates,
    n_samples: int,
    rng: RngStream,
    score_baseline="zero",
):
    """Stochastic reconstruction-loss gradients at pinned rates.

    The encoder is bypassed: ``fixed_rates`` plays the posterior so every
    method is probed at the same operating point.  Returns
    (draws n_samples x K, g_true, H) where rows are single-draw gradient
    estimates w.r.t. log-rates, and g_true / H come from the analytic
    formulas.

    ``score_baseline`` picks the reward centering for the score method:
    "zero" probes the raw uncentered estimator, "batch" centers with the
    mean reconstruction loss over these same draws, and a scalar or
    per-draw array supplies externally computed values (this is how
    ``grad_quality_sweep`` injects its cross-item batch average).  A
    constant baseline never biases the rows; only their spread changes.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if isinstance(score_baseline, str):
        if score_baseline not in ("zero", "batch"):
            raise ValueError(
                "score_baseline must be 'zero', 'batch', or numeric values"
            )
    else:
        score_baseline = np.asarray(score_baseline, dtype=np.float64)
        if score_baseline.ndim not in (0, 1) or (
            score_baseline.ndim == 1 and score_baseline.size != n_samples
        ):
            raise ValueError(
                "numeric score_baseline must be a scalar or one value per draw"
            )
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    lam = np.asarray(fixed_rates, dtype=np.float64)
    if not np.all(lam > 0):
        raise ValueError("fixed_rates must be positive")
    g_true = recon_grad_exact(x, lam, model)
    H = recon_hessian_exact(x, lam, model)
    if method == "exact":
        draws = np.broadcast_to(g_true, (n_samples, lam.size)).copy()
        return draws, g_true, H
    z, dl = _draw_z(lam, method, tau, n_samples, rng)
    if method == "score":
        resid = x[None, :] - z @ model.dec_weights.T
        recon = np.einsum("sd,sd->s", resid, resid)
        if isinstance(score_baseline, str):
            centered = recon - (recon.mean() if score_baseline == "batch" else 0.0)
        else:
            centered = recon - score_baseline
        draws = centered[:, None] * (z - lam[None, :])
    else:
        dloss_dz = 2.0 * (z @ model.gram()) - 2.0 * (model.dec_weights.T @ x)[None, :]
        draws = dloss_dz * dl
    return draws, g_true, H


def _cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return None
    return float(a @ b / (na * nb))


def grad_stats(draws, g_true, H) -> GradStats:
    """Summarize gradient draws against the exact gradient and Hessian.

    Covariance is the unbiased single-draw covariance (full below a width
    threshold, diagonal above).  Cosines are None, never a sentinel
    number, when a zero vector makes them undefined.  Normalized energies
    divide by signal_energy and are None when that is not positive; H's
    minimum eigenvalue is recorded so indefinite-curvature points are
    visible (energies may then be negative).
    """
    arr = np.asarray(draws, dtype=np.float64)
    g_true = np.asarray(g_true, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need at least 2 gradient draws")
    n, K = arr.shape
    if g_true.shape != (K,) or H.shape != (K, K):
        raise ValueError("g_true and H must match the draw width")
    g_mean = arr.mean(axis=0)
    bias = g_mean - g_true
    if K <= _FULL_COV_MAX_K:
        cov = np.cov(arr, rowvar=False, ddof=1).reshape(K, K)
        cov_diag = False
        noise = float(np.einsum("ij,ji->", H, cov))
    else:
        cov = arr.var(axis=0, ddof=1)
        cov_diag = True
        noise = float(np.diag(H) @ cov)
    cos_mean = _cosine(g_mean, g_true)
    if np.linalg.norm(g_true) == 0.0:
        cos_sample = None
    else:
        norms = np.linalg.norm(arr, axis=1)
        ok = norms > 0
        if ok.any():
            unit_true = g_true / np.linalg.norm(g_true)
            cos_sample = float(np.mean((arr[ok] @ unit_true) / norms[ok]))
        else:
            cos_sample = None
    bias_energy = float(bias @ H @ bias)
    signal_energy = float(g_true @ H @ g_true)
    if signal_energy > 0:
        norm_bias = bias_energy / signal_energy
        norm_noise = noise / signal_energy
    else:
        norm_bias = None
        norm_noise = None
    return GradStats(
        g_true=g_true,
        g_mean=g_mean,
        bias=bias,
        cov=cov,
        cov_is_diagonal=cov_diag,
        cos_mean=cos_mean,
        cos_sample=cos_sample,
        bias_energy=bias_energy,
        noise_energy=noise,
        signal_energy=signal_energy,
        norm_bias_energy=norm_bias,
        norm_noise_energy=norm_noise,
        h_min_eig=float(np.linalg.eigvalsh(H)[0]),
        n_samples=n,
    )


@dataclass(frozen=True)
class PredictedLossChange:
    """Expected one-step SGD loss change split into its six exact terms."""

    term_gradient: float
    term_bias_align: float
    term_curv_signal: float
    term_curv_cross: float
    term_curv_bias: float
    term_curv_noise: float
    total: float


def predicted_loss_change(g_true, H, bias, cov, eta: float) -> PredictedLossChange:
    """Expected loss change of one step u -= eta * ghat on the quadratic
    model with curvature H.

    Terms: -eta ||g*||^2, -eta b'g*, (eta^2/2) g*'Hg*, eta^2 g*'Hb,
    (eta^2/2) b'Hb, (eta^2/2) tr(H Sigma); their sum is exact for
    quadratics (no Taylor remainder).  ``cov`` may be a full matrix or a
    variance diagonal.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    g = np.asarray(g_true, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim == 2:
        tr_hs = float(np.einsum("ij,ji->", H, cov))
    else:
        tr_hs = float(np.diag(H) @ cov)
    hb = H @ b
    terms = (
        -eta * float(g @ g),
        -eta * float(b @ g),
        0.5 * eta**2 * float(g @ H @ g),
        eta**2 * float(g @ hb),
        0.5 * eta**2 * float(b @ hb),
        0.5 * eta**2 * tr_hs,
    )
    return PredictedLossChange(*terms, total=float(sum(terms)))


@dataclass(frozen=True)
class GradQualityRow:
    """Per-(method, rate, tau) metrics averaged over batch items.

    Cosine averages skip items where the cosine was undefined;
    ``n_cos_missing`` counts the skipped items.  Normalized energies skip
    items with non-positive signal energy the same way.
    """

    method: str
    rate: float
    tau: float
    n_samples: int
    n_items: int
    cos_mean: float | None
    cos_sample: float | None
    bias_energy: float
    noise_energy: float
    signal_energy: float
    norm_bias_energy: float | None
    norm_noise_energy: float | None
    n_cos_missing: int


def _mean_or_none(values) -> float | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return float(np.mean(vals))


def grad_quality_sweep(
    model: LinearPvae,
    methods,
    rates,
    taus,
    n_samples: int = 100,
    batch: int = 16,
    seed: int = 0,
    score_baseline: str = "batch",
) -> list[GradQualityRow]:
    """Gradient quality over a (method, rate, tau) grid.

    A fixed batch of inputs x = c * (Phi z + noise) (z Poisson with rate
    2, noise scale 0.1, contrast factors c on a geometric ladder from 1/6
    to 6) is generated once from ``seed`` and reused for every cell, so
    cells differ only in estimator settings.  The contrast ladder gives
    the batch the amplitude heterogeneity real input batches have; a
    cross-item reward baseline has to cope with the per-item loss offsets
    that heterogeneity creates, while pathwise estimators are indifferent
    to it.  Latent rates are pinned to the cell's rate in every
    dimension.  Per item, draws feed ``grad_stats`` with that item's own
    Hessian; the row averages the final per-item metrics.  Deterministic
    per seed and independent of grid order.

    ``score_baseline`` sets the score method's reward centering: "batch"
    (default) is the cross-item batch average — per draw, the mean
    reconstruction loss over the batch items — and "zero" probes the
    uncentered estimator.  Per-item loss offsets survive the cross-item
    centering, so "batch" here is a strictly weaker variance reducer
    than the per-item draw mean ``collect_grads`` uses for its own
    "batch" mode.
    """
    methods = list(methods)
    rates = [float(r) for r in rates]
    taus = [float(t) for t in taus]
    if not methods or not rates or not taus:
        raise ValueError("methods, rates, and taus must be non-empty")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    if score_baseline not in ("zero", "batch"):
        raise ValueError("score_baseline must be 'zero' or 'batch'")
    master = RngStream(seed, stream=404)
    K = model.n_latents
    D = model.n_inputs
    data_stream = master.spawn(0)
    codes = sample_poisson_exact_batch(np.full(batch * K, 2.0), data_stream)
    Z = codes.reshape(batch, K).astype(np.float64)
    X = Z @ model.dec_weights.T
    X = X + 0.1 * data_stream.normal(batch * D).reshape(batch, D)
    # Deterministic ladder, not random draws: a lognormal tail can throw
    # an item far enough out that the curvature form goes indefinite.
    X = X * np.geomspace(1.0 / 6.0, 6.0, batch)[:, None]
    rows = []
    for method in methods:
        for rate in rates:
            for tau in taus:
                cell_stream = master.spawn(stable_child(method, rate, tau))
                lam = np.full(K, rate)
                per_item_baseline = score_baseline
                if method == "score" and score_baseline == "batch":
                    # Pre-pass: spawn(i) is stateless, so the main pass
                    # below redraws the same z bitwise and only the
                    # centering differs.
                    recon_all = np.empty((batch, n_samples))
                    for i in range(batch):
                        z, _ = _draw_z(
                            lam, "score", tau, n_samples, cell_stream.spawn(i)
                        )
                        resid = X[i][None, :] - z @ model.dec_weights.T
                        recon_all[i] = np.einsum("sd,sd->s", resid, resid)
                    per_item_baseline = recon_all.mean(axis=0)
                stats = []
                for i in range(batch):
                    st = cell_stream.spawn(i)
                    draws, g_true, H = collect_grads(
                        X[i], model, method, tau, lam, n_samples, st,
                        score_baseline=per_item_baseline,
                    )
                    stats.append(grad_stats(draws, g_true, H))
                cos_means = [s.cos_mean for s in stats]
                rows.append(
                    GradQualityRow(
                        method=method,
                        rate=rate,
                        tau=tau,
                        n_samples=int(n_samples),
                        n_items=int(batch),
                        cos_mean=_mean_or_none(cos_means),
                        cos_sample=_mean_or_none([s.cos_sample for s in stats]),
                        bias_energy=float(np.mean([s.bias_energy for s in stats])),
                        noise_energy=float(np.mean([s.noise_energy for s in stats])),
                        signal_energy=float(
                            np.mean([s.signal_energy for s in stats])
                        ),
                        norm_bias_energy=_mean_or_none(
                            [s.norm_bias_energy for s in stats]
                        ),
                        norm_noise_energy=_mean_or_none(
                            [s.norm_noise_energy for s in stats]
                        ),
                        n_cos_missing=sum(1 for c in cos_means if c is None),
                    )
                )
    return rows
