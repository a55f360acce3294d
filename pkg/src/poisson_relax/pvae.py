"""Linear Poisson VAE with analytic ground truth.

A linear encoder maps inputs to latent log-rates, the latent posterior is
factorized Poisson, and a linear dictionary decodes counts back to the
input space under a squared-error observation model.  Linearity makes the
expected reconstruction loss, its gradient, and its Hessian available in
closed form, which is what turns this model into a gradient-estimator
testbed: every stochastic estimator can be scored against the exact answer.

Loss convention: the training loss is squared reconstruction error plus an
unweighted (or ``kl_beta``-weighted) closed-form Poisson KL to a learnable
prior; the ELBO reported by evaluation helpers is its negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .indicators import CUBIC, SIGMOID
from .poisson import adaptive_upperbound, sample_poisson_exact_batch
from .relax import eat_rsample_batch, gsm_rsample_batch
from .rng import RngStream

METHODS = ("exact", "eat-sigmoid", "eat-cubic", "gsm", "score")

_EAT_IND = {"eat-sigmoid": SIGMOID, "eat-cubic": CUBIC}

# Log-rate clamp: keeps exp() finite and the KL defined no matter how far
# the encoder wanders.
_LOG_RATE_LIMIT = 30.0

# Arrival horizons above this indicate diverged rates; training aborts
# rather than grinding through absurd sample sizes.
_MAX_HORIZON = 1_000_000

# Tail mass for training-time arrival horizons.
_TRAIN_TAIL = 1e-3


@dataclass
class LinearPvae:
    """Linear encoder (K x D), linear decoder dictionary (D x K), and a
    learnable prior log-rate vector (K)."""

    enc_weights: np.ndarray
    dec_weights: np.ndarray
    prior_lograte: np.ndarray

    def __post_init__(self):
        self.enc_weights = np.asarray(self.enc_weights, dtype=np.float64)
        self.dec_weights = np.asarray(self.dec_weights, dtype=np.float64)
        self.prior_lograte = np.asarray(self.prior_lograte, dtype=np.float64)
        K, D = self.enc_weights.shape
        if self.dec_weights.shape != (D, K):
            raise ValueError("decoder shape must be transpose-compatible with encoder")
        if self.prior_lograte.shape != (K,):
            raise ValueError("prior_lograte must have one entry per latent")
        for arr in (self.enc_weights, self.dec_weights, self.prior_lograte):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")

    @property
    def n_inputs(self) -> int:
        return self.enc_weights.shape[1]

    @property
    def n_latents(self) -> int:
        return self.enc_weights.shape[0]

    def gram(self) -> np.ndarray:
        """Decoder gram matrix, dictionary-column inner products (K x K)."""
        return self.dec_weights.T @ self.dec_weights

    def dict_norms_sq(self) -> np.ndarray:
        """Squared dictionary column norms, the gram diagonal (K)."""
        return np.einsum("dk,dk->k", self.dec_weights, self.dec_weights)


def init_model(D: int, K: int, seed: int) -> LinearPvae:
    """Fresh model: Gaussian weights scaled by 1/sqrt(fan-in), prior log-rates 0."""
    st = RngStream(seed, stream=101)
    enc = st.normal(K * D).reshape(K, D) / math.sqrt(D)
    dec = st.normal(D * K).reshape(D, K) / math.sqrt(K)
    return LinearPvae(enc, dec, np.zeros(K))


def encode(model: LinearPvae, x):
    """Latent pre-activations u = W x and clamped rates exp(u).

    Rates are clipped to [e^-30, e^30]; u itself is returned unclamped.
    """
    u = model.enc_weights @ np.asarray(x, dtype=np.float64)
    rates = np.exp(np.clip(u, -_LOG_RATE_LIMIT, _LOG_RATE_LIMIT))
    return u, rates


def recon_loss_exact(x, rates, model: LinearPvae) -> float:
    """Expected squared reconstruction error under Poisson latents.

    E||x - Phi z||^2 over z ~ Poisson(rates) collapses to
    ||x - Phi rates||^2 + rates . diag(gram): the mean reconstruction plus
    a per-latent variance penalty weighted by dictionary column energy.
    """
    x = np.asarray(x, dtype=np.float64)
    lam = _check_pos(rates)
    resid = x - model.dec_weights @ lam
    return float(resid @ resid + lam @ model.dict_norms_sq())


def recon_grad_exact(x, rates, model: LinearPvae) -> np.ndarray:
    """Gradient of ``recon_loss_exact`` w.r.t. latent log-rates.

    lam * (2 G lam - 2 Phi^T x + diag(G)); the leading lam gates dead
    units to zero gradient.
    """
    x = np.asarray(x, dtype=np.float64)
    lam = _check_pos(rates)
    G = model.gram()
    return lam * (2.0 * (G @ lam) - 2.0 * (model.dec_weights.T @ x) + np.diag(G))


def recon_hessian_exact(x, rates, model: LinearPvae) -> np.ndarray:
    """Hessian of ``recon_loss_exact`` w.r.t. latent log-rates:
    diag(grad) + 2 Lam G Lam.  Symmetric; not necessarily PSD because the
    gradient diagonal can be negative."""
    lam = _check_pos(rates)
    g = recon_grad_exact(x, rates, model)
    G = model.gram()
    return np.diag(g) + 2.0 * (lam[:, None] * G * lam[None, :])


def _check_pos(rates) -> np.ndarray:
    lam = np.asarray(rates, dtype=np.float64)
    if not np.all(lam > 0):
        raise ValueError("rates must be positive")
    return lam


def poisson_kl(q_rates, p_rates) -> float:
    """KL between factorized Poissons: sum q ln(q/p) - q + p."""
    q = _check_pos(q_rates)
    p = _check_pos(p_rates)
    return float(np.sum(q * np.log(q / p) - q + p))


def kl_grad_log_q(q_rates, p_rates) -> np.ndarray:
    """d KL / d ln(q) = q * ln(q/p), per latent."""
    q = _check_pos(q_rates)
    p = _check_pos(p_rates)
    return q * np.log(q / p)


def kl_grad_log_prior(q_rates, p_rates) -> np.ndarray:
    """d KL / d ln(p) = p - q, per latent."""
    q = _check_pos(q_rates)
    p = _check_pos(p_rates)
    return p - q


def elbo_exact(x, model: LinearPvae, kl_beta: float = 1.0) -> float:
    """Analytic ELBO at the encoder's rates: -recon_loss_exact - beta*KL."""
    _, rates = encode(model, x)
    prior = np.exp(model.prior_lograte)
    return -recon_loss_exact(x, rates, model) - kl_beta * poisson_kl(rates, prior)


def _horizon(max_rate: float, method: str, context: str = "") -> int:
    # M >= rate always, so rates past the cap must be rejected before the
    # inverse CDF tries to build a table of that size.
    if not max_rate <= _MAX_HORIZON:
        where = f" {context}" if context else ""
        raise RuntimeError(
            f"rate {max_rate:.3g} exceeds the arrival horizon cap "
            f"{_MAX_HORIZON}{where}; rates diverged"
        )
    M = adaptive_upperbound(max_rate, _TRAIN_TAIL)
    if method == "gsm":
        # Categories encode counts 0..M, so one more than the upperbound.
        M += 1
    if M > _MAX_HORIZON:
        where = f" {context}" if context else ""
        raise RuntimeError(
            f"arrival horizon M={M} exceeds {_MAX_HORIZON}{where}; rates diverged"
        )
    return M


def _draw_z(rates, method: str, tau: float, n_samples: int, rng: RngStream):
    """(n_samples, K) latent draws and pathwise log-rate derivatives.

    EAT and GSM return (z, dlog); the score method returns exact integer
    draws with dlog None (no pathwise derivative exists there).
    """
    lam = np.asarray(rates, dtype=np.float64)
    K = lam.size
    tiled = np.broadcast_to(lam, (n_samples, K)).ravel()
    if method == "score":
        z = sample_poisson_exact_batch(tiled, rng).astype(np.float64)
        return z.reshape(n_samples, K), None
    M = _horizon(float(lam.max()), method)
    if method == "gsm":
        z, dl = gsm_rsample_batch(tiled, M, tau, rng)
    else:
        z, dl = eat_rsample_batch(tiled, M, tau, _EAT_IND[method], rng)
    return z.reshape(n_samples, K), dl.reshape(n_samples, K)


def elbo_mc(
    x,
    model: LinearPvae,
    method: str,
    tau: float,
    mc_samples: int,
    rng: RngStream,
    score_baseline: float = 0.0,
    kl_beta: float = 1.0,
):
    """Monte Carlo ELBO estimate and its gradient w.r.t. latent log-rates.

    The reconstruction term is averaged over ``mc_samples`` latent draws;
    the KL term and its gradient are always closed-form.  The returned
    gradient estimates d(value)/du: the pathwise chain for the EAT/GSM
    methods, the score estimator (with the caller-supplied lagged baseline)
    for "score", and the analytic gradient for "exact", which ignores
    ``mc_samples`` entirely.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method != "exact" and mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    _, rates = encode(model, x)
    prior = np.exp(model.prior_lograte)
    kl = poisson_kl(rates, prior)
    kl_g = kl_grad_log_q(rates, prior)
    if method == "exact":
        value = -recon_loss_exact(x, rates, model) - kl_beta * kl
        grad = -(recon_grad_exact(x, rates, model) + kl_beta * kl_g)
        return value, grad
    z, dl = _draw_z(rates, method, tau, mc_samples, rng)
    resid = x[None, :] - z @ model.dec_weights.T
    recon = np.einsum("sd,sd->s", resid, resid)
    value = -float(recon.mean()) - kl_beta * kl
    if method == "score":
        centered = recon - score_baseline
        recon_grad = (centered[:, None] * (z - rates[None, :])).mean(axis=0)
    else:
        dloss_dz = 2.0 * (z @ model.gram()) - 2.0 * (model.dec_weights.T @ x)[None, :]
        recon_grad = (dloss_dz * dl).mean(axis=0)
    return value, -(recon_grad + kl_beta * kl_g)


@dataclass
class TrainConfig:
    """Trainer settings; defaults are desk-scale."""

    epochs: int = 300
    warmup_epochs: int = 10
    batch_size: int = 256
    lr: float = 0.005
    grad_clip_norm: float = 500.0
    tau_start: float = 1.0
    tau_stop: float = 0.1
    anneal_fraction: float = 0.5
    method: str = "eat-cubic"
    mc_samples: int = 1
    seed: int = 0
    kl_beta: float = 1.0
    score_baseline: str = "ema"
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.mc_samples < 1:
            raise ValueError("epochs, batch_size, and mc_samples must be >= 1")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if not self.lr > 0 or not self.grad_clip_norm > 0:
            raise ValueError("lr and grad_clip_norm must be positive")
        if not self.tau_start >= self.tau_stop >= 0:
            raise ValueError("need tau_start >= tau_stop >= 0")
        if not 0.0 <= self.anneal_fraction <= 1.0:
            raise ValueError("anneal_fraction must lie in [0, 1]")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.score_baseline not in ("ema", "batch"):
            raise ValueError("score_baseline must be 'ema' or 'batch'")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be >= 0")


@dataclass
class TrainTrace:
    """Per-epoch training record plus the trained model."""

    train_elbo: np.ndarray
    val_elbo: np.ndarray
    tau: np.ndarray
    lr: np.ndarray
    model: LinearPvae


def _epoch_tau(cfg: TrainConfig, epoch: int) -> float:
    anneal_epochs = int(round(cfg.anneal_fraction * cfg.epochs))
    if anneal_epochs <= 0:
        return cfg.tau_stop
    frac = min(1.0, epoch / anneal_epochs)
    return cfg.tau_start + (cfg.tau_stop - cfg.tau_start) * frac


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    if epoch < cfg.warmup_epochs:
        return cfg.lr * (epoch + 1) / cfg.warmup_epochs
    span = max(1, cfg.epochs - cfg.warmup_epochs)
    progress = (epoch - cfg.warmup_epochs) / span
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def _elbo_exact_rows(X, model: LinearPvae, kl_beta: float) -> np.ndarray:
    U = X @ model.enc_weights.T
    lam = np.exp(np.clip(U, -_LOG_RATE_LIMIT, _LOG_RATE_LIMIT))
    resid = X - lam @ model.dec_weights.T
    recon = np.einsum("nd,nd->n", resid, resid) + lam @ model.dict_norms_sq()
    prior = np.exp(model.prior_lograte)
    kl = np.sum(lam * (np.log(lam) - model.prior_lograte) - lam + prior[None, :], axis=1)
    return -recon - kl_beta * kl


class _Adamax:
    """Adamax on a dict of parameter arrays (infinity-norm Adam variant)."""

    def __init__(self, params: dict, lr_getter, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.u = {k: np.zeros_like(v) for k, v in params.items()}
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.lr_getter = lr_getter

    def step(self, grads: dict) -> None:
        self.t += 1
        lr = self.lr_getter()
        correction = 1.0 - self.beta1**self.t
        for k, g in grads.items():
            m = self.m[k]
            u = self.u[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            np.maximum(self.beta2 * u, np.abs(g), out=u)
            self.params[k] -= (lr / correction) * m / (u + self.eps)


def _clip_global(grads: dict, max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def _batch_grads(model, Xb, cfg, tau, mc_stream, ema_value):
    """Mean training-loss gradients over one batch for every parameter.

    Returns (loss-gradients dict, batch mean ELBO, batch mean recon MC
    loss or None).  Vectorizes the per-item math of ``elbo_mc`` over the
    batch; the score path consumes ``ema_value`` as its lagged baseline
    when so configured.
    """
    B = Xb.shape[0]
    U = Xb @ model.enc_weights.T
    gate = (np.abs(U) <= _LOG_RATE_LIMIT).astype(np.float64)
    lam = np.exp(np.clip(U, -_LOG_RATE_LIMIT, _LOG_RATE_LIMIT))
    prior = np.exp(model.prior_lograte)
    Phi = model.dec_weights
    G = model.gram()
    d = np.diag(G)
    kl_rows = np.sum(lam * (np.log(lam) - model.prior_lograte) - lam + prior, axis=1)
    kl_gu = lam * (np.log(lam) - model.prior_lograte)
    beta = cfg.kl_beta
    method = cfg.method
    batch_recon_mean = None
    if method == "exact":
        resid = Xb - lam @ Phi.T
        recon = np.einsum("nd,nd->n", resid, resid) + lam @ d
        grad_u = lam * (2.0 * (lam @ G) - 2.0 * (Xb @ Phi) + d) + beta * kl_gu
        grad_phi = (-2.0 * resid.T @ lam) / B + 2.0 * Phi * lam.mean(axis=0)
        elbo = float(np.mean(-recon - beta * kl_rows))
    else:
        S = cfg.mc_samples
        K = lam.shape[1]
        tiled = np.repeat(lam, S, axis=0).ravel()
        sub = mc_stream
        if method == "score":
            z = sample_poisson_exact_batch(tiled, sub).astype(np.float64)
            z = z.reshape(B * S, K)
            dl = None
        else:
            M = _horizon(float(lam.max()), method, "in this batch")
            if method == "gsm":
                zf, dlf = gsm_rsample_batch(tiled, M, tau, sub)
            else:
                zf, dlf = eat_rsample_batch(tiled, M, tau, _EAT_IND[method], sub)
            z = zf.reshape(B * S, K)
            dl = dlf.reshape(B * S, K)
        Xrep = np.repeat(Xb, S, axis=0)
        resid = Xrep - z @ Phi.T
        recon = np.einsum("nd,nd->n", resid, resid)
        batch_recon_mean = float(recon.mean())
        if method == "score":
            if cfg.score_baseline == "batch":
                baseline = batch_recon_mean
            else:
                baseline = ema_value
            lam_rep = np.repeat(lam, S, axis=0)
            per_draw = (recon - baseline)[:, None] * (z - lam_rep)
        else:
            per_draw = (2.0 * (z @ G) - 2.0 * (Xrep @ Phi)) * dl
        grad_u = per_draw.reshape(B, S, K).mean(axis=1) + beta * kl_gu
        grad_phi = (-2.0 * resid.T @ z) / (B * S)
        elbo = float(np.mean(-recon)) - float(np.mean(beta * kl_rows))
    grad_u = grad_u * gate
    grads = {
        "enc": grad_u.T @ Xb / B,
        "dec": grad_phi,
        "prior": beta * (prior - lam.mean(axis=0)),
    }
    return grads, elbo, batch_recon_mean


def train(model: LinearPvae, data, config: TrainConfig) -> TrainTrace:
    """Mini-batch training with Adamax, LR warmup + cosine decay, and a
    linear temperature anneal from tau_start to tau_stop over
    ``anneal_fraction`` of the epochs (held at tau_stop after).

    Validation ELBO is evaluated analytically every epoch, i.e. at
    temperature 0, on a tail fraction of ``data`` held out before
    training.  Deterministic per (data, config): batch order and Monte
    Carlo draws derive from config.seed alone.  Aborts with epoch/batch
    diagnostics on non-finite losses or diverged rates.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("data must be a non-empty n x D matrix")
    if X.shape[1] != model.n_inputs:
        raise ValueError("data width does not match the model input size")
    n_val = int(round(config.val_fraction * X.shape[0]))
    X_tr = X[: X.shape[0] - n_val]
    # Empty holdout (val_fraction 0) falls back to scoring the train set.
    X_val = X[X.shape[0] - n_val :] if n_val else X
    if X_tr.shape[0] < 1:
        raise ValueError("no training rows left after the validation split")
    root = RngStream(config.seed, stream=202)
    order_stream = root.spawn(0)
    mc_stream = root.spawn(1)
    params = {
        "enc": model.enc_weights,
        "dec": model.dec_weights,
        "prior": model.prior_lograte,
    }
    current_lr = {"value": config.lr}
    opt = _Adamax(params, lambda: current_lr["value"])
    ema = 0.0
    n_tr = X_tr.shape[0]
    trace_train = np.zeros(config.epochs)
    trace_val = np.zeros(config.epochs)
    trace_tau = np.zeros(config.epochs)
    trace_lr = np.zeros(config.epochs)
    for epoch in range(config.epochs):
        tau = _epoch_tau(config, epoch)
        lr = _epoch_lr(config, epoch)
        current_lr["value"] = lr
        perm = np.argsort(order_stream.spawn(epoch).uniform_oc(n_tr), kind="stable")
        elbo_sum = 0.0
        for bi, lo in enumerate(range(0, n_tr, config.batch_size)):
            Xb = X_tr[perm[lo : lo + config.batch_size]]
            try:
                grads, elbo, recon_mean = _batch_grads(
                    model, Xb, config, tau, mc_stream, ema
                )
            except RuntimeError as err:
                raise RuntimeError(f"epoch {epoch}, batch {bi}: {err}") from err
            if not math.isfinite(elbo) or not all(
                np.all(np.isfinite(g)) for g in grads.values()
            ):
                raise RuntimeError(
                    f"non-finite loss or gradient at epoch {epoch}, batch {bi}"
                )
            _clip_global(grads, config.grad_clip_norm)
            opt.step(grads)
            if recon_mean is not None:
                ema = 0.1 * ema + 0.9 * recon_mean
            elbo_sum += elbo * Xb.shape[0]
        trace_train[epoch] = elbo_sum / n_tr
        trace_val[epoch] = float(np.mean(_elbo_exact_rows(X_val, model, config.kl_beta)))
        trace_tau[epoch] = tau
        trace_lr[epoch] = lr
    return TrainTrace(trace_train, trace_val, trace_tau, trace_lr, model)


def synth_data(
    D: int,
    K_true: int,
    n: int,
    sparsity: float,
    noise_sd: float,
    seed: int,
    standardize: bool = True,
    dictionary=None,
):
    """Synthetic sparse-code data: x = Phi z + noise.

    Phi is a random unit-column dictionary (or the one supplied), z has
    Bernoulli(sparsity) active entries drawn Poisson with rate 2, and
    Gaussian noise of scale ``noise_sd`` is added.  With ``standardize``
    (the default) columns are z-scored; disable it to keep raw code space,
    e.g. to verify that noiseless data reproduces the integer codes.

    Returns (data n x D, dictionary D x K_true).
    """
    if D < 1 or K_true < 1 or n < 1:
        raise ValueError("D, K_true, and n must be >= 1")
    if not 0.0 < sparsity <= 1.0:
        raise ValueError("sparsity must lie in (0, 1]")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    root = RngStream(seed, stream=303)
    if dictionary is None:
        Phi = root.spawn(0).normal(D * K_true).reshape(D, K_true)
        norms = np.sqrt(np.einsum("dk,dk->k", Phi, Phi))
        Phi = Phi / np.maximum(norms, 1e-12)
    else:
        Phi = np.asarray(dictionary, dtype=np.float64)
        if Phi.shape != (D, K_true):
            raise ValueError("dictionary must be D x K_true")
    active = root.spawn(1).uniform_oc(n * K_true) < sparsity
    codes = sample_poisson_exact_batch(np.full(n * K_true, 2.0), root.spawn(2))
    Z = (codes * active).reshape(n, K_true).astype(np.float64)
    X = Z @ Phi.T
    if noise_sd > 0:
        X = X + noise_sd * root.spawn(3).normal(n * D).reshape(n, D)
    if standardize:
        X = X - X.mean(axis=0)
        X = X / np.maximum(X.std(axis=0), 1e-12)
    return X, Phi
