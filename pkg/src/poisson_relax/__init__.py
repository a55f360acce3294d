"""Differentiable relaxations of Poisson sampling and their evaluation.

The package provides two reparameterized samplers whose draws carry a
pathwise derivative with respect to the log-rate (an arrival-time
construction with soft threshold indicators, and a temperature-scaled
soft-argmax over count categories), analytic moment corrections for the
arrival-time family, distribution-fidelity and gradient-quality
measurement harnesses, a small linear Poisson autoencoder with exact
gradients to train against, and a scalar regression benchmark.

Heavy sampling kernels run through a compiled backend when available;
set POISSON_RELAX_BACKEND=numpy to force the pure-numpy path.
"""

__version__ = "0.1.0"

from ._backend import get_backend_name, set_backend
from .fidelity import (
    FidelityRecord,
    empirical_moments,
    fidelity_sweep,
    wasserstein1,
    wasserstein2,
)
from .gradstats import (
    GradQualityRow,
    GradStats,
    PredictedLossChange,
    collect_grads,
    grad_quality_sweep,
    grad_stats,
    predicted_loss_change,
)
from .indicators import CUBIC, HARD, SIGMOID, SoftIndicator, indicator_eval
from .moments import (
    MomentFactors,
    moment_factors,
    moment_factors_cubic,
    moment_factors_quadrature,
    moment_factors_sigmoid,
)
from .poisson import (
    adaptive_upperbound,
    log_factorial,
    poisson_inverse_cdf,
    poisson_pmf_log,
    sample_exponential,
    sample_gumbel,
    sample_poisson_exact,
    sample_poisson_exact_batch,
)
from .pvae import (
    LinearPvae,
    TrainConfig,
    TrainTrace,
    elbo_exact,
    elbo_mc,
    encode,
    init_model,
    kl_grad_log_prior,
    kl_grad_log_q,
    poisson_kl,
    recon_grad_exact,
    recon_hessian_exact,
    recon_loss_exact,
    synth_data,
    train,
)
from .regbench import (
    DEFAULT_TAU_GRID,
    FUNCTION_IDS,
    MaeRow,
    TestFunction,
    estimate_scalar_grad,
    exact_scalar_grad,
    make_test_function,
    mae_sweep,
    optimal_tau,
)
from .relax import (
    EmaBaseline,
    RelaxedSample,
    com_poisson_logits,
    eat_rsample,
    eat_rsample_batch,
    eat_support_upperbound,
    gsm_rsample,
    gsm_rsample_batch,
    gsm_rsample_from_logits,
    nb_two_step_sample,
    nb_two_step_sample_batch,
    score_estimate_grad,
    score_logq_grad,
)
from .rng import RngStream, derive_key, mix64, stable_child

__all__ = [
    "__version__",
    "CUBIC",
    "DEFAULT_TAU_GRID",
    "FUNCTION_IDS",
    "EmaBaseline",
    "FidelityRecord",
    "GradQualityRow",
    "GradStats",
    "HARD",
    "LinearPvae",
    "MaeRow",
    "MomentFactors",
    "PredictedLossChange",
    "RelaxedSample",
    "RngStream",
    "SIGMOID",
    "SoftIndicator",
    "TestFunction",
    "TrainConfig",
    "TrainTrace",
    "adaptive_upperbound",
    "collect_grads",
    "com_poisson_logits",
    "derive_key",
    "eat_rsample",
    "eat_rsample_batch",
    "eat_support_upperbound",
    "elbo_exact",
    "elbo_mc",
    "empirical_moments",
    "encode",
    "estimate_scalar_grad",
    "exact_scalar_grad",
    "fidelity_sweep",
    "get_backend_name",
    "grad_quality_sweep",
    "grad_stats",
    "gsm_rsample",
    "gsm_rsample_batch",
    "gsm_rsample_from_logits",
    "indicator_eval",
    "init_model",
    "kl_grad_log_prior",
    "kl_grad_log_q",
    "log_factorial",
    "mae_sweep",
    "make_test_function",
    "mix64",
    "moment_factors",
    "moment_factors_cubic",
    "moment_factors_quadrature",
    "moment_factors_sigmoid",
    "nb_two_step_sample",
    "nb_two_step_sample_batch",
    "optimal_tau",
    "poisson_inverse_cdf",
    "poisson_kl",
    "poisson_pmf_log",
    "predicted_loss_change",
    "recon_grad_exact",
    "recon_hessian_exact",
    "recon_loss_exact",
    "sample_exponential",
    "sample_gumbel",
    "sample_poisson_exact",
    "sample_poisson_exact_batch",
    "score_estimate_grad",
    "score_logq_grad",
    "set_backend",
    "stable_child",
    "synth_data",
    "train",
]
