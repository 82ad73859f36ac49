"""Objective functions and training loops for tuning MCMC proposal
distributions, with a small reverse-mode autodiff engine, target and
proposal families, MH/HMC kernels, efficiency metrics, and a declarative
CLI runner."""

from .autodiff import DomainError, Tensor, constant, grad_of
from .nn import (
    AdamState,
    ConfigError,
    MlpSpec,
    NiceFlowSpec,
    TrainingError,
    adam_step,
    mlp_apply,
    nice_forward,
    nice_inverse,
)
from .targets import (
    AffinePushforward,
    AugmentedTarget,
    GaussianMixtureCross,
    IsoCauchy,
    IsoGaussian,
    IsoLaplace,
    LogisticDataset,
    LogisticRegressionPosterior,
    StabilizedUniform,
    Target,
    make_target,
)
from .proposals import (
    AffineProposal,
    AugmentedProposal,
    IsoMala,
    IsoRwm,
    MultiScheme,
    PositionMixture,
    PrecondMala,
    PrecondRwm,
    Proposal,
    ProposalError,
    ResamplingFlow,
    ScaledResampler,
    TargetResampler,
    configure_multischeme,
    load_checkpoint,
    save_checkpoint,
)
from .objectives import (
    AbInitio,
    Batch,
    BatchEstimate,
    Gsm,
    L2hmc,
    Msjd,
    Nll,
    WeightedCombo,
    combine,
    dimension_coefficient,
    estimate,
    gsm_beta_update,
)
from .kernels import (
    ChainTrace,
    HmcSpec,
    KernelError,
    hmc_reference_chain,
    load_trace,
    log_acceptance,
    mh_step,
    run_chain,
    run_chains,
    save_trace,
)
from .training import (
    FitReference,
    FitResult,
    FitSpec,
    OptimizeResult,
    TrainSpec,
    algorithm1_step,
    algorithm2_step,
    fit_coefficient,
    optimize,
)
from .evaluation import (
    EvaluationError,
    MetricsReport,
    ab_initio_score,
    acceptance_and_msjd,
    ess_multichain,
    ess_single_chain,
    ess_summary,
    evaluate_proposal,
    replicate_stats,
)
from .reporting import RunManifest, format_mean_se
from . import config

__version__ = "0.1.0"
