"""Objective functions for proposal optimization, as stochastic estimators.

Every objective is evaluated on a shared batch: M starting points (from the
target or from persistent chains), each with N reparameterized proposal draws.
The estimator value is differentiable w.r.t. the flat proposal parameters via
the pathwise draws, so a single backward pass yields the training gradient.

Sign conventions follow the sources: the speed-measure and squared-jump
objectives are maximized, the rest minimized; ``direction`` records which.
The squared-jump objectives weight each jump by the acceptance probability
(the expected squared jump distance actually realized by the chain); the
unweighted form is unbounded in the step size and does not reproduce the
published optima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import ConfigError, TrainingError
from .proposals import Proposal
from .targets import Target


SCALINGS = ("linear_d", "d_log_d")


def dimension_coefficient(A: float, dim: int, scaling: str) -> float:
    """C(d): the weight on the -E[log alpha] penalty."""
    if scaling == "linear_d":
        return A * dim
    if scaling == "d_log_d":
        return A * dim * math.log(dim) if dim > 1 else 0.0
    raise ConfigError(f"unknown dimension scaling {scaling!r}")


class Batch:
    """One estimator batch: starts tiled over draws, with lazily computed
    graph nodes shared by every objective evaluated on it."""

    def __init__(self, target: Target, proposal: Proposal, theta: Tensor,
                 starts: np.ndarray, n_draws: int, rng):
        starts = np.asarray(starts, dtype=np.float64)
        if starts.ndim == 1:
            starts = starts[None, :]
        self.target = target
        self.proposal = proposal
        self.theta = theta
        self.m_starts = starts.shape[0]
        self.n_draws = n_draws
        # (M*N, d) with each start repeated N times
        self.x = np.repeat(starts, n_draws, axis=0)
        self.x_prime = proposal.sample_t(theta, self.x, rng)
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def log_g_forward(self) -> Tensor:
        return self._get("gf", lambda: self.proposal.log_density_t(
            self.theta, self.x, self.x_prime))

    @property
    def log_g_reverse(self) -> Tensor:
        return self._get("gr", lambda: self.proposal.log_density_t(
            self.theta, self.x_prime, ad.constant(self.x)))

    @property
    def log_pi_prime(self) -> Tensor:
        return self._get("pp", lambda: self.target.log_density_t(self.x_prime))

    @property
    def log_pi_x(self) -> np.ndarray:
        return self._get("px", lambda: self.target.log_density(self.x))

    @property
    def log_alpha(self) -> Tensor:
        def build():
            ratio = (self.log_pi_prime + self.log_g_reverse
                     - self.log_pi_x - self.log_g_forward)
            return ad.min_zero(ratio)
        return self._get("la", build)

    @property
    def sq_jump(self) -> Tensor:
        return self._get("sq", lambda: ad.square(
            self.x_prime - self.x).sum(axis=1))

    @property
    def mean_acceptance(self) -> float:
        return float(np.mean(np.exp(self.log_alpha.value)))


@dataclass(frozen=True)
class AbInitio:
    """KL(g || pi) plus a dimension-scaled penalty on -E[log alpha]."""

    A: float = 0.18125
    scaling: str = "linear_d"
    direction = "min"

    def __post_init__(self):
        if self.A <= 0:
            raise ConfigError("coefficient A must be positive")
        if self.scaling not in SCALINGS:
            raise ConfigError(f"scaling must be one of {SCALINGS}")

    def value_t(self, batch: Batch) -> Tensor:
        c = dimension_coefficient(self.A, batch.target.dim, self.scaling)
        kl = (batch.log_g_forward - batch.log_pi_prime).mean()
        return kl - c * batch.log_alpha.mean()


@dataclass(frozen=True)
class Msjd:
    """Expected squared jump distance, acceptance-weighted; maximized."""

    direction = "max"

    def value_t(self, batch: Batch) -> Tensor:
        return (ad.exp(batch.log_alpha) * batch.sq_jump).mean()


@dataclass(frozen=True)
class L2hmc:
    """Reciprocal-jump objective with expected squared jump
    delta = alpha * ||x' - x||^2; minimized."""

    sigma_min_sq: float = 1.0
    direction = "min"

    def __post_init__(self):
        if self.sigma_min_sq <= 0:
            raise ConfigError("sigma_min_sq must be positive")

    def value_t(self, batch: Batch) -> Tensor:
        log_delta = batch.log_alpha + ad.log(batch.sq_jump)
        inv = ad.exp(-log_delta) * self.sigma_min_sq
        fwd = ad.exp(log_delta) * (1.0 / self.sigma_min_sq)
        return (inv - fwd).mean()


@dataclass(frozen=True)
class Gsm:
    """Speed measure: proposal entropy plus log acceptance, maximized, with
    beta adapted toward a user-specified acceptance rate between updates."""

    beta: float = 1.0
    rho_beta: float = 0.02
    target_alpha: float = 0.234
    direction = "max"

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if not 0.0 < self.target_alpha < 1.0:
            raise ConfigError("target_alpha must lie in (0, 1)")

    def value_t(self, batch: Batch) -> Tensor:
        return (-self.beta * batch.log_g_forward + batch.log_alpha).mean()


def gsm_beta_update(gsm: Gsm, current_alpha: float) -> Gsm:
    """beta <- beta * (1 + rho_beta * (alpha_current - alpha_target)).

    A larger beta rewards proposal entropy more, widening the proposal and
    lowering acceptance; raising beta while acceptance is above target (and
    lowering it below) therefore steers acceptance toward the target. The
    opposite sign is a positive-feedback loop that diverges.
    """
    if not 0.0 <= current_alpha <= 1.0:
        raise ConfigError("current_alpha must lie in [0, 1]")
    return replace(
        gsm, beta=gsm.beta * (1.0 + gsm.rho_beta * (current_alpha - gsm.target_alpha))
    )


@dataclass(frozen=True)
class Nll:
    """Negative log-likelihood of the batch's starting points under an
    unconditional (resampling) proposal; minimized. Trains the proposal to
    match the target directly."""

    direction = "min"

    def value_t(self, batch: Batch) -> Tensor:
        x = ad.constant(batch.x)
        return -batch.proposal.log_density_t(batch.theta, x, x).mean()


@dataclass(frozen=True)
class WeightedCombo:
    """Positive weighted combination, sign-normalized to a minimization."""

    components: tuple
    weights: tuple
    direction = "min"

    def __post_init__(self):
        if len(self.components) != len(self.weights) or not self.components:
            raise ConfigError("need matching, non-empty components and weights")
        if any(w <= 0 for w in self.weights):
            raise ConfigError("combination weights must be strictly positive")

    def value_t(self, batch: Batch) -> Tensor:
        total = None
        for comp, w in zip(self.components, self.weights):
            v = comp.value_t(batch)
            signed = v if comp.direction == "min" else -v
            term = signed * float(w)
            total = term if total is None else total + term
        return total


def combine(components, weights) -> WeightedCombo:
    return WeightedCombo(tuple(components), tuple(weights))


@dataclass
class BatchEstimate:
    value: float
    gradient: np.ndarray
    m_starts: int
    n_draws: int
    mean_log_alpha: float
    mean_kl_term: float
    acceptance: float


def estimate(objective, target: Target, proposal: Proposal, params: np.ndarray,
             starts: np.ndarray, rng, n_draws: int = 1) -> BatchEstimate:
    """Evaluate an objective and its parameter gradient on a fresh batch."""
    theta = ad.constant(params)
    batch = Batch(target, proposal, theta, starts, n_draws, rng)
    value = objective.value_t(batch)
    if not np.isfinite(value.value):
        bad = np.flatnonzero(~np.isfinite(
            batch.log_alpha.value if "la" in batch._cache else batch.x_prime.value
        ))
        raise TrainingError(
            f"non-finite objective estimate (first bad index {bad[:1]}) at "
            f"start {batch.x[0]}"
        )
    value.backward()
    # Parameter-free proposals (exact resamplers) never enter the graph.
    gradient = theta.grad.copy() if theta.grad is not None else np.zeros_like(params)
    if isinstance(objective, Nll):
        mean_log_alpha = 0.0
        acceptance = 1.0
        kl = float("nan")
    else:
        mean_log_alpha = float(batch.log_alpha.value.mean())
        acceptance = batch.mean_acceptance
        kl = float((batch.log_g_forward.value - batch.log_pi_prime.value).mean())
    return BatchEstimate(
        value=float(value.value),
        gradient=gradient,
        m_starts=batch.m_starts,
        n_draws=batch.n_draws,
        mean_log_alpha=mean_log_alpha,
        mean_kl_term=kl,
        acceptance=acceptance,
    )
