"""Gradient-update procedures, full optimization loops, and coefficient fits.

Two update procedures are provided: the sampling form (fresh starts drawn
from the target every step) and the online-adaptation form (persistent
chains supply the starts and advance one MH step after each update).

``fit_coefficient`` calibrates the scale coefficient of the fitted objective
so that a reference optimization recovers a known optimal acceptance rate,
either by secant iteration on a single reference or by a per-reference
linear fit of acceptance against the coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import objectives
from .evaluation import evaluate_proposal
from .kernels import mh_step
from .nn import AdamState, ConfigError, TrainingError, adam_step
from .proposals import Proposal
from .targets import Target


@dataclass
class TrainSpec:
    algorithm: str = "sampling"  # "sampling" (fresh starts) or "online"
    n_steps: int = 20000
    m_starts: int = 1
    n_draws: int = 50
    step_size: float = 3e-4
    seed: int = 0
    loss_every: int = 100
    max_restarts: int = 0
    restart_tolerance: float = 0.25  # plateau threshold relative to best loss

    def __post_init__(self):
        if self.algorithm not in ("sampling", "online"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.m_starts < 1 or self.n_draws < 1 or self.n_steps < 1:
            raise ConfigError("n_steps, m_starts and n_draws must be >= 1")


@dataclass
class StepReport:
    loss: float
    acceptance: float
    skipped: bool = False


@dataclass
class OptimizeResult:
    params: np.ndarray
    loss_curve: list  # (step, loss) pairs
    final_objective: object  # objective after any online hyperparameter updates
    restarts_used: int = 0
    final_loss: float = None


def _signed_gradient(objective, est: objectives.BatchEstimate) -> np.ndarray:
    # Adam minimizes; maximized objectives descend the negated gradient.
    return -est.gradient if objective.direction == "max" else est.gradient


def _signed_loss(objective, value: float) -> float:
    return -value if objective.direction == "max" else value


def _draw_starts(target, start_pool, m, rng):
    if start_pool is None:
        return target.sample(rng, m)
    idx = rng.integers(0, start_pool.shape[0], size=m)
    return start_pool[idx]


def algorithm1_step(objective, target: Target, proposal: Proposal,
                    params: np.ndarray, m_starts: int, n_draws: int,
                    optimizer: AdamState, rng, start_pool=None):
    """One update with fresh starts from the target (or a stored reference
    pool approximating it). Applies one optimizer step in place."""
    starts = _draw_starts(target, start_pool, m_starts, rng)
    try:
        est = objectives.estimate(objective, target, proposal, params,
                                  starts, rng, n_draws)
    except TrainingError:
        return StepReport(loss=float("nan"), acceptance=float("nan"), skipped=True)
    adam_step(optimizer, params, _signed_gradient(objective, est))
    return StepReport(loss=est.value, acceptance=est.acceptance)


def algorithm2_step(objective, target: Target, proposal: Proposal,
                    params: np.ndarray, persistent_states: np.ndarray,
                    n_draws: int, optimizer: AdamState, rng):
    """One update with starts taken from persistent chains; afterwards each
    chain advances one MH step under the updated parameters."""
    try:
        est = objectives.estimate(objective, target, proposal, params,
                                  persistent_states, rng, n_draws)
    except TrainingError:
        return (StepReport(loss=float("nan"), acceptance=float("nan"),
                           skipped=True), persistent_states)
    adam_step(optimizer, params, _signed_gradient(objective, est))
    new_states, _, _ = mh_step(target, proposal, params, persistent_states, rng)
    return StepReport(loss=est.value, acceptance=est.acceptance), new_states


def _run_once(objective, target, proposal, train: TrainSpec, seed,
              init_params=None, start_pool=None):
    rng = np.random.default_rng(seed)
    params = (proposal.init_params(rng) if init_params is None
              else np.array(init_params, dtype=np.float64))
    optimizer = AdamState(step_size=train.step_size)
    curve = []
    obj = objective
    if train.algorithm == "online":
        states = _draw_starts(target, start_pool, train.m_starts, rng)
    for step in range(train.n_steps):
        if train.algorithm == "online":
            report, states = algorithm2_step(
                obj, target, proposal, params, states, train.n_draws,
                optimizer, rng)
        else:
            report = algorithm1_step(
                obj, target, proposal, params, train.m_starts, train.n_draws,
                optimizer, rng, start_pool=start_pool)
        if isinstance(obj, objectives.Gsm) and not report.skipped:
            obj = objectives.gsm_beta_update(obj, report.acceptance)
        if step % train.loss_every == 0 or step == train.n_steps - 1:
            curve.append((step, _signed_loss(objective, report.loss)))
    tail = [v for _, v in curve[-max(1, len(curve) // 10):] if np.isfinite(v)]
    final_loss = float(np.mean(tail)) if tail else float("nan")
    return OptimizeResult(params=params, loss_curve=curve, final_objective=obj,
                          final_loss=final_loss)


def optimize(objective, target: Target, proposal: Proposal, train: TrainSpec,
             init_params=None, start_pool=None,
             reference_loss: float = None) -> OptimizeResult:
    """Run the configured optimization, with optional plateau restarts.

    When ``reference_loss`` (typically the best loss seen across replicates)
    is supplied and ``max_restarts`` > 0, a run whose smoothed final loss
    exceeds the reference by more than ``restart_tolerance`` (relative) is
    discarded as a poor local optimum and retried under a fresh seed.
    """
    best = None
    restarts = 0
    for attempt in range(train.max_restarts + 1):
        result = _run_once(objective, target, proposal, train,
                           train.seed + 7919 * attempt, init_params, start_pool)
        if best is None or result.final_loss < best.final_loss:
            best = result
        restarts = attempt
        if reference_loss is None or not np.isfinite(best.final_loss):
            break
        threshold = reference_loss + abs(reference_loss) * train.restart_tolerance
        if best.final_loss <= threshold:
            break
    best.restarts_used = restarts
    return best


# ---------------------------------------------------------------------------
# coefficient fitting


@dataclass
class FitReference:
    target: Target
    make_proposal: object  # () -> Proposal
    target_alpha: float
    init_params: np.ndarray = None

    def __post_init__(self):
        if not 0.0 < self.target_alpha < 1.0:
            raise ConfigError("target_alpha must lie in (0, 1)")


@dataclass
class FitSpec:
    references: list
    method: str = "secant"  # "secant" or "linear"
    inner_train: TrainSpec = None
    initial_A: float = 0.2
    tolerance_on_alpha: float = 0.01
    n_eval: int = 25000
    max_outer: int = 12
    probes: tuple = (0.1, 0.2, 0.3)  # coefficients probed by the linear fit
    scaling: str = "linear_d"


@dataclass
class FitResult:
    A: float
    history: list  # (A, measured alpha per reference)
    converged: bool


def _alpha_at(A, ref: FitReference, fit: FitSpec, seed):
    proposal = ref.make_proposal()
    objective = objectives.AbInitio(A=A, scaling=fit.scaling)
    train = replace(fit.inner_train, seed=seed)
    result = optimize(objective, ref.target, proposal, train,
                      init_params=ref.init_params)
    rng = np.random.default_rng(seed + 77)
    acc, _ = evaluate_proposal(ref.target, proposal, result.params,
                               fit.n_eval, rng)
    return acc


def fit_coefficient(fit: FitSpec) -> FitResult:
    """Calibrate the coefficient so references hit their target acceptances."""
    if not fit.references:
        raise ConfigError("need at least one fit reference")
    if fit.inner_train is None:
        raise ConfigError("fit requires an inner training spec")
    history = []
    if fit.method == "secant":
        if len(fit.references) != 1:
            raise ConfigError("secant fitting uses exactly one reference")
        ref = fit.references[0]
        a_prev = fit.initial_A
        f_prev = _alpha_at(a_prev, ref, fit, fit.inner_train.seed) - ref.target_alpha
        history.append((a_prev, f_prev + ref.target_alpha))
        if abs(f_prev) <= fit.tolerance_on_alpha:
            return FitResult(A=a_prev, history=history, converged=True)
        # Larger coefficients penalize rejection more, raising acceptance.
        a_cur = a_prev * (1.25 if f_prev < 0 else 0.8)
        for it in range(fit.max_outer):
            f_cur = (_alpha_at(a_cur, ref, fit, fit.inner_train.seed + it + 1)
                     - ref.target_alpha)
            history.append((a_cur, f_cur + ref.target_alpha))
            if abs(f_cur) <= fit.tolerance_on_alpha:
                return FitResult(A=a_cur, history=history, converged=True)
            denom = f_cur - f_prev
            if denom == 0.0:
                break
            a_next = a_cur - f_cur * (a_cur - a_prev) / denom
            a_next = min(max(a_next, 0.25 * a_cur), 4.0 * a_cur)
            a_prev, f_prev, a_cur = a_cur, f_cur, a_next
        raise TrainingError(
            f"coefficient fit failed to converge; history={history}")
    if fit.method == "linear":
        # Per reference, fit alpha(A) ~ intercept + slope * A from the probes,
        # then minimize the total squared acceptance gap in closed form.
        slopes, intercepts, targets_a = [], [], []
        for r_idx, ref in enumerate(fit.references):
            alphas = []
            for p_idx, a_probe in enumerate(fit.probes):
                alpha = _alpha_at(a_probe, ref, fit,
                                  fit.inner_train.seed + 100 * r_idx + p_idx)
                alphas.append(alpha)
                history.append((a_probe, alpha))
            slope, intercept = np.polyfit(fit.probes, alphas, 1)
            slopes.append(slope)
            intercepts.append(intercept)
            targets_a.append(ref.target_alpha)
        slopes, intercepts = np.asarray(slopes), np.asarray(intercepts)
        gaps = np.asarray(targets_a) - intercepts
        denom = float(np.dot(slopes, slopes))
        if denom == 0.0:
            raise TrainingError("degenerate linear fit: zero slopes")
        a_star = float(np.dot(slopes, gaps) / denom)
        return FitResult(A=a_star, history=history, converged=True)
    raise ConfigError(f"unknown fit method {fit.method!r}")
