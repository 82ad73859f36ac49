"""Metropolis-Hastings stepping, chain execution, and a reference HMC sampler.

Chains are vectorized: a "state" is a (n_chains, d) array and one
``mh_step`` advances every chain with a single batched proposal draw and
density evaluation. Single chains are the n_chains=1 special case.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .proposals import AugmentedProposal, Proposal
from .targets import Target


class KernelError(RuntimeError):
    pass


def log_acceptance(log_pi_x, log_pi_prime, log_g_forward, log_g_reverse):
    """min(0, log pi(x') + log g(x|x') - log pi(x) - log g(x'|x))."""
    parts = [np.asarray(p, dtype=np.float64)
             for p in (log_pi_x, log_pi_prime, log_g_forward, log_g_reverse)]
    ratio = parts[1] + parts[3] - parts[0] - parts[2]
    if not np.all(np.isfinite(ratio)):
        raise KernelError("non-finite log-density entering the acceptance ratio")
    return np.minimum(0.0, ratio)


def mh_step(target: Target, proposal: Proposal, params: np.ndarray,
            state: np.ndarray, rng):
    """One batched MH step. Returns (new_state, accepted, log_alpha).

    For augmented proposals the auxiliary coordinates are redrawn from a
    standard gaussian before proposing, which leaves the joint target
    invariant because they are independent standard gaussians under it.
    """
    state = np.asarray(state, dtype=np.float64)
    single = state.ndim == 1
    if single:
        state = state[None, :]
    if isinstance(proposal, AugmentedProposal):
        state = proposal.refresh_aux(state, rng)
    x_prime = proposal.sample_np(params, state, rng)
    log_alpha = log_acceptance(
        target.log_density(state),
        target.log_density(x_prime),
        proposal.log_density_np(params, state, x_prime),
        proposal.log_density_np(params, x_prime, state),
    )
    accepted = np.log(rng.random(state.shape[0])) < log_alpha
    new_state = np.where(accepted[:, None], x_prime, state)
    if single:
        return new_state[0], bool(accepted[0]), float(log_alpha[0])
    return new_state, accepted, log_alpha


@dataclass
class ChainTrace:
    """States (n_steps+1, d), per-step accept flags and log alphas."""

    states: np.ndarray
    accept_flags: np.ndarray
    log_alphas: np.ndarray
    seed: int = None

    def __post_init__(self):
        if self.states.shape[0] != self.accept_flags.shape[0] + 1:
            raise KernelError("trace length mismatch between states and flags")
        if self.accept_flags.shape[0] != self.log_alphas.shape[0]:
            raise KernelError("trace length mismatch between flags and alphas")

    @property
    def n_steps(self):
        return self.accept_flags.shape[0]


def run_chain(target: Target, proposal: Proposal, params: np.ndarray,
              start: np.ndarray, n_steps: int, rng, seed: int = None) -> ChainTrace:
    """Run one chain for n_steps proposals; returns the full trace."""
    if n_steps < 0:
        raise KernelError("n_steps must be non-negative")
    traces = run_chains(target, proposal, params,
                        np.asarray(start, dtype=np.float64)[None, :],
                        n_steps, rng, seed=seed)
    return traces[0]


def run_chains(target: Target, proposal: Proposal, params: np.ndarray,
               starts: np.ndarray, n_steps: int, rng, seed: int = None) -> list:
    """Advance several chains in lock-step; returns one ChainTrace each.

    For augmented proposals the stored states include the refreshed
    auxiliaries, so consecutive states differ in the auxiliary block even on
    rejection; metrics must therefore restrict to the data dimensions.
    """
    starts = np.asarray(starts, dtype=np.float64)
    n_chains = starts.shape[0]
    states = np.empty((n_steps + 1, n_chains, starts.shape[1]))
    flags = np.empty((n_steps, n_chains), dtype=bool)
    alphas = np.empty((n_steps, n_chains))
    states[0] = starts
    current = starts
    for k in range(n_steps):
        if n_chains == 1:
            new, acc, la = mh_step(target, proposal, params, current[0], rng)
            current = new[None, :]
            flags[k, 0], alphas[k, 0] = acc, la
        else:
            current, flags[k], alphas[k] = mh_step(
                target, proposal, params, current, rng)
        states[k + 1] = current
    return [ChainTrace(states[:, c], flags[:, c], alphas[:, c], seed=seed)
            for c in range(n_chains)]


# ---------------------------------------------------------------------------
# reference HMC sampler


@dataclass
class HmcSpec:
    leapfrog_steps: int = 10
    step_size: float = 0.1
    target_accept: float = 0.65
    max_divergence_halvings: int = 30


def _leapfrog(target, x, p, eps, n_steps):
    grad = target.grad_log_density(x)
    for _ in range(n_steps):
        p = p + 0.5 * eps * grad
        x = x + eps * p
        grad = target.grad_log_density(x)
        p = p + 0.5 * eps * grad
    return x, p


def hmc_reference_chain(target: Target, hmc: HmcSpec, n_steps: int,
                        burn_in: int, rng, start=None) -> ChainTrace:
    """HMC chain with step size tuned toward the target acceptance during
    burn-in (then frozen). Burn-in states are discarded from the trace.

    A trajectory with energy error above 1000 counts as divergent: the step
    size is halved and the step retried; persistent divergence is an error.
    """
    d = target.dim
    x = np.zeros(d) if start is None else np.asarray(start, dtype=np.float64)
    eps = hmc.step_size
    states = np.empty((n_steps + 1, d))
    flags = np.empty(n_steps, dtype=bool)
    alphas = np.empty(n_steps)
    total = burn_in + n_steps
    kept = 0
    for k in range(total):
        if k == burn_in:
            states[0] = x
        halvings = 0
        while True:
            p0 = rng.standard_normal(d)
            h0 = -target.log_density(x) + 0.5 * p0 @ p0
            x1, p1 = _leapfrog(target, x, p0, eps, hmc.leapfrog_steps)
            with np.errstate(over="ignore", invalid="ignore"):
                h1 = -target.log_density(x1) + 0.5 * p1 @ p1
            energy_error = h1 - h0
            if np.isfinite(energy_error) and energy_error < 1000.0:
                break
            eps *= 0.5
            halvings += 1
            if halvings > hmc.max_divergence_halvings:
                raise KernelError("persistent HMC divergence; step size collapsed")
        log_alpha = min(0.0, -energy_error)
        accepted = np.log(rng.random()) < log_alpha
        if accepted:
            x = x1
        if k < burn_in:
            # Robbins-Monro adjustment toward the target acceptance rate.
            gamma = 1.0 / np.sqrt(k + 1.0)
            eps = float(np.exp(np.log(eps)
                               + gamma * (np.exp(log_alpha) - hmc.target_accept)))
        else:
            flags[kept] = accepted
            alphas[kept] = log_alpha
            states[kept + 1] = x
            kept += 1
    if n_steps == 0:
        states[0] = x
    hmc.step_size = eps
    return ChainTrace(states, flags, alphas)


def trace_states(trace: ChainTrace, data_dim: int = None) -> np.ndarray:
    states = trace.states
    return states if data_dim is None else states[:, :data_dim]


# ---------------------------------------------------------------------------
# trace persistence


def save_trace(path_prefix, trace: ChainTrace, meta: dict = None):
    """Write ``<prefix>.bin`` (raw float64 states) and a JSON sidecar."""
    states = np.ascontiguousarray(trace.states, dtype=np.float64)
    payload = states.tobytes()
    with open(f"{path_prefix}.bin", "wb") as fh:
        fh.write(payload)
    sidecar = {
        "shape": list(states.shape),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "accept_flags": trace.accept_flags.astype(int).tolist(),
        "log_alphas": trace.log_alphas.tolist(),
        "seed": trace.seed,
    }
    if meta:
        sidecar["meta"] = meta
    with open(f"{path_prefix}.json", "w") as fh:
        json.dump(sidecar, fh)
        fh.write("\n")


def load_trace(path_prefix) -> ChainTrace:
    with open(f"{path_prefix}.json") as fh:
        sidecar = json.load(fh)
    with open(f"{path_prefix}.bin", "rb") as fh:
        payload = fh.read()
    if hashlib.sha256(payload).hexdigest() != sidecar["sha256"]:
        raise KernelError("trace payload does not match its sidecar checksum")
    states = np.frombuffer(payload).reshape(sidecar["shape"]).copy()
    return ChainTrace(
        states,
        np.asarray(sidecar["accept_flags"], dtype=bool),
        np.asarray(sidecar["log_alphas"], dtype=np.float64),
        seed=sidecar.get("seed"),
    )
