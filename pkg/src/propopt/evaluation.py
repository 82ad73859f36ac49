"""Post-training efficiency measurement.

Acceptance rate and mean squared jump distance are pooled over chains;
effective sample size comes in a single-chain variant (autocorrelation sum
with initial-positive-sequence truncation) and a multi-chain variant (split
chains, between/within variance), both per dimension for the first (x) and
second (x^2) moments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kernels import ChainTrace, mh_step
from .proposals import AugmentedProposal, Proposal
from .targets import Target


class EvaluationError(ValueError):
    pass


def _data_dim(proposal_or_dim):
    if isinstance(proposal_or_dim, AugmentedProposal):
        return proposal_or_dim.data_dim
    return None


def acceptance_and_msjd(traces, data_dim: int = None):
    """Pooled acceptance rate and mean squared jump distance.

    Rejected steps contribute zero jumps; for augmented chains only the first
    ``data_dim`` coordinates count toward the jump distance.
    """
    if not traces:
        raise EvaluationError("need at least one chain trace")
    accepted = 0
    total = 0
    sq_sum = 0.0
    for trace in traces:
        states = trace.states if data_dim is None else trace.states[:, :data_dim]
        jumps = np.diff(states, axis=0)
        sq = np.einsum("ij,ij->i", jumps, jumps)
        sq[~trace.accept_flags] = 0.0
        sq_sum += sq.sum()
        accepted += int(trace.accept_flags.sum())
        total += trace.n_steps
    if total == 0:
        raise EvaluationError("traces contain no steps")
    return accepted / total, sq_sum / total


def evaluate_proposal(target: Target, proposal: Proposal, params: np.ndarray,
                      n_proposals: int, rng, starts: np.ndarray = None,
                      batch: int = 5000):
    """Acceptance and MSJD over single MH steps from i.i.d. target starts.

    This is the protocol used for step-size verification: each proposal is an
    independent one-step chain, so no sequential loop is needed.
    """
    data_dim = _data_dim(proposal)
    accepted = 0
    sq_sum = 0.0
    done = 0
    while done < n_proposals:
        b = min(batch, n_proposals - done)
        x = target.sample(rng, b) if starts is None else starts[done : done + b]
        if isinstance(proposal, AugmentedProposal):
            x = proposal.refresh_aux(x, rng)
        new, acc, _ = mh_step(target, proposal, params, x, rng)
        xs = x if data_dim is None else x[:, :data_dim]
        ns = new if data_dim is None else new[:, :data_dim]
        jumps = ns - xs
        sq = np.einsum("ij,ij->i", jumps, jumps)
        sq[~acc] = 0.0
        accepted += int(acc.sum())
        sq_sum += sq.sum()
        done += b
    return accepted / n_proposals, sq_sum / n_proposals


# ---------------------------------------------------------------------------
# effective sample size


def _autocovariances(series: np.ndarray) -> np.ndarray:
    """Biased autocovariance estimates via FFT, lags 0..N-1."""
    n = series.shape[0]
    centered = series - series.mean()
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    return acov


def ess_single_chain(series) -> float:
    """N / (1 + 2 sum rho_t) with the pairwise initial-positive-sequence rule:
    successive autocorrelation pairs are summed until a pair sum goes
    non-positive, guaranteeing a positive truncated total."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or series.shape[0] < 10:
        raise EvaluationError("need a 1-D series of length >= 10")
    acov = _autocovariances(series)
    if acov[0] <= 0.0:
        raise EvaluationError("constant series has no effective sample size")
    rho = acov / acov[0]
    n = series.shape[0]
    tau = -1.0  # pairs Gamma_k = rho_{2k} + rho_{2k+1} start at rho_0 + rho_1
    k = 0
    while 2 * k + 1 < n:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        k += 1
    tau = max(tau, 1e-12)
    return n / tau


def ess_multichain(chains, moment: str = "first") -> np.ndarray:
    """Split-chain between/within-variance ESS per dimension.

    ``chains`` is an array-like of shape (n_chains, n_draws, dim). Each chain
    is split in half; the pooled autocorrelations are truncated with the same
    initial-positive-sequence rule as the single-chain estimator. Returns the
    ESS per dimension for the first (x) or second (x^2) moment series.
    """
    chains = np.asarray(chains, dtype=np.float64)
    if chains.ndim == 2:
        chains = chains[:, :, None]
    if chains.ndim != 3 or chains.shape[0] < 2:
        raise EvaluationError("need >= 2 chains of shape (n_draws, dim)")
    if moment == "second":
        chains = chains ** 2
    elif moment != "first":
        raise EvaluationError(f"unknown moment {moment!r}")
    c, n, dim = chains.shape
    half = n // 2
    if half < 5:
        raise EvaluationError("chains too short to split")
    split = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    m, n = split.shape[0], half
    out = np.empty(dim)
    for j in range(dim):
        seqs = split[:, :, j]
        means = seqs.mean(axis=1)
        variances = seqs.var(axis=1, ddof=1)
        w = variances.mean()
        b = n * means.var(ddof=1)
        var_plus = (n - 1) / n * w + b / n
        if var_plus <= 0.0 or w <= 0.0:
            raise EvaluationError(f"degenerate chains in dimension {j}")
        acov = np.stack([_autocovariances(seqs[i]) for i in range(m)])
        mean_acov = acov.mean(axis=0) * n / (n - 1)
        rho = 1.0 - (w - mean_acov) / var_plus
        tau = -1.0
        k = 0
        while 2 * k + 1 < n:
            pair = rho[2 * k] + rho[2 * k + 1]
            if pair <= 0.0:
                break
            tau += 2.0 * pair
            k += 1
        tau = max(tau, 1e-12)
        out[j] = m * n / tau
    return out


def ess_summary(chains, total_proposals: int) -> dict:
    """Min/median/max per-proposal ESS over dimensions, for both moments."""
    summary = {}
    for moment in ("first", "second"):
        ess = ess_multichain(chains, moment) / total_proposals
        summary[moment] = {
            "min": float(np.min(ess)),
            "median": float(np.median(ess)),
            "max": float(np.max(ess)),
        }
    return summary


def replicate_stats(values):
    """Mean and standard error over replicates."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise EvaluationError("need at least 2 replicate values")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def ab_initio_score(target: Target, proposal: Proposal, params: np.ndarray,
                    n_eval: int, rng, starts: np.ndarray = None,
                    A: float = 0.18125, scaling: str = "linear_d",
                    batch: int = 5000):
    """Cross-scheme efficiency score: the fitted objective estimated over
    n_eval start/draw pairs (lower is better)."""
    from . import objectives

    spec = objectives.AbInitio(A=A, scaling=scaling)
    values = []
    done = 0
    while done < n_eval:
        b = min(batch, n_eval - done)
        x = target.sample(rng, b) if starts is None else starts[done : done + b]
        if isinstance(proposal, AugmentedProposal):
            x = proposal.refresh_aux(np.asarray(x, dtype=np.float64), rng)
        est = objectives.estimate(spec, target, proposal, params, x, rng, n_draws=1)
        values.append((est.value, b))
        done += b
    score = sum(v * w for v, w in values) / n_eval
    return score


@dataclass
class MetricsReport:
    acceptance_rate: float
    msjd: float
    ess_per_proposal: dict = None
    ab_initio_loss: float = None
    n_chains: int = None
    n_proposals: int = None
    replicate_id: int = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "acceptance_rate": self.acceptance_rate,
            "msjd": self.msjd,
            "ess_per_proposal": self.ess_per_proposal,
            "ab_initio_loss": self.ab_initio_loss,
            "n_chains": self.n_chains,
            "n_proposals": self.n_proposals,
            "replicate_id": self.replicate_id,
        }
        out.update(self.extras)
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
