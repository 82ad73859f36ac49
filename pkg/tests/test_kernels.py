"""Kernel correctness: acceptance-ratio oracle, stationarity of the MH chain
against exact target moments, HMC tuning behavior, and trace persistence."""

import numpy as np
import pytest

from propopt.kernels import (
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
from propopt.proposals import AugmentedProposal, IsoMala, IsoRwm, TargetResampler
from propopt.targets import AugmentedTarget, GaussianMixtureCross, IsoGaussian


def test_log_acceptance_formula():
    got = log_acceptance(
        np.array([-1.0, -1.0]),
        np.array([-2.0, -0.5]),
        np.array([0.3, 0.3]),
        np.array([0.1, 0.1]),
    )
    want = np.minimum(0.0, np.array([-2.0 + 0.1 + 1.0 - 0.3,
                                     -0.5 + 0.1 + 1.0 - 0.3]))
    assert np.allclose(got, want)
    with pytest.raises(KernelError):
        log_acceptance(np.array([np.nan]), np.array([0.0]),
                       np.array([0.0]), np.array([0.0]))


def test_mh_step_symmetric_proposal_alpha_is_density_ratio():
    target = IsoGaussian(2)
    prop = IsoRwm(2)
    params = np.array([np.log(0.8)])
    state = np.array([[0.5, -0.3], [2.0, 1.0]])
    rng = np.random.default_rng(0)
    new, acc, la = mh_step(target, prop, params, state, rng)
    assert new.shape == state.shape
    # Rejected chains stay put, accepted ones move.
    moved = ~np.all(new == state, axis=1)
    assert np.array_equal(moved, acc)
    assert np.all(la <= 0.0)


def test_mh_chain_preserves_gaussian_moments():
    """Long RWM chain on the iso gaussian: stationarity oracle. With tau at
    the 0.234-style scaling the chain mixes well in 2 dimensions."""
    target = IsoGaussian(2)
    prop = IsoRwm(2)
    params = np.array([np.log(1.6)])
    rng = np.random.default_rng(1)
    trace = run_chain(target, prop, params, np.zeros(2), 60000, rng)
    x = trace.states[2000:]
    assert np.abs(x.mean(axis=0)).max() < 0.05
    assert np.abs(x.var(axis=0) - 1.0).max() < 0.06


def test_exact_resampler_always_accepts():
    target = GaussianMixtureCross()
    prop = TargetResampler(target)
    rng = np.random.default_rng(2)
    traces = run_chains(target, prop, np.zeros(0), target.sample(rng, 3),
                        200, rng)
    for t in traces:
        assert t.accept_flags.all()
        assert np.allclose(t.log_alphas, 0.0, atol=1e-10)


def test_mala_chain_preserves_gaussian_moments():
    target = IsoGaussian(3)
    prop = IsoMala(3, target)
    params = np.array([np.log(0.5)])
    rng = np.random.default_rng(3)
    trace = run_chain(target, prop, params, np.zeros(3), 40000, rng)
    x = trace.states[2000:]
    assert np.abs(x.mean(axis=0)).max() < 0.05
    assert np.abs(x.var(axis=0) - 1.0).max() < 0.06


def test_run_chains_lockstep_matches_trace_invariants():
    target = IsoGaussian(2)
    prop = IsoRwm(2)
    params = np.array([np.log(1.0)])
    rng = np.random.default_rng(4)
    starts = target.sample(rng, 4)
    traces = run_chains(target, prop, params, starts, 50, rng, seed=11)
    assert len(traces) == 4
    for i, t in enumerate(traces):
        assert t.n_steps == 50
        assert np.array_equal(t.states[0], starts[i])
        assert t.seed == 11
        # On rejection the state is unchanged; on acceptance it moved.
        diffs = np.any(t.states[1:] != t.states[:-1], axis=1)
        assert np.array_equal(diffs, t.accept_flags)


def test_augmented_proposal_refreshes_aux_inside_step():
    base_target = GaussianMixtureCross()
    target = AugmentedTarget(base_target, 2)
    inner = IsoRwm(4)
    prop = AugmentedProposal(inner, 2)
    params = np.array([np.log(0.8)])
    rng = np.random.default_rng(5)
    trace = run_chain(target, prop, params, np.zeros(4), 200, rng)
    # Aux coords change every step (refresh), data coords only on acceptance.
    aux_moves = np.any(trace.states[1:, 2:] != trace.states[:-1, 2:], axis=1)
    assert aux_moves.all()


def test_chain_trace_length_validation():
    with pytest.raises(KernelError):
        ChainTrace(np.zeros((5, 2)), np.zeros(5, dtype=bool), np.zeros(5))
    with pytest.raises(KernelError):
        ChainTrace(np.zeros((5, 2)), np.zeros(4, dtype=bool), np.zeros(3))
    with pytest.raises(KernelError):
        run_chain(IsoGaussian(1), IsoRwm(1), np.array([0.0]),
                  np.zeros(1), -1, np.random.default_rng(0))


def test_hmc_tunes_toward_target_acceptance():
    target = IsoGaussian(5)
    spec = HmcSpec(leapfrog_steps=10, step_size=1.5, target_accept=0.65)
    rng = np.random.default_rng(6)
    trace = hmc_reference_chain(target, spec, 4000, 1000, rng)
    acc = trace.accept_flags.mean()
    assert 0.5 < acc < 0.85
    x = trace.states
    assert np.abs(x.var(axis=0) - 1.0).max() < 0.1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_hmc_divergence_guard():
    class Explosive(IsoGaussian):
        def _grad(self, x):
            return -1e6 * x ** 3

    target = Explosive(2)
    spec = HmcSpec(step_size=10.0, max_divergence_halvings=2)
    with pytest.raises(KernelError):
        hmc_reference_chain(target, spec, 10, 0, np.random.default_rng(7),
                            start=np.ones(2) * 5)


def test_trace_save_load_roundtrip(tmp_path):
    target = IsoGaussian(2)
    prop = IsoRwm(2)
    rng = np.random.default_rng(8)
    trace = run_chain(target, prop, np.array([0.0]), np.zeros(2), 30, rng,
                      seed=9)
    prefix = str(tmp_path / "trace")
    save_trace(prefix, trace, meta={"note": "unit"})
    back = load_trace(prefix)
    assert np.array_equal(back.states, trace.states)
    assert np.array_equal(back.accept_flags, trace.accept_flags)
    assert np.allclose(back.log_alphas, trace.log_alphas)
    assert back.seed == 9


def test_trace_checksum_detects_corruption(tmp_path):
    target = IsoGaussian(1)
    trace = run_chain(target, IsoRwm(1), np.array([0.0]), np.zeros(1), 10,
                      np.random.default_rng(10))
    prefix = str(tmp_path / "trace")
    save_trace(prefix, trace)
    raw = bytearray(open(prefix + ".bin", "rb").read())
    raw[3] ^= 0xFF
    open(prefix + ".bin", "wb").write(bytes(raw))
    with pytest.raises(KernelError):
        load_trace(prefix)
