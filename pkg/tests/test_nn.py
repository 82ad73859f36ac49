"""Network, flow, and optimizer oracles: MLP outputs against a hand-rolled
numpy forward pass, NICE invertibility and volume preservation, Adam against
an independent reference implementation."""

import numpy as np
import pytest

from propopt import autodiff as ad
from propopt.nn import (
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


def reference_mlp(spec, params, x):
    """Plain-numpy forward pass, unpacking the flat parameter vector in the
    layer order given by MlpSpec.layer_dims()."""
    out = x
    offset = 0
    dims = spec.layer_dims()
    for i, (d_in, d_out) in enumerate(dims):
        w = params[offset : offset + d_in * d_out].reshape(d_in, d_out)
        offset += d_in * d_out
        b = params[offset : offset + d_out]
        offset += d_out
        out = out @ w + b
        if i < len(dims) - 1:
            out = np.maximum(out, 0.0)
    assert offset == params.size
    if spec.final_transform == "exp":
        out = np.exp(out)
    elif spec.final_transform == "softmax":
        out = np.exp(out - out.max(axis=-1, keepdims=True))
        out = out / out.sum(axis=-1, keepdims=True)
    return out


@pytest.mark.parametrize("final", ["identity", "exp", "softmax"])
def test_mlp_matches_reference(final):
    rng = np.random.default_rng(0)
    spec = MlpSpec(3, 8, 2, 4, final)
    params = spec.init_params(rng)
    x = rng.standard_normal((6, 3))
    got = mlp_apply(spec, ad.constant(params), ad.constant(x)).value
    want = reference_mlp(spec, params, x)
    assert np.allclose(got, want, atol=1e-12)


def test_mlp_param_count_matches_layer_dims():
    spec = MlpSpec(2, 16, 4, 2)
    want = sum(a * b + b for a, b in spec.layer_dims())
    assert spec.param_count == want
    assert spec.init_params(np.random.default_rng(1)).size == want


def test_mlp_zero_last_gives_zero_output():
    rng = np.random.default_rng(2)
    spec = MlpSpec(4, 8, 3, 2)
    params = spec.init_params(rng, zero_last=True)
    x = rng.standard_normal((5, 4))
    out = mlp_apply(spec, ad.constant(params), ad.constant(x)).value
    assert np.allclose(out, 0.0)


def test_mlp_init_scale_and_zero_biases():
    spec = MlpSpec(9, 8, 1, 2)
    params = spec.init_params(np.random.default_rng(3))
    w1 = params[: 9 * 8]
    b1 = params[9 * 8 : 9 * 8 + 8]
    assert np.abs(w1).max() <= 9 ** -0.5
    assert np.allclose(b1, 0.0)


def test_mlp_gradient_finite_diff():
    rng = np.random.default_rng(4)
    spec = MlpSpec(3, 5, 2, 2)
    params = spec.init_params(rng)
    x = rng.standard_normal((4, 3))

    def value(p):
        return float(
            mlp_apply(spec, ad.constant(p), ad.constant(x)).sum().value)

    leaf = ad.Tensor(params.copy())
    mlp_apply(spec, leaf, ad.constant(x)).sum().backward()
    eps = 1e-6
    idx = rng.integers(0, params.size, size=12)
    for i in idx:
        p = params.copy()
        p[i] += eps
        hi = value(p)
        p[i] -= 2 * eps
        lo = value(p)
        num = (hi - lo) / (2 * eps)
        assert abs(leaf.grad[i] - num) <= 1e-6 * max(1.0, abs(num))


# ---------------------------------------------------------------------------
# NICE flow


def test_nice_roundtrip_and_volume():
    rng = np.random.default_rng(5)
    flow = NiceFlowSpec(4, 6)
    params = rng.standard_normal(flow.param_count) * 0.1
    z = rng.standard_normal((20, 4))
    x, log_det = nice_forward(flow, ad.constant(params), ad.constant(z))
    back, _ = nice_inverse(flow, ad.constant(params), ad.constant(x.value))
    assert log_det == 0.0
    assert np.max(np.abs(back.value - z)) < 1e-10


def test_nice_volume_preservation_numerically():
    """Additive couplings have unit jacobian determinant; check via finite
    differences of the full jacobian on a small flow."""
    rng = np.random.default_rng(6)
    flow = NiceFlowSpec(2, 3)
    params = rng.standard_normal(flow.param_count) * 0.2
    z0 = rng.standard_normal(2)
    eps = 1e-6
    jac = np.zeros((2, 2))
    for j in range(2):
        zp, zm = z0.copy(), z0.copy()
        zp[j] += eps
        zm[j] -= eps
        fp = nice_forward(flow, ad.constant(params), ad.constant(zp[None]))[0].value[0]
        fm = nice_forward(flow, ad.constant(params), ad.constant(zm[None]))[0].value[0]
        jac[:, j] = (fp - fm) / (2 * eps)
    assert abs(np.linalg.det(jac) - 1.0) < 1e-6


def test_nice_zero_init_is_identity():
    flow = NiceFlowSpec(6, 4)
    params = flow.init_params(np.random.default_rng(7))  # zero_last default
    z = np.random.default_rng(8).standard_normal((5, 6))
    x, _ = nice_forward(flow, ad.constant(params), ad.constant(z))
    assert np.allclose(x.value, z)


def test_nice_requires_even_dim():
    with pytest.raises(ConfigError):
        NiceFlowSpec(3, 2)


def test_nice_alternating_layers_move_both_halves():
    rng = np.random.default_rng(9)
    flow = NiceFlowSpec(4, 2)
    params = rng.standard_normal(flow.param_count)
    z = rng.standard_normal((3, 4))
    x, _ = nice_forward(flow, ad.constant(params), ad.constant(z))
    assert not np.allclose(x.value[:, :2], z[:, :2])
    assert not np.allclose(x.value[:, 2:], z[:, 2:])


# ---------------------------------------------------------------------------
# Adam


def reference_adam(params, grads_seq, lr, b1=0.9, b2=0.999, eps=1e-8):
    p = params.copy()
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        p = p - lr * mh / (np.sqrt(vh) + eps)
    return p


def test_adam_matches_reference_sequence():
    rng = np.random.default_rng(10)
    params = rng.standard_normal(7)
    grads = [rng.standard_normal(7) for _ in range(25)]
    state = AdamState(step_size=0.01)
    p = params.copy()
    for g in grads:
        adam_step(state, p, g)
    want = reference_adam(params, grads, 0.01)
    assert np.allclose(p, want, atol=1e-12)


def test_adam_minimizes_quadratic():
    state = AdamState(step_size=0.05)
    p = np.array([5.0, -3.0])
    for _ in range(2000):
        adam_step(state, p, 2.0 * p)
    assert np.abs(p).max() < 1e-3


def test_adam_rejects_nonfinite_gradient():
    state = AdamState(step_size=0.01)
    p = np.zeros(3)
    bad = np.array([0.0, np.nan, 0.0])
    with pytest.raises(TrainingError) as err:
        adam_step(state, p, bad)
    assert "1" in str(err.value)  # offending index reported
