"""ReLU MLPs over flat parameter vectors, additive-coupling flows, and Adam.

All networks operate on batched inputs of shape (batch, dim) and take their
parameters as a single flat tensor so the whole model can be trained as one
vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    """Fully-connected ReLU network: input -> hidden x hidden_layers -> output.

    ``final_transform`` is one of "identity", "exp" (componentwise, strictly
    positive outputs) or "softmax" (positive, rows sum to 1).
    """

    input_dim: int
    hidden_dim: int
    hidden_layers: int
    output_dim: int
    final_transform: str = "identity"

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise ConfigError("MLP dimensions must be positive")
        if self.hidden_layers < 0:
            raise ConfigError("hidden_layers must be non-negative")
        if self.final_transform not in ("identity", "exp", "softmax"):
            raise ConfigError(f"unknown final_transform {self.final_transform!r}")

    def layer_dims(self) -> list:
        if self.hidden_layers == 0:
            return [(self.input_dim, self.output_dim)]
        dims = [(self.input_dim, self.hidden_dim)]
        dims += [(self.hidden_dim, self.hidden_dim)] * (self.hidden_layers - 1)
        dims.append((self.hidden_dim, self.output_dim))
        return dims

    @property
    def param_count(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_dims())

    def init_params(self, rng: np.random.Generator, zero_last: bool = False) -> np.ndarray:
        """Uniform[-s, s] weights with s = fan_in**-0.5 and zero biases.

        ``zero_last`` zeroes the final layer so the network starts as the zero
        function (exp-transformed outputs then start at one).
        """
        chunks = []
        dims = self.layer_dims()
        for k, (fan_in, fan_out) in enumerate(dims):
            s = fan_in ** -0.5
            w = rng.uniform(-s, s, size=fan_in * fan_out)
            if zero_last and k == len(dims) - 1:
                w = np.zeros(fan_in * fan_out)
            chunks.append(w)
            chunks.append(np.zeros(fan_out))
        return np.concatenate(chunks)


def mlp_apply(spec: MlpSpec, params: Tensor, x: Tensor) -> Tensor:
    """Forward pass of ``spec`` with flat parameter tensor ``params``.

    ``x`` has shape (batch, input_dim); the result has shape
    (batch, output_dim) and is differentiable w.r.t. both arguments.
    """
    params = ad.wrap(params)
    x = ad.wrap(x)
    if x.value.ndim != 2 or x.value.shape[1] != spec.input_dim:
        raise ConfigError(
            f"MLP input shape {x.value.shape} incompatible with input_dim={spec.input_dim}"
        )
    if params.value.shape != (spec.param_count,):
        raise ConfigError(
            f"parameter vector length {params.value.shape} != {spec.param_count}"
        )
    off = 0
    h = x
    dims = spec.layer_dims()
    for k, (fan_in, fan_out) in enumerate(dims):
        w = params.narrow(off, fan_in * fan_out).reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params.narrow(off, fan_out)
        off += fan_out
        h = h @ w + b
        if k < len(dims) - 1:
            h = ad.relu(h)
    if spec.final_transform == "exp":
        h = ad.exp(h)
    elif spec.final_transform == "softmax":
        h = ad.exp(h - ad.logsumexp(h, axis=-1).reshape(-1, 1))
    return h


@dataclass(frozen=True)
class NiceFlowSpec:
    """Volume-preserving flow built from additive coupling layers.

    Each layer shifts one half of the coordinates by an MLP of the other half,
    alternating which half is shifted. The Jacobian log-determinant is exactly
    zero.
    """

    dim: int
    coupling_layers: int
    net: MlpSpec = None

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2 != 0:
            raise ConfigError("flow dimension must be an even integer >= 2")
        if self.coupling_layers < 1:
            raise ConfigError("need at least one coupling layer")
        if self.net is None:
            object.__setattr__(
                self,
                "net",
                MlpSpec(self.dim // 2, 3 * self.dim, 3, self.dim // 2),
            )
        if self.net.input_dim != self.dim // 2 or self.net.output_dim != self.dim // 2:
            raise ConfigError("coupling net must map dim/2 -> dim/2")

    @property
    def param_count(self) -> int:
        return self.coupling_layers * self.net.param_count

    def init_params(self, rng: np.random.Generator, zero_last: bool = True) -> np.ndarray:
        return np.concatenate(
            [self.net.init_params(rng, zero_last=zero_last) for _ in range(self.coupling_layers)]
        )


def _coupling_pass(flow: NiceFlowSpec, params: Tensor, z: Tensor, inverse: bool) -> Tensor:
    params = ad.wrap(params)
    z = ad.wrap(z)
    if z.value.ndim != 2 or z.value.shape[1] != flow.dim:
        raise ConfigError(f"flow input shape {z.value.shape} != (batch, {flow.dim})")
    h = flow.dim // 2
    n = flow.net.param_count
    layers = range(flow.coupling_layers)
    for k in reversed(layers) if inverse else layers:
        theta_k = params.narrow(k * n, n)
        a, b = z.cols(0, h), z.cols(h, flow.dim)
        if k % 2 == 0:
            shift = mlp_apply(flow.net, theta_k, a)
            b = b - shift if inverse else b + shift
        else:
            shift = mlp_apply(flow.net, theta_k, b)
            a = a - shift if inverse else a + shift
        z = ad.concat_cols([a, b])
    return z


def nice_forward(flow: NiceFlowSpec, params, z):
    """Map latent -> data. Returns (x, log_det); log_det is exactly 0."""
    return _coupling_pass(flow, params, z, inverse=False), 0.0


def nice_inverse(flow: NiceFlowSpec, params, x):
    """Map data -> latent, the exact inverse of ``nice_forward``."""
    return _coupling_pass(flow, params, x, inverse=True), 0.0


@dataclass
class AdamState:
    """Bias-corrected Adam over a flat parameter vector."""

    step_size: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    first_moment: np.ndarray = None
    second_moment: np.ndarray = None
    step_count: int = 0

    def _ensure(self, n: int):
        if self.first_moment is None:
            self.first_moment = np.zeros(n)
            self.second_moment = np.zeros(n)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One Adam update applied in place; returns ``params``."""
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise TrainingError(f"non-finite gradient at parameter index {bad}")
    state._ensure(params.size)
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    m *= state.beta1
    m += (1.0 - state.beta1) * grads
    v *= state.beta2
    v += (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    params -= state.step_size * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params
