"""Target distributions: log-density, analytic score, direct sampling.

Every target works on batches of shape (batch, dim); single points of shape
(dim,) are promoted. Analytic kinds are fully normalized; the logistic
posterior is normalized only up to a constant, which cancels in acceptance
ratios and shifts objectives by a proposal-independent constant.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LOG_2PI = float(np.log(2.0 * np.pi))

# Mixture weight of the uniform component in the stabilized uniform target:
# 1 / (1 + e^-100), leaving a vanishing gaussian tail outside the cube.
UNIFORM_STABILIZER = 100.0


class ShapeError(ValueError):
    pass


class CapabilityError(RuntimeError):
    pass


def _batched(x, dim: int):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x, single


class Target:
    """Base class; subclasses fill in the per-kind math."""

    dim: int

    def log_density(self, x):
        x, single = _batched(x, self.dim)
        out = self._log_density(x)
        return float(out[0]) if single else out

    def grad_log_density(self, x):
        x, single = _batched(x, self.dim)
        out = self._grad(x)
        return out[0] if single else out

    def hessian_vector(self, x, v):
        x, single = _batched(x, self.dim)
        v, _ = _batched(v, self.dim)
        out = self._hvp(x, v)
        return out[0] if single else out

    def sample(self, rng: np.random.Generator, n: int = None):
        size = 1 if n is None else n
        out = self._sample(rng, size)
        return out[0] if n is None else out

    # hooks ------------------------------------------------------------------

    def _log_density(self, x):
        raise NotImplementedError

    def _grad(self, x):
        raise NotImplementedError

    def _hvp(self, x, v):
        raise CapabilityError(f"{type(self).__name__} has no Hessian-vector product")

    def _sample(self, rng, n):
        raise CapabilityError(
            f"{type(self).__name__} has no direct sampler; use an equilibrated "
            "reference chain (e.g. the tuned HMC sampler) instead"
        )

    # tape-differentiable views ---------------------------------------------

    def log_density_t(self, x: Tensor) -> Tensor:
        """Per-row log-density as a graph node; backward uses the analytic score."""
        x = ad.wrap(x)
        val = self._log_density(x.value)

        def bwd(g):
            x.grad += g[:, None] * self._grad(x.value)

        return ad.custom(val, (x,), bwd)

    def score_t(self, x: Tensor) -> Tensor:
        """Per-row score as a graph node; backward uses the Hessian-vector product."""
        x = ad.wrap(x)
        val = self._grad(x.value)

        def bwd(g):
            x.grad += self._hvp(x.value, g)

        return ad.custom(val, (x,), bwd)


@dataclass
class IsoGaussian(Target):
    dim: int

    def _log_density(self, x):
        return -0.5 * self.dim * LOG_2PI - 0.5 * np.einsum("ij,ij->i", x, x)

    def _grad(self, x):
        return -x

    def _hvp(self, x, v):
        return -v

    def _sample(self, rng, n):
        return rng.standard_normal((n, self.dim))


@dataclass
class IsoLaplace(Target):
    dim: int

    def _log_density(self, x):
        return -self.dim * np.log(2.0) - np.abs(x).sum(axis=1)

    def _grad(self, x):
        return -np.sign(x)

    def _hvp(self, x, v):
        return np.zeros_like(v)

    def _sample(self, rng, n):
        return rng.laplace(size=(n, self.dim))


@dataclass
class IsoCauchy(Target):
    dim: int

    def _log_density(self, x):
        return -self.dim * np.log(np.pi) - np.log1p(x * x).sum(axis=1)

    def _grad(self, x):
        return -2.0 * x / (1.0 + x * x)

    def _hvp(self, x, v):
        x2 = x * x
        return -2.0 * (1.0 - x2) / (1.0 + x2) ** 2 * v

    def _sample(self, rng, n):
        return rng.standard_cauchy((n, self.dim))


@dataclass
class StabilizedUniform(Target):
    """Mixture of Uniform([0,1]^d) and a standard gaussian with weights
    1/(1+e^-s) and 1/(1+e^s), giving positive density everywhere."""

    dim: int
    stabilizer: float = UNIFORM_STABILIZER

    @property
    def log_w_uniform(self):
        return -np.log1p(np.exp(-self.stabilizer))

    @property
    def log_w_gauss(self):
        return -self.stabilizer - np.log1p(np.exp(-self.stabilizer))

    def _log_gauss(self, x):
        return -0.5 * self.dim * LOG_2PI - 0.5 * np.einsum("ij,ij->i", x, x)

    def _log_density(self, x):
        inside = np.all((x >= 0.0) & (x <= 1.0), axis=1)
        log_unif = np.where(inside, 0.0, -np.inf)
        return np.logaddexp(self.log_w_uniform + log_unif,
                            self.log_w_gauss + self._log_gauss(x))

    def _grad(self, x):
        # The uniform component is flat wherever it is differentiable, so only
        # the gaussian component contributes, weighted by its responsibility.
        log_p = self._log_density(x)
        resp = np.exp(self.log_w_gauss + self._log_gauss(x) - log_p)
        return -resp[:, None] * x

    def _sample(self, rng, n):
        pick_gauss = rng.random(n) < np.exp(self.log_w_gauss)
        out = rng.random((n, self.dim))
        if pick_gauss.any():
            out[pick_gauss] = rng.standard_normal((int(pick_gauss.sum()), self.dim))
        return out


@dataclass
class GaussianMixtureCross(Target):
    """Equal mixture of four unit gaussians at the tips of a cross; opposite
    centers are ``separation`` apart."""

    dim: int = 2
    separation: float = 8.0

    def __post_init__(self):
        if self.dim != 2:
            raise ShapeError("cross mixture is defined in 2 dimensions")
        r = self.separation / 2.0
        self.centers = np.array([[r, 0.0], [-r, 0.0], [0.0, r], [0.0, -r]])

    def _component_logps(self, x):
        diff = x[:, None, :] - self.centers[None, :, :]  # (B, 4, 2)
        return -0.5 * self.dim * LOG_2PI - 0.5 * np.einsum("ikj,ikj->ik", diff, diff)

    def _log_density(self, x):
        comp = self._component_logps(x) + np.log(0.25)
        m = comp.max(axis=1)
        return m + np.log(np.exp(comp - m[:, None]).sum(axis=1))

    def _grad(self, x):
        comp = self._component_logps(x)
        m = comp.max(axis=1, keepdims=True)
        w = np.exp(comp - m)
        w /= w.sum(axis=1, keepdims=True)
        diff = self.centers[None, :, :] - x[:, None, :]
        return np.einsum("ik,ikj->ij", w, diff)

    def _sample(self, rng, n):
        idx = rng.integers(0, 4, size=n)
        return self.centers[idx] + rng.standard_normal((n, self.dim))


@dataclass
class LogisticDataset:
    """Design matrix with intercept column appended, binary labels, and the
    standard deviation of the independent gaussian prior on the weights."""

    design: np.ndarray
    labels: np.ndarray
    prior_std: float = 10.0

    def __post_init__(self):
        self.design = np.asarray(self.design, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if not np.all(np.isfinite(self.design)):
            raise ValueError("non-finite feature values")
        if not np.all(np.isin(self.labels, (0.0, 1.0))):
            raise ValueError("labels must be binary")
        if self.design.shape[0] != self.labels.shape[0]:
            raise ShapeError("row count mismatch between features and labels")

    @property
    def dim(self):
        return self.design.shape[1]

    @classmethod
    def from_csv(cls, path, prior_std: float = 10.0) -> "LogisticDataset":
        """Load a header+rows CSV whose final column is the binary label.

        Features are standardized to zero mean / unit variance and an
        intercept column of ones is appended.
        """
        raw = np.genfromtxt(path, delimiter=",", skip_header=1)
        if raw.ndim == 1:
            raw = raw[None, :]
        feats, labels = raw[:, :-1], raw[:, -1]
        mu = feats.mean(axis=0)
        sd = feats.std(axis=0)
        sd[sd == 0.0] = 1.0
        feats = (feats - mu) / sd
        design = np.hstack([feats, np.ones((feats.shape[0], 1))])
        return cls(design, labels, prior_std)

    @classmethod
    def synthetic(cls, n_rows: int, n_features: int, seed: int,
                  prior_std: float = 10.0) -> "LogisticDataset":
        """Fixed-seed synthetic classification data for desk-scale runs."""
        rng = np.random.default_rng(seed)
        feats = rng.standard_normal((n_rows, n_features))
        truth = rng.normal(0.0, 1.5, size=n_features + 1)
        logits = feats @ truth[:-1] + truth[-1]
        labels = (rng.random(n_rows) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
        design = np.hstack([feats, np.ones((n_rows, 1))])
        return cls(design, labels, prior_std)


@dataclass
class LogisticRegressionPosterior(Target):
    """Unnormalized posterior over logistic regression weights with an
    independent gaussian prior."""

    dataset: LogisticDataset

    def __post_init__(self):
        self.dim = self.dataset.dim

    def _log_density(self, x):
        X, y = self.dataset.design, self.dataset.labels
        t = x @ X.T  # (B, n_rows)
        loglik = (y[None, :] * t - np.logaddexp(0.0, t)).sum(axis=1)
        s2 = self.dataset.prior_std ** 2
        return loglik - 0.5 * np.einsum("ij,ij->i", x, x) / s2

    def _grad(self, x):
        X, y = self.dataset.design, self.dataset.labels
        t = x @ X.T
        p = 1.0 / (1.0 + np.exp(-t))
        return (y[None, :] - p) @ X - x / self.dataset.prior_std ** 2

    def _hvp(self, x, v):
        X = self.dataset.design
        t = x @ X.T
        p = 1.0 / (1.0 + np.exp(-t))
        w = p * (1.0 - p)  # (B, n_rows)
        return -(w * (v @ X.T)) @ X - v / self.dataset.prior_std ** 2


class AffinePushforward(Target):
    """Pushforward of a base target through z = A x + b."""

    def __init__(self, base: Target, A: np.ndarray, b: np.ndarray):
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        sign, logdet = np.linalg.slogdet(A)
        if sign == 0.0 or np.exp(logdet) <= 1e-12:
            raise ValueError("affine map must have |det A| > 1e-12")
        self.base = base
        self.A = A
        self.b = b
        self.A_inv = np.linalg.inv(A)
        self.log_abs_det = logdet
        self.dim = base.dim

    def _pull(self, z):
        return (z - self.b) @ self.A_inv.T

    def _log_density(self, z):
        return self.base._log_density(self._pull(z)) - self.log_abs_det

    def _grad(self, z):
        return self.base._grad(self._pull(z)) @ self.A_inv

    def _hvp(self, z, v):
        return self.base._hvp(self._pull(z), v @ self.A_inv) @ self.A_inv

    def _sample(self, rng, n):
        return self.base._sample(rng, n) @ self.A.T + self.b


class AugmentedTarget(Target):
    """Product of a base target over the first d coordinates with independent
    standard gaussians over ``aux_count`` trailing auxiliary coordinates."""

    def __init__(self, base: Target, aux_count: int):
        if aux_count < 1:
            raise ShapeError("aux_count must be >= 1")
        self.base = base
        self.aux_count = aux_count
        self.dim = base.dim + aux_count

    def _split(self, x):
        return x[:, : self.base.dim], x[:, self.base.dim :]

    def _log_density(self, x):
        data, aux = self._split(x)
        return (
            self.base._log_density(data)
            - 0.5 * self.aux_count * LOG_2PI
            - 0.5 * np.einsum("ij,ij->i", aux, aux)
        )

    def _grad(self, x):
        data, aux = self._split(x)
        return np.hstack([self.base._grad(data), -aux])

    def _hvp(self, x, v):
        data, _ = self._split(x)
        return np.hstack([self.base._hvp(data, v[:, : self.base.dim]),
                          -v[:, self.base.dim :]])

    def _sample(self, rng, n):
        return np.hstack([self.base._sample(rng, n),
                          rng.standard_normal((n, self.aux_count))])


def make_target(kind: str, dim: int, **params) -> Target:
    """Build a target from its config-file name."""
    kinds = {
        "gaussian": IsoGaussian,
        "laplace": IsoLaplace,
        "cauchy": IsoCauchy,
        "uniform": StabilizedUniform,
        "mixture_cross": GaussianMixtureCross,
    }
    if kind in kinds:
        return kinds[kind](dim, **params)
    if kind == "logistic":
        if "csv_path" in params:
            path = params["csv_path"]
            if path == "builtin":  # the packaged demo dataset
                path = os.path.join(os.path.dirname(__file__), "data",
                                    "logistic_demo.csv")
            ds = LogisticDataset.from_csv(path, params.get("prior_std", 10.0))
        else:
            ds = LogisticDataset.synthetic(
                params.get("n_rows", 40), dim - 1, params.get("data_seed", 7),
                params.get("prior_std", 10.0))
        return LogisticRegressionPosterior(ds)
    raise ValueError(f"unknown target kind {kind!r}")
