"""Experiment configuration: parsing, validation, and object construction.

Configs are JSON with nested blocks. Validation is strict: unknown keys are
hard errors carrying the offending field path, and every block is checked
before any compute starts. ``normalize`` fills defaults so that
parse -> serialize -> parse is the identity on normalized configs.
"""

from __future__ import annotations

import copy
import json

import numpy as np

from .nn import ConfigError, MlpSpec, NiceFlowSpec
from .proposals import (
    AugmentedProposal,
    IsoMala,
    IsoRwm,
    MultiScheme,
    PositionMixture,
    PrecondMala,
    PrecondRwm,
    ResamplingFlow,
    TargetResampler,
    configure_multischeme,
)
from .targets import AugmentedTarget, make_target
from . import objectives
from .training import TrainSpec

EXPERIMENT_KINDS = (
    "fit-coefficient", "verify", "optimize", "evaluate",
    "density-grid", "scheme-compare",
)

_TARGET_KEYS = {
    "gaussian": {"kind", "dim"},
    "laplace": {"kind", "dim"},
    "cauchy": {"kind", "dim"},
    "uniform": {"kind", "dim", "stabilizer"},
    "mixture_cross": {"kind", "dim", "separation"},
    "logistic": {"kind", "dim", "csv_path", "n_rows", "data_seed", "prior_std"},
}

_PROPOSAL_KEYS = {
    "iso_rwm": {"kind", "tau0"},
    "iso_mala": {"kind", "tau0"},
    "precond_rwm": {"kind", "tau0"},
    "precond_mala": {"kind", "tau0"},
    "position_mixture": {"kind", "n_components", "hidden_dim", "hidden_layers"},
    "multischeme": {"kind", "coupling_layers", "hidden_dim", "hidden_layers",
                    "coupling_hidden_dim", "coupling_hidden_layers", "aux_count"},
    "resampling_flow": {"kind", "coupling_layers", "hidden_dim", "hidden_layers"},
    "target_resampler": {"kind"},
}

_OBJECTIVE_KEYS = {
    "ab_initio": {"kind", "A", "scaling"},
    "msjd": {"kind"},
    "l2hmc": {"kind", "sigma_min_sq"},
    "gsm": {"kind", "beta", "rho_beta", "target_alpha"},
    "nll": {"kind"},
    "combo": {"kind", "components", "weights"},
}

_TRAIN_KEYS = {"algorithm", "n_steps", "m_starts", "n_draws", "step_size",
               "max_restarts", "loss_every"}
_EVAL_KEYS = {"n_chains", "n_proposals", "replicates"}
_FIT_KEYS = {"method", "initial_A", "tolerance_on_alpha", "n_eval", "probes",
             "references", "scaling"}
_FIT_REF_KEYS = {"target", "proposal", "target_alpha"}
_GRID_KEYS = {"checkpoint", "bounds", "resolution", "anchors"}
_SCHEME_KEYS = {"name", "proposal", "checkpoint", "objective", "train"}
_TOP_KEYS = {"kind", "seed", "out", "target", "proposal", "objective", "train",
             "eval", "fit", "grid", "schemes", "checkpoint"}


def _check_keys(block: dict, allowed: set, path: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")


def _validate_target(block, path):
    kind = block.get("kind")
    if kind not in _TARGET_KEYS:
        raise ConfigError(f"{path}.kind: unknown target kind {kind!r}")
    _check_keys(block, _TARGET_KEYS[kind], path)
    if not isinstance(block.get("dim"), int) or block["dim"] < 1:
        raise ConfigError(f"{path}.dim: need a positive integer")


def _validate_proposal(block, path):
    kind = block.get("kind")
    if kind not in _PROPOSAL_KEYS:
        raise ConfigError(f"{path}.kind: unknown proposal kind {kind!r}")
    _check_keys(block, _PROPOSAL_KEYS[kind], path)


def _validate_objective(block, path):
    kind = block.get("kind")
    if kind not in _OBJECTIVE_KEYS:
        raise ConfigError(f"{path}.kind: unknown objective kind {kind!r}")
    _check_keys(block, _OBJECTIVE_KEYS[kind], path)
    if kind == "combo":
        comps = block.get("components")
        weights = block.get("weights")
        if not isinstance(comps, list) or not comps:
            raise ConfigError(f"{path}.components: need a non-empty list")
        if not isinstance(weights, list) or len(weights) != len(comps):
            raise ConfigError(f"{path}.weights: need one weight per component")
        for i, comp in enumerate(comps):
            _validate_objective(comp, f"{path}.components[{i}]")


def validate(raw: dict) -> dict:
    """Validate a parsed config; returns the input unchanged on success."""
    _check_keys(raw, _TOP_KEYS, "config")
    kind = raw.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"config.kind: unknown experiment kind {kind!r}")
    if "seed" in raw and not isinstance(raw["seed"], int):
        raise ConfigError("config.seed: need an integer")
    if "target" in raw:
        _validate_target(raw["target"], "config.target")
    if "proposal" in raw:
        _validate_proposal(raw["proposal"], "config.proposal")
    if "objective" in raw:
        _validate_objective(raw["objective"], "config.objective")
    if "train" in raw:
        _check_keys(raw["train"], _TRAIN_KEYS, "config.train")
    if "eval" in raw:
        _check_keys(raw["eval"], _EVAL_KEYS, "config.eval")
    if "fit" in raw:
        _check_keys(raw["fit"], _FIT_KEYS, "config.fit")
        for i, ref in enumerate(raw["fit"].get("references", [])):
            _check_keys(ref, _FIT_REF_KEYS, f"config.fit.references[{i}]")
            _validate_target(ref["target"], f"config.fit.references[{i}].target")
            _validate_proposal(ref["proposal"], f"config.fit.references[{i}].proposal")
    if "grid" in raw:
        _check_keys(raw["grid"], _GRID_KEYS, "config.grid")
    if "schemes" in raw:
        if not isinstance(raw["schemes"], list):
            raise ConfigError("config.schemes: need a list")
        for i, scheme in enumerate(raw["schemes"]):
            _check_keys(scheme, _SCHEME_KEYS, f"config.schemes[{i}]")
            _validate_proposal(scheme["proposal"], f"config.schemes[{i}].proposal")
    needs = {"verify": ("target", "proposal", "objective", "train", "eval"),
             "optimize": ("target", "proposal", "objective", "train"),
             "evaluate": ("target", "proposal", "eval"),
             "fit-coefficient": ("fit", "train"),
             "density-grid": ("target", "proposal", "grid"),
             "scheme-compare": ("target", "schemes", "eval")}
    for block in needs[kind]:
        if block not in raw:
            raise ConfigError(f"config.{block}: required for kind {kind!r}")
    return raw


_DEFAULTS = {
    "train": {"algorithm": "sampling", "n_steps": 20000, "m_starts": 1,
              "n_draws": 50, "max_restarts": 0, "loss_every": 100},
    "eval": {"n_chains": 5, "n_proposals": 25000, "replicates": 5},
    "objective_defaults": {
        "ab_initio": {"A": 0.18125, "scaling": "linear_d"},
        "l2hmc": {"sigma_min_sq": 1.0},
        "gsm": {"rho_beta": 0.02, "target_alpha": 0.234},
    },
}


def normalize(raw: dict) -> dict:
    """Fill defaults; idempotent, so round-trips are exact."""
    cfg = copy.deepcopy(validate(raw))
    cfg.setdefault("seed", 0)
    if "train" in cfg:
        for key, val in _DEFAULTS["train"].items():
            cfg["train"].setdefault(key, val)
    if "eval" in cfg:
        for key, val in _DEFAULTS["eval"].items():
            cfg["eval"].setdefault(key, val)
    for block in [cfg.get("objective")] + [
        c for c in cfg.get("objective", {}).get("components", [])
    ]:
        if block and block.get("kind") in _DEFAULTS["objective_defaults"]:
            for key, val in _DEFAULTS["objective_defaults"][block["kind"]].items():
                block.setdefault(key, val)
    return cfg


def load(path) -> dict:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return normalize(raw)


def dump(cfg: dict, path):
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# object construction


def build_target(block: dict):
    params = {k: v for k, v in block.items() if k not in ("kind", "dim")}
    return make_target(block["kind"], block["dim"], **params)


def build_proposal(block: dict, target):
    """Build a proposal over the target's space; multischeme blocks with
    ``aux_count`` also wrap the target in its gaussian augmentation, so the
    returned pair is (proposal, effective_target)."""
    kind = block["kind"]
    dim = target.dim
    tau0 = block.get("tau0")
    if tau0 is None and getattr(target, "stabilizer", None) is not None:
        # Box-bounded targets: start random-walk scales well inside the
        # known-good regime; the reduced learning rate used with these
        # targets bounds how far the scale can travel during training.
        tau0 = 1.35 / dim
    if kind == "iso_rwm":
        return IsoRwm(dim, tau0=tau0), target
    if kind == "iso_mala":
        return IsoMala(dim, target, tau0=tau0), target
    if kind == "precond_rwm":
        return PrecondRwm(dim, tau0=tau0), target
    if kind == "precond_mala":
        return PrecondMala(dim, target, tau0=tau0), target
    if kind == "target_resampler":
        return TargetResampler(target), target
    if kind == "position_mixture":
        net = MlpSpec(dim, block.get("hidden_dim", 16),
                      block.get("hidden_layers", 4),
                      block.get("n_components", 4), "softmax")
        return PositionMixture(dim, block.get("n_components", 4), net), target
    if kind == "resampling_flow":
        half = max(dim // 2, 1)
        net = MlpSpec(half, block.get("hidden_dim", 3 * dim),
                      block.get("hidden_layers", 3), half)
        flow = NiceFlowSpec(dim, block.get("coupling_layers", 8), net)
        return ResamplingFlow(flow), target
    if kind == "multischeme":
        aux = block.get("aux_count", 0)
        eff_target = AugmentedTarget(target, aux) if aux else target
        inner_dim = eff_target.dim
        prop = configure_multischeme(
            inner_dim,
            block.get("coupling_layers", 8),
            hidden_dim=block.get("hidden_dim"),
            hidden_layers=block.get("hidden_layers", 4),
            coupling_hidden_dim=block.get("coupling_hidden_dim"),
            coupling_hidden_layers=block.get("coupling_hidden_layers"),
        )
        if aux and not isinstance(prop, AugmentedProposal):
            prop = AugmentedProposal(prop, aux)
        return prop, eff_target
    raise ConfigError(f"unknown proposal kind {kind!r}")


def build_objective(block: dict, target=None):
    kind = block["kind"]
    if kind == "ab_initio":
        return objectives.AbInitio(A=block.get("A", 0.18125),
                                   scaling=block.get("scaling", "linear_d"))
    if kind == "msjd":
        return objectives.Msjd()
    if kind == "l2hmc":
        return objectives.L2hmc(sigma_min_sq=block.get("sigma_min_sq", 1.0))
    if kind == "gsm":
        beta = block.get("beta")
        if beta is None:
            beta = 1.0 / target.dim if target is not None else 1.0
        return objectives.Gsm(beta=beta, rho_beta=block.get("rho_beta", 0.02),
                              target_alpha=block.get("target_alpha", 0.234))
    if kind == "nll":
        return objectives.Nll()
    if kind == "combo":
        comps = [build_objective(c, target) for c in block["components"]]
        return objectives.combine(comps, block["weights"])
    raise ConfigError(f"unknown objective kind {kind!r}")


def default_step_size(target_block: dict = None) -> float:
    """3e-4, reduced for the stabilized-uniform target (3e-5 / 3e-6 / 3e-7
    for dimensions up to 100 / 1000 / beyond)."""
    if target_block is None or target_block.get("kind") != "uniform":
        return 3e-4
    dim = target_block.get("dim", 100)
    if dim <= 100:
        return 3e-5
    if dim <= 1000:
        return 3e-6
    return 3e-7


def build_train(block: dict, seed: int, target_block: dict = None) -> TrainSpec:
    merged = dict(_DEFAULTS["train"])
    merged.update(block)
    merged.setdefault("step_size", default_step_size(target_block))
    return TrainSpec(seed=seed, **merged)
