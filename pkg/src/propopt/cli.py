"""Declarative experiment runner.

Subcommands: fit-coefficient, verify, optimize, evaluate, density-grid,
scheme-compare. Each reads a JSON config (see ``config``), runs the
pipeline, and writes a deterministic artifact tree (config copy, metrics
JSON per replicate, aggregate CSV, checkpoints, loss curves, manifest).
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import sys
import time

import click
import numpy as np

from . import config as cfg_mod
from . import objectives
from .evaluation import (
    ab_initio_score,
    acceptance_and_msjd,
    ess_summary,
    evaluate_proposal,
    replicate_stats,
)
from .kernels import run_chains
from .nn import ConfigError
from .proposals import AugmentedProposal, load_checkpoint, save_checkpoint
from .reporting import RunManifest, format_mean_se, write_csv, write_json
from .training import FitReference, FitSpec, fit_coefficient, optimize


def _load_config(path, seed_override):
    try:
        cfg = cfg_mod.load(path)
    except (ConfigError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if seed_override is not None:
        cfg["seed"] = seed_override
    return cfg


def _out_dir(cfg, out_flag):
    root = out_flag or cfg.get("out") or os.environ.get("PROPOPT_OUT", "runs")
    digest = hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:10]
    path = os.path.join(root, f"{cfg['kind']}-{digest}-s{cfg['seed']}")
    os.makedirs(path, exist_ok=True)
    return path


def _start(config, seed, out, expect_kind=None):
    cfg = _load_config(config, seed)
    if expect_kind is not None and cfg["kind"] != expect_kind:
        click.echo(f"error: config.kind: expected {expect_kind!r}", err=True)
        sys.exit(2)
    out_dir = _out_dir(cfg, out)
    manifest = RunManifest(out_dir)
    cfg_mod.dump(cfg, manifest.path("config.json"))
    return cfg, out_dir, manifest


def _build_experiment(cfg):
    target = cfg_mod.build_target(cfg["target"])
    proposal, eff_target = cfg_mod.build_proposal(cfg["proposal"], target)
    return target, proposal, eff_target


def _data_dim(proposal):
    return proposal.data_dim if isinstance(proposal, AugmentedProposal) else None


@click.group()
def main():
    """Build, fit, and verify objective functions for MCMC proposal tuning."""


def _common(fn):
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Output root (default $PROPOPT_OUT or ./runs).")(fn)
    fn = click.option("--workers", type=int, default=1, show_default=True)(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the config seed.")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False))(fn)
    return fn


# ---------------------------------------------------------------------------
# verify


def _verify_replicate(cfg, replicate, out_dir):
    seed = cfg["seed"] + replicate
    target, proposal, eff_target = _build_experiment(cfg)
    objective = cfg_mod.build_objective(cfg["objective"], eff_target)
    train = cfg_mod.build_train(cfg["train"], seed, cfg["target"])
    result = optimize(objective, eff_target, proposal, train)
    rng = np.random.default_rng(seed + 500_000)
    acc, msjd = evaluate_proposal(
        eff_target, proposal, result.params, cfg["eval"]["n_proposals"], rng)
    prefix = os.path.join(out_dir, f"checkpoint-r{replicate}")
    save_checkpoint(prefix, proposal, result.params, seed=seed)
    write_csv(os.path.join(out_dir, f"loss-r{replicate}.csv"),
              ["step", "loss"], result.loss_curve)
    metrics = {"replicate_id": replicate, "seed": seed,
               "acceptance_rate": acc, "msjd": msjd,
               "final_loss": result.final_loss}
    write_json(os.path.join(out_dir, f"metrics-r{replicate}.json"), metrics)
    return metrics


@main.command()
@_common
def verify(config_path, seed, workers, out):
    """Train replicates of one objective/target/proposal cell and report
    acceptance rate and MSJD with replicate statistics."""
    cfg, out_dir, manifest = _start(config_path, seed, out, "verify")
    replicates = cfg["eval"]["replicates"]
    try:
        if workers > 1:
            with concurrent.futures.ProcessPoolExecutor(workers) as pool:
                futures = [pool.submit(_verify_replicate, cfg, r, out_dir)
                           for r in range(replicates)]
                results = [f.result() for f in futures]
        else:
            results = [_verify_replicate(cfg, r, out_dir)
                       for r in range(replicates)]
    except Exception as exc:  # partial artifacts plus failure manifest
        manifest.record_failure(str(exc))
        manifest.write()
        raise
    for r in range(replicates):
        for name in (f"checkpoint-r{r}.bin", f"checkpoint-r{r}.json",
                     f"loss-r{r}.csv", f"metrics-r{r}.json"):
            manifest.path(name)
    acc_mean, acc_se = replicate_stats([m["acceptance_rate"] for m in results])
    msjd_mean, msjd_se = replicate_stats([m["msjd"] for m in results])
    write_csv(
        manifest.path("aggregate.csv"),
        ["target", "dim", "proposal", "objective",
         "acceptance", "acceptance_se", "acceptance_fmt",
         "msjd", "msjd_se", "msjd_fmt", "replicates"],
        [[cfg["target"]["kind"], cfg["target"]["dim"], cfg["proposal"]["kind"],
          cfg["objective"]["kind"],
          repr(acc_mean), repr(acc_se), format_mean_se(acc_mean, acc_se),
          repr(msjd_mean), repr(msjd_se), format_mean_se(msjd_mean, msjd_se),
          replicates]],
    )
    manifest.write()
    click.echo(f"wrote {out_dir}")


# ---------------------------------------------------------------------------
# optimize / evaluate


@main.command(name="optimize")
@_common
def optimize_cmd(config_path, seed, workers, out):
    """Run one training job and persist the checkpoint and loss curve."""
    cfg, out_dir, manifest = _start(config_path, seed, out, "optimize")
    try:
        target, proposal, eff_target = _build_experiment(cfg)
        objective = cfg_mod.build_objective(cfg["objective"], eff_target)
        train = cfg_mod.build_train(cfg["train"], cfg["seed"], cfg["target"])
        result = optimize(objective, eff_target, proposal, train)
    except Exception as exc:
        manifest.record_failure(str(exc))
        manifest.write()
        raise
    save_checkpoint(os.path.join(out_dir, "checkpoint"), proposal,
                    result.params, seed=cfg["seed"])
    manifest.path("checkpoint.bin")
    manifest.path("checkpoint.json")
    write_csv(manifest.path("loss.csv"), ["step", "loss"], result.loss_curve)
    write_json(manifest.path("report.json"),
               {"final_loss": result.final_loss,
                "restarts_used": result.restarts_used})
    manifest.write()
    click.echo(f"wrote {out_dir}")


@main.command()
@_common
def evaluate(config_path, seed, workers, out):
    """Run evaluation chains for a checkpoint and report efficiency metrics."""
    cfg, out_dir, manifest = _start(config_path, seed, out, "evaluate")
    try:
        target, proposal, eff_target = _build_experiment(cfg)
        if "checkpoint" in cfg:
            _, params = load_checkpoint(cfg["checkpoint"])
        else:
            params = proposal.init_params(np.random.default_rng(cfg["seed"]))
        metrics = evaluate_checkpoint(cfg, eff_target, proposal, params)
    except Exception as exc:
        manifest.record_failure(str(exc))
        manifest.write()
        raise
    write_json(manifest.path("metrics.json"), metrics)
    write_csv(manifest.path("metrics.csv"), sorted(metrics),
              [[metrics[k] for k in sorted(metrics)]])
    manifest.write()
    click.echo(f"wrote {out_dir}")


def evaluate_checkpoint(cfg, eff_target, proposal, params):
    n_chains = cfg["eval"]["n_chains"]
    n_proposals = cfg["eval"]["n_proposals"]
    rng = np.random.default_rng(cfg["seed"] + 900_000)
    starts = eff_target.sample(rng, n_chains)
    traces = run_chains(eff_target, proposal, params, starts, n_proposals, rng)
    dd = _data_dim(proposal)
    acc, msjd = acceptance_and_msjd(traces, data_dim=dd)
    chains = np.stack([t.states[1:, : dd or t.states.shape[1]] for t in traces])
    ess = ess_summary(chains, n_proposals)
    score = ab_initio_score(eff_target, proposal, params,
                            min(n_proposals, 10_000), rng)
    return {"acceptance_rate": acc, "msjd": msjd,
            "ess_per_proposal_first": ess["first"],
            "ess_per_proposal_second": ess["second"],
            "ab_initio_loss": score,
            "n_chains": n_chains, "n_proposals": n_proposals}


# ---------------------------------------------------------------------------
# fit-coefficient


@main.command(name="fit-coefficient")
@_common
def fit_coefficient_cmd(config_path, seed, workers, out):
    """Calibrate the fitted-objective coefficient against references."""
    cfg, out_dir, manifest = _start(config_path, seed, out, "fit-coefficient")
    fit_block = cfg["fit"]
    references = []
    for ref in fit_block["references"]:
        target = cfg_mod.build_target(ref["target"])

        def make_proposal(ref=ref, target=target):
            return cfg_mod.build_proposal(ref["proposal"], target)[0]

        references.append(FitReference(target, make_proposal,
                                       ref["target_alpha"]))
    train = cfg_mod.build_train(cfg["train"], cfg["seed"])
    spec = FitSpec(
        references=references,
        method=fit_block.get("method", "secant"),
        inner_train=train,
        initial_A=fit_block.get("initial_A", 0.2),
        tolerance_on_alpha=fit_block.get("tolerance_on_alpha", 0.01),
        n_eval=fit_block.get("n_eval", 25000),
        probes=tuple(fit_block.get("probes", (0.1, 0.2, 0.3))),
        scaling=fit_block.get("scaling", "linear_d"),
    )
    try:
        result = fit_coefficient(spec)
    except Exception as exc:
        manifest.record_failure(str(exc))
        manifest.write()
        raise
    write_json(manifest.path("fit.json"),
               {"A": result.A, "converged": result.converged,
                "history": result.history})
    manifest.write()
    click.echo(f"A = {result.A:.5f}")


# ---------------------------------------------------------------------------
# density-grid


@main.command(name="density-grid")
@_common
def density_grid(config_path, seed, workers, out):
    """Emit per-anchor conditional-density grids for a 2-D checkpoint."""
    cfg, out_dir, manifest = _start(config_path, seed, out, "density-grid")
    target, proposal, eff_target = _build_experiment(cfg)
    if proposal.dim != 2:
        click.echo("error: density grids require a 2-D proposal", err=True)
        sys.exit(1)
    grid = cfg["grid"]
    _, params = load_checkpoint(grid["checkpoint"])
    xmin, xmax, ymin, ymax = grid["bounds"]
    res = grid["resolution"]
    xs = np.linspace(xmin, xmax, res)
    ys = np.linspace(ymin, ymax, res)
    mesh = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    for i, anchor in enumerate(grid["anchors"]):
        anchor_rows = np.tile(np.asarray(anchor, dtype=np.float64), (mesh.shape[0], 1))
        log_density = proposal.log_density_np(params, anchor_rows, mesh)
        rows = [[mesh[j, 0], mesh[j, 1], np.exp(log_density[j])]
                for j in range(mesh.shape[0])]
        write_csv(manifest.path(f"grid-anchor{i}.csv"), ["x", "y", "density"], rows)
    manifest.write()
    click.echo(f"wrote {out_dir}")


# ---------------------------------------------------------------------------
# scheme-compare


@main.command(name="scheme-compare")
@_common
def scheme_compare(config_path, seed, workers, out):
    """Evaluate several schemes on a shared target and rank them by the
    fitted-objective score."""
    cfg, out_dir, manifest = _start(config_path, seed, out, "scheme-compare")
    target = cfg_mod.build_target(cfg["target"])
    rows = []
    for scheme in cfg["schemes"]:
        proposal, eff_target = cfg_mod.build_proposal(scheme["proposal"], target)
        if "checkpoint" in scheme:
            _, params = load_checkpoint(scheme["checkpoint"])
        elif "objective" in scheme:
            objective = cfg_mod.build_objective(scheme["objective"], eff_target)
            train = cfg_mod.build_train(scheme.get("train", {}), cfg["seed"],
                                        cfg["target"])
            params = optimize(objective, eff_target, proposal, train).params
        else:
            params = proposal.init_params(np.random.default_rng(cfg["seed"]))
        metrics = evaluate_checkpoint(cfg, eff_target, proposal, params)
        t0 = time.perf_counter()
        rng = np.random.default_rng(cfg["seed"])
        run_chains(eff_target, proposal, params,
                   eff_target.sample(rng, 4), 50, rng)
        per_sec = 200 / (time.perf_counter() - t0)
        rows.append([scheme["name"], metrics["acceptance_rate"],
                     metrics["msjd"], metrics["ess_per_proposal_first"]["min"],
                     metrics["ab_initio_loss"], per_sec])
    rows.sort(key=lambda row: row[4])
    write_csv(manifest.path("schemes.csv"),
              ["scheme", "acceptance", "msjd", "min_ess_per_proposal",
               "ab_initio_loss", "samples_per_sec"], rows)
    manifest.write()
    click.echo(f"wrote {out_dir}")


if __name__ == "__main__":
    main()
