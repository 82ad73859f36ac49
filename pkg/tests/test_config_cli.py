"""Config validation/normalization contracts and end-to-end CLI smoke runs on
desk-scale budgets (every subcommand writes its full artifact tree)."""

import csv
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from propopt import config as cfg_mod
from propopt.cli import main
from propopt.nn import ConfigError
from propopt.proposals import AugmentedProposal, IsoRwm, save_checkpoint
from propopt.targets import IsoGaussian


def base_verify_cfg():
    return {
        "kind": "verify",
        "seed": 3,
        "target": {"kind": "gaussian", "dim": 2},
        "proposal": {"kind": "iso_rwm"},
        "objective": {"kind": "ab_initio"},
        "train": {"n_steps": 60, "m_starts": 4, "n_draws": 8,
                  "step_size": 0.02, "loss_every": 20},
        "eval": {"n_proposals": 500, "replicates": 2},
    }


# ---------------------------------------------------------------------------
# validation


def test_unknown_top_level_key_names_the_field():
    cfg = base_verify_cfg()
    cfg["targett"] = {}
    with pytest.raises(ConfigError, match="config.targett"):
        cfg_mod.validate(cfg)


def test_unknown_nested_key_names_the_path():
    cfg = base_verify_cfg()
    cfg["target"]["scale"] = 2.0
    with pytest.raises(ConfigError, match="config.target.scale"):
        cfg_mod.validate(cfg)


def test_missing_required_block_for_kind():
    cfg = base_verify_cfg()
    del cfg["objective"]
    with pytest.raises(ConfigError, match="config.objective"):
        cfg_mod.validate(cfg)


def test_unknown_kinds_rejected():
    cfg = base_verify_cfg()
    cfg["kind"] = "train"
    with pytest.raises(ConfigError, match="config.kind"):
        cfg_mod.validate(cfg)
    cfg = base_verify_cfg()
    cfg["objective"]["kind"] = "esjd"
    with pytest.raises(ConfigError, match="config.objective.kind"):
        cfg_mod.validate(cfg)


def test_combo_objective_validated_recursively():
    cfg = base_verify_cfg()
    cfg["objective"] = {"kind": "combo",
                        "components": [{"kind": "ab_initio"},
                                       {"kind": "bogus"}],
                        "weights": [1.0, 1.0]}
    with pytest.raises(ConfigError, match=r"components\[1\]"):
        cfg_mod.validate(cfg)


def test_normalize_fills_defaults_and_is_idempotent():
    cfg = cfg_mod.normalize(base_verify_cfg())
    assert cfg["objective"]["A"] == 0.18125
    assert cfg["eval"]["n_chains"] == 5
    assert cfg["train"]["algorithm"] == "sampling"
    assert cfg_mod.normalize(cfg) == cfg


def test_build_proposal_multischeme_aux_wraps_target():
    target = IsoGaussian(2)
    prop, eff = cfg_mod.build_proposal(
        {"kind": "multischeme", "coupling_layers": 2, "hidden_dim": 6,
         "hidden_layers": 2, "aux_count": 2}, target)
    assert eff.dim == 4
    assert isinstance(prop, AugmentedProposal)


def test_uniform_target_gets_reduced_step_size_and_scale_init():
    assert cfg_mod.default_step_size({"kind": "uniform", "dim": 100}) == 3e-5
    assert cfg_mod.default_step_size({"kind": "uniform", "dim": 1000}) == 3e-6
    assert cfg_mod.default_step_size({"kind": "gaussian", "dim": 100}) == 3e-4
    target = cfg_mod.build_target({"kind": "uniform", "dim": 10})
    prop, _ = cfg_mod.build_proposal({"kind": "iso_rwm"}, target)
    params = prop.init_params(np.random.default_rng(0))
    assert params[0] == pytest.approx(np.log(1.35 / 10))


# ---------------------------------------------------------------------------
# CLI


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_cli_invalid_config_exits_2(tmp_path):
    path = write_cfg(tmp_path, {"kind": "verify", "target": {"kind": "x"}})
    result = CliRunner().invoke(main, ["verify", "--config", path])
    assert result.exit_code == 2
    assert "error:" in result.output


def test_cli_kind_mismatch_exits_2(tmp_path):
    path = write_cfg(tmp_path, base_verify_cfg())
    result = CliRunner().invoke(main, ["optimize", "--config", path])
    assert result.exit_code == 2


def test_cli_verify_writes_artifacts(tmp_path):
    path = write_cfg(tmp_path, base_verify_cfg())
    out = str(tmp_path / "runs")
    result = CliRunner().invoke(main, ["verify", "--config", path, "--out", out])
    assert result.exit_code == 0, result.output
    (run_dir,) = [os.path.join(out, d) for d in os.listdir(out)]
    names = set(os.listdir(run_dir))
    assert {"config.json", "aggregate.csv", "manifest.json",
            "metrics-r0.json", "metrics-r1.json",
            "checkpoint-r0.bin", "loss-r0.csv"} <= names
    with open(os.path.join(run_dir, "aggregate.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert 0.0 < float(rows[0]["acceptance"]) < 1.0


def test_cli_optimize_then_evaluate(tmp_path):
    opt_cfg = {
        "kind": "optimize", "seed": 1,
        "target": {"kind": "gaussian", "dim": 2},
        "proposal": {"kind": "iso_rwm"},
        "objective": {"kind": "ab_initio"},
        "train": {"n_steps": 80, "m_starts": 4, "n_draws": 8,
                  "step_size": 0.02},
    }
    out = str(tmp_path / "runs")
    path = write_cfg(tmp_path, opt_cfg)
    result = CliRunner().invoke(main, ["optimize", "--config", path,
                                       "--out", out])
    assert result.exit_code == 0, result.output
    run_dir = result.output.strip().split()[-1]
    ckpt = os.path.join(run_dir, "checkpoint")
    eval_cfg = {
        "kind": "evaluate", "seed": 1,
        "target": {"kind": "gaussian", "dim": 2},
        "proposal": {"kind": "iso_rwm"},
        "checkpoint": ckpt,
        "eval": {"n_chains": 3, "n_proposals": 300},
    }
    path2 = write_cfg(tmp_path, eval_cfg, "eval.json")
    result2 = CliRunner().invoke(main, ["evaluate", "--config", path2,
                                        "--out", out])
    assert result2.exit_code == 0, result2.output
    run_dir2 = result2.output.strip().split()[-1]
    metrics = json.loads(open(os.path.join(run_dir2, "metrics.json")).read())
    assert 0.0 < metrics["acceptance_rate"] <= 1.0
    assert "min" in metrics["ess_per_proposal_first"]


def test_cli_fit_coefficient(tmp_path):
    cfg = {
        "kind": "fit-coefficient", "seed": 2,
        "fit": {
            "references": [{"target": {"kind": "gaussian", "dim": 4},
                            "proposal": {"kind": "iso_rwm"},
                            "target_alpha": 0.45}],
            "initial_A": 0.18,
            "tolerance_on_alpha": 0.05,
            "n_eval": 3000,
        },
        "train": {"n_steps": 200, "m_starts": 4, "n_draws": 16,
                  "step_size": 0.02},
    }
    out = str(tmp_path / "runs")
    path = write_cfg(tmp_path, cfg)
    result = CliRunner().invoke(main, ["fit-coefficient", "--config", path,
                                       "--out", out])
    assert result.exit_code == 0, result.output
    assert result.output.startswith("A = ")
    (run_dir,) = [os.path.join(out, d) for d in os.listdir(out)]
    fit = json.loads(open(os.path.join(run_dir, "fit.json")).read())
    assert fit["converged"] is True
    assert fit["A"] > 0


def test_cli_density_grid(tmp_path):
    prop = IsoRwm(2)
    ckpt = str(tmp_path / "ck")
    save_checkpoint(ckpt, prop, np.array([np.log(0.5)]))
    cfg = {
        "kind": "density-grid", "seed": 0,
        "target": {"kind": "gaussian", "dim": 2},
        "proposal": {"kind": "iso_rwm"},
        "grid": {"checkpoint": ckpt, "bounds": [-2, 2, -2, 2],
                 "resolution": 11, "anchors": [[0.0, 0.0], [1.0, 1.0]]},
    }
    out = str(tmp_path / "runs")
    path = write_cfg(tmp_path, cfg)
    result = CliRunner().invoke(main, ["density-grid", "--config", path,
                                       "--out", out])
    assert result.exit_code == 0, result.output
    (run_dir,) = [os.path.join(out, d) for d in os.listdir(out)]
    with open(os.path.join(run_dir, "grid-anchor0.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 121
    # Density peaks at the anchor for the random-walk proposal.
    dens = {(float(r["x"]), float(r["y"])): float(r["density"]) for r in rows}
    assert dens[(0.0, 0.0)] == max(dens.values())


def test_cli_density_grid_rejects_non_2d(tmp_path):
    prop = IsoRwm(3)
    ckpt = str(tmp_path / "ck3")
    save_checkpoint(ckpt, prop, np.array([0.0]))
    cfg = {
        "kind": "density-grid", "seed": 0,
        "target": {"kind": "gaussian", "dim": 3},
        "proposal": {"kind": "iso_rwm"},
        "grid": {"checkpoint": ckpt, "bounds": [-1, 1, -1, 1],
                 "resolution": 5, "anchors": [[0, 0, 0]]},
    }
    path = write_cfg(tmp_path, cfg)
    result = CliRunner().invoke(main, ["density-grid", "--config", path,
                                       "--out", str(tmp_path / "runs")])
    assert result.exit_code == 1


def test_cli_scheme_compare_ranks_by_score(tmp_path):
    cfg = {
        "kind": "scheme-compare", "seed": 4,
        "target": {"kind": "gaussian", "dim": 2},
        "schemes": [
            {"name": "resample", "proposal": {"kind": "target_resampler"}},
            {"name": "rwm", "proposal": {"kind": "iso_rwm"},
             "objective": {"kind": "ab_initio"},
             "train": {"n_steps": 60, "m_starts": 4, "n_draws": 8,
                       "step_size": 0.02}},
        ],
        "eval": {"n_chains": 3, "n_proposals": 300},
    }
    out = str(tmp_path / "runs")
    path = write_cfg(tmp_path, cfg)
    result = CliRunner().invoke(main, ["scheme-compare", "--config", path,
                                       "--out", out])
    assert result.exit_code == 0, result.output
    (run_dir,) = [os.path.join(out, d) for d in os.listdir(out)]
    with open(os.path.join(run_dir, "schemes.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert {r["scheme"] for r in rows} == {"resample", "rwm"}
    scores = [float(r["ab_initio_loss"]) for r in rows]
    assert scores == sorted(scores)  # ranked best-first
    # Exact resampling dominates a tuned random walk on this target.
    assert rows[0]["scheme"] == "resample"
