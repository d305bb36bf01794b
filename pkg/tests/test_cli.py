import json
from pathlib import Path

import numpy as np
import pytest

from specmatch.cli import main
from specmatch.project import ProjectConfig, dump_config, load_config

CONFIG_TOML = """\
[project]
workspace = "{ws}"
meshes = ["base.off", "copy.off"]
k = 12
alpha = 0.07

[features]
kind = "xyz"

[match]
variant = "learned"
route = "projection"
refine = true
refine_k_init = 6
refine_k_end = 12

[train]
learning_rate = 0.01
iterations = {iterations}
k_init = 6
k_end = 12
k_step = 3
seed = 0
gradient_mode = "{gradient_mode}"
pairs = [["base", "copy"]]
"""


@pytest.fixture()
def workspace(tmp_path):
    ws = tmp_path / "ws"
    ws.mkdir()
    code = main([
        "--config", _write_cfg(ws, iterations=6),
        "synth", "--kind", "noisy-permutation", "--noise", "0.01",
        "--subdivisions", "1", "--out-name", "pairgen", "--synth-seed", "2",
    ])
    assert code == 0
    # synth names the meshes pairgen_base/pairgen_copy; rename to match config
    (ws / "pairgen_base.off").rename(ws / "base.off")
    (ws / "pairgen_copy.off").rename(ws / "copy.off")
    (ws / "pairgen_copy__pairgen_base.gt.txt").rename(ws / "copy__base.gt.txt")
    return ws


def _write_cfg(ws, iterations=6, gradient_mode="fd"):
    cfg = ws / "specmatch.toml"
    cfg.write_text(
        CONFIG_TOML.format(ws=str(ws), iterations=iterations,
                           gradient_mode=gradient_mode)
    )
    return str(cfg)


def test_dump_config_roundtrips(tmp_path):
    text = dump_config()
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    cfg = load_config(p)
    assert cfg.k == ProjectConfig().k
    assert cfg.train.learning_rate == ProjectConfig().train.learning_rate


def test_dump_config_cli():
    assert main(["--dump-config"]) == 0


def test_json_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"project": {"k": 64, "meshes": []}}))
    cfg = load_config(p)
    assert cfg.k == 64


def test_schedule_must_fit_within_k(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"project": {"k": 17, "meshes": []}}))
    with pytest.raises(Exception):
        load_config(p)  # default schedule ends at 40 > k


def test_bad_config_value(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[train]\nbogus_option = 3\n")
    assert main(["--config", str(p), "train"]) == 1


def test_missing_config_file():
    assert main(["--config", "/nonexistent/x.toml", "precompute"]) == 1


def test_precompute_empty_mesh_list(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text(f'[project]\nworkspace = "{tmp_path}"\nmeshes = []\n')
    assert main(["--config", str(p), "precompute"]) == 0


def test_precompute_idempotent(workspace):
    cfg = str(workspace / "specmatch.toml")
    assert main(["--config", cfg, "precompute"]) == 0
    cache = sorted((workspace / "cache").iterdir())
    assert len(cache) == 6  # spectrum + features + geodesics per mesh
    mtimes = {p.name: p.stat().st_mtime_ns for p in cache}
    assert main(["--config", cfg, "precompute"]) == 0
    after = {p.name: p.stat().st_mtime_ns for p in sorted((workspace / "cache").iterdir())}
    assert after == mtimes  # zero recomputation on rerun


def test_precompute_missing_mesh(workspace):
    cfg_path = workspace / "specmatch.toml"
    text = cfg_path.read_text().replace('"copy.off"', '"ghost.off"')
    cfg_path.write_text(text)
    assert main(["--config", str(cfg_path), "precompute"]) == 1


def test_train_requires_caches(workspace):
    cfg = str(workspace / "specmatch.toml")
    assert main(["--config", cfg, "train"]) == 1  # no caches yet


def test_full_workflow_and_determinism(workspace):
    """precompute -> train -> match, then rerun train/match and require
    byte-identical loss CSV (finite-difference mode) and correspondence."""
    cfg = str(workspace / "specmatch.toml")
    assert main(["--config", cfg, "precompute"]) == 0
    assert main(["--config", cfg, "train"]) == 0
    out = workspace / "out"
    loss_first = (out / "loss_history.csv").read_bytes()
    assert main(["--config", cfg, "match", "base", "copy"]) == 0
    map_first = (out / "copy__base.map").read_bytes()
    report = json.loads((out / "copy__base.report.json").read_text())
    assert report["mean_error"] == 0.0
    assert "refine" in report["timings"]

    assert main(["--config", cfg, "train"]) == 0
    assert main(["--config", cfg, "match", "base", "copy"]) == 0
    assert (out / "loss_history.csv").read_bytes() == loss_first
    assert (out / "copy__base.map").read_bytes() == map_first


def test_match_without_refine_flag(workspace):
    cfg = str(workspace / "specmatch.toml")
    cfg_text = Path(cfg).read_text().replace("refine = true", "refine = false")
    Path(cfg).write_text(cfg_text)
    assert main(["--config", cfg, "precompute"]) == 0
    assert main(["--config", cfg, "match", "base", "copy"]) == 0
    report = json.loads((workspace / "out" / "copy__base.report.json").read_text())
    assert "refine" not in report["timings"]
    # the --refine flag adds the stage
    assert main(["--config", cfg, "match", "base", "copy", "--refine"]) == 0
    report = json.loads((workspace / "out" / "copy__base.report.json").read_text())
    assert "refine" in report["timings"]
    assert report["refine_energy_trace"]


def test_train_iterations_zero_writes_identity_artifacts(workspace):
    cfg_path = workspace / "specmatch.toml"
    cfg_path.write_text(cfg_path.read_text().replace(
        "iterations = 6", "iterations = 0"))
    cfg = str(cfg_path)
    assert main(["--config", cfg, "precompute"]) == 0
    assert main(["--config", cfg, "train"]) == 0
    filt = json.loads((workspace / "out" / "filter.json").read_text())
    assert filt["diffusion_times"] == [0.0] * 12
    transform = json.loads((workspace / "out" / "transform.json").read_text())
    assert np.array_equal(np.asarray(transform["matrix"]), np.eye(3))
    assert (workspace / "out" / "loss_history.csv").read_text() == "iteration,loss\n"


def test_eval_and_refine_commands(workspace):
    cfg = str(workspace / "specmatch.toml")
    assert main(["--config", cfg, "precompute"]) == 0
    assert main(["--config", cfg, "match", "base", "copy"]) == 0
    out = workspace / "out"
    assert main([
        "--config", cfg, "eval", "base", str(out / "copy__base.map"),
        str(workspace / "copy__base.gt.txt"),
    ]) == 0
    eval_report = json.loads((out / "copy__base.eval.json").read_text())
    assert eval_report["mean_error"] == 0.0
    assert (out / "copy__base.pck.csv").exists()
    assert (out / "copy__base.pck.png").exists()
    assert (out / "copy__base.errors.png").exists()
    assert main([
        "--config", cfg, "refine", "base", "copy", str(out / "copy__base.map"),
    ]) == 0
    assert (out / "copy__base.refined.map").exists()


def test_export_plots_untrained_then_trained(workspace):
    cfg = str(workspace / "specmatch.toml")
    assert main(["--config", cfg, "precompute"]) == 0
    out = workspace / "out"
    # untrained: profile of all ones, loss history reported missing
    assert main(["--config", cfg, "export-plots"]) == 0
    lines = (out / "inhibition_profile.csv").read_text().strip().splitlines()
    assert lines[0] == "index,gain"
    assert all(line.endswith(",1.0") for line in lines[1:])
    assert (out / "inhibition_profile.png").exists()
    assert not (out / "loss_history.csv").exists()

    assert main(["--config", cfg, "train"]) == 0
    assert main(["--config", cfg, "match", "base", "copy"]) == 0
    assert main(["--config", cfg, "export-plots"]) == 0
    gains = [float(l.split(",")[1])
             for l in (out / "inhibition_profile.csv").read_text().splitlines()[1:]]
    assert all(0 < g <= 1.0 for g in gains)
    assert (out / "loss_history.png").exists()
    assert (out / "copy__base.pck.csv").exists()


def test_one_based_flag(workspace):
    cfg = str(workspace / "specmatch.toml")
    assert main(["--config", cfg, "precompute"]) == 0
    assert main(["--config", cfg, "--one-based", "match", "base", "copy"]) == 0
    indices = [
        int(line)
        for line in (workspace / "out" / "copy__base.map").read_text().split()
    ]
    assert min(indices) >= 1


def test_variant_and_route_flags(workspace):
    cfg = str(workspace / "specmatch.toml")
    assert main(["--config", cfg, "precompute"]) == 0
    assert main([
        "--config", cfg, "--variant", "fixed", "--route", "projection",
        "match", "base", "copy",
    ]) == 0
    report = json.loads((workspace / "out" / "copy__base.report.json").read_text())
    assert report["variant"] == "fixed"
    assert report["route"] == "projection"


def test_synth_scale_kind(tmp_path):
    ws = tmp_path / "s"
    ws.mkdir()
    cfg = ws / "cfg.toml"
    cfg.write_text(f'[project]\nworkspace = "{ws}"\nmeshes = []\n')
    assert main([
        "--config", str(cfg), "synth", "--kind", "non-isometric-scale",
        "--factors", "1", "1", "2", "--subdivisions", "1",
        "--out-name", "sc",
    ]) == 0
    assert (ws / "sc_base.off").exists()
    assert (ws / "sc_copy.off").exists()
    assert (ws / "sc_copy__sc_base.gt.txt").exists()
