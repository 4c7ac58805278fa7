import json
import os

import numpy as np
import pytest

from latentzero.cli import main
from latentzero.manifest import manifests_equal_excluding_timing, read_manifest

MICRO = """
env_mode = board
board_size = 3
board_connect = 3
hidden_channels = 8
num_blocks = 1
num_simulations = 6
iterations = 1
games_per_iteration = 2
steps_per_iteration = 3
batch_size = 8
lr = 0.02
replay_capacity = 100
seed = 5
analysis_games = 3
analysis_simulations = 6
sweep_simulations = 4,8
sweep_games = 2
anchor_simulations = 8
fig9_simulations = 6
fig9_max_k = 2
fig10_max_k = 4
fig11_windows = 1,2
render_figures = false
"""

BANDIT_FAST = """
bandit_horizon = 500
bandit_replications = 120
"""


@pytest.fixture()
def micro_cfg(tmp_path):
    path = tmp_path / "micro.cfg"
    path.write_text(MICRO)
    return str(path)


@pytest.fixture()
def trained_run(tmp_path, micro_cfg):
    out = tmp_path / "run"
    rc = main(["train", "--config", micro_cfg, "--out", str(out)])
    assert rc == 0
    return out


def test_missing_config_exit_2(tmp_path):
    rc = main(["train", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_unknown_key_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("who = knows\n")
    rc = main(["train", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_unknown_noise_model_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("bandit_noise = pink\n")
    rc = main(["bandit", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_smoke_train_writes_artifacts(trained_run):
    assert (trained_run / "loss.csv").exists()
    assert (trained_run / "config.txt").exists()
    assert (trained_run / "checkpoints" / "ckpt_0001.lzc").exists()
    assert (trained_run / "games" / "iter_001" / "game_000.txt").exists()
    manifest = read_manifest(trained_run)
    assert manifest["checkpoints"] == ["checkpoints/ckpt_0001.lzc"]


def test_manifest_lists_every_file(trained_run):
    manifest = read_manifest(trained_run)
    on_disk = []
    for root, _, names in os.walk(trained_run):
        for name in names:
            rel = os.path.relpath(os.path.join(root, name), trained_run)
            if rel != "manifest.json":
                on_disk.append(rel)
    assert sorted(on_disk) == manifest["files"]


def test_loss_csv_schema(trained_run):
    header = (trained_run / "loss.csv").read_text().splitlines()[0]
    assert header == "step,iteration,total,policy,value,reward,l2,decoder,consistency"


def test_rerun_reproduces_byte_identical_outputs(tmp_path, micro_cfg):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["train", "--config", micro_cfg, "--out", str(out1)]) == 0
    assert main(["train", "--config", micro_cfg, "--out", str(out2)]) == 0
    assert (out1 / "loss.csv").read_bytes() == (out2 / "loss.csv").read_bytes()
    c1 = (out1 / "checkpoints" / "ckpt_0001.lzc").read_bytes()
    c2 = (out2 / "checkpoints" / "ckpt_0001.lzc").read_bytes()
    assert c1 == c2
    assert manifests_equal_excluding_timing(read_manifest(out1), read_manifest(out2))


def test_analyze_errors_and_headers(tmp_path, micro_cfg, trained_run):
    ckpt = str(trained_run / "checkpoints" / "ckpt_0001.lzc")
    rc = main(["analyze", "--config", micro_cfg, "--checkpoint", ckpt,
               "--which", "errors", "--out", str(trained_run)])
    assert rc == 0
    recent = (trained_run / "analysis" / "errors_recent.csv").read_text().splitlines()
    early = (trained_run / "analysis" / "errors_early.csv").read_text().splitlines()
    assert recent[0] == early[0]


def test_analyze_fig11_header(tmp_path, micro_cfg, trained_run):
    ckpt = str(trained_run / "checkpoints" / "ckpt_0001.lzc")
    rc = main(["analyze", "--config", micro_cfg, "--checkpoint", ckpt,
               "--which", "fig11", "--out", str(trained_run)])
    assert rc == 0
    header = (trained_run / "analysis" / "fig11.csv").read_text().splitlines()[0]
    assert header == "t,N,mse,stderr,samples"


def test_analyze_tree_emits_graph_and_images(tmp_path, micro_cfg, trained_run):
    ckpt = str(trained_run / "checkpoints" / "ckpt_0001.lzc")
    rc = main(["analyze", "--config", micro_cfg, "--checkpoint", ckpt,
               "--which", "tree", "--out", str(trained_run)])
    assert rc == 0
    tree_dir = trained_run / "analysis" / "tree"
    names = os.listdir(tree_dir)
    ppms = [n for n in names if n.endswith(".ppm")]
    table = (tree_dir / "tree.txt").read_text().splitlines()
    assert len(ppms) == len(table) - 1
    assert (tree_dir / "tree.dot").exists()


def test_analyze_env_mismatch_exit_4(tmp_path, trained_run):
    other = tmp_path / "other.cfg"
    other.write_text("env_mode = board\nboard_size = 5\nboard_connect = 4\n")
    ckpt = str(trained_run / "checkpoints" / "ckpt_0001.lzc")
    rc = main(["analyze", "--config", str(other), "--checkpoint", ckpt,
               "--which", "errors", "--out", str(tmp_path / "o")])
    assert rc == 4


def test_analyze_corrupt_checkpoint_exit_4(tmp_path, trained_run):
    bad = tmp_path / "bad.lzc"
    bad.write_bytes((trained_run / "checkpoints" / "ckpt_0001.lzc").read_bytes()[:16])
    rc = main(["analyze", "--checkpoint", str(bad), "--which", "errors",
               "--out", str(tmp_path / "o")])
    assert rc == 4


def test_bandit_outputs_and_determinism(tmp_path):
    cfg = tmp_path / "b.cfg"
    cfg.write_text(MICRO + BANDIT_FAST)
    out1, out2 = tmp_path / "b1", tmp_path / "b2"
    assert main(["bandit", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["bandit", "--config", str(cfg), "--out", str(out2)]) == 0
    f1 = (out1 / "bandit_failure_rate.csv").read_bytes()
    f2 = (out2 / "bandit_failure_rate.csv").read_bytes()
    assert f1 == f2
    assert (out1 / "bandit_mean_error.csv").exists()


def test_eval_reports_and_color_split(tmp_path, micro_cfg, trained_run):
    ckpt = str(trained_run / "checkpoints" / "ckpt_0001.lzc")
    out = tmp_path / "ev"
    rc = main(["eval", "--checkpoint-a", ckpt, "--checkpoint-b", ckpt,
               "--games", "4", "--sims", "4", "--out", str(out)])
    assert rc == 0
    report = dict(line.split(" = ") for line in
                  (out / "elo_report.txt").read_text().splitlines())
    assert int(report["a_black_games"]) == 2
    assert int(report["wins"]) + int(report["draws"]) + int(report["losses"]) == 4
    games = (out / "eval_games.csv").read_text().splitlines()
    assert len(games) == 5  # header + 4 records


def test_env_var_overrides_out(tmp_path, micro_cfg, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv("LATENTZERO_OUT", str(target))
    rc = main(["train", "--config", micro_cfg, "--out", str(tmp_path / "ignored")])
    assert rc == 0
    assert (target / "loss.csv").exists()
    assert not (tmp_path / "ignored").exists()
