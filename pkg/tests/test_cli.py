"""Command-line surface: exit codes, record formats, manifests, round trips."""

import json

import numpy as np
import pytest

from cayleydiff.cli import main
from cayleydiff.graphs import sl2p_graph
from cayleydiff.model import init_model, save_checkpoint
from cayleydiff.search import load_ball


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    rc = main(["train", "--spec", "sl2p", "--p", "5", "--T", "6",
               "--alg", "alg1", "--batch", "20", "--trajectories", "3000",
               "--lr", "0.002", "--scramble-nmax", "0", "--hidden", "32",
               "--blocks", "1", "--time-embed", "4", "--seed", "1",
               "--out", str(out)])
    assert rc == 0
    return out


def test_train_missing_T_is_usage_error(capsys):
    assert main(["train", "--spec", "sl2p", "--p", "31"]) == 2
    assert "T" in capsys.readouterr().err


def test_train_bad_config_key_lists_valid_keys(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("horizon=12\n")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "valid keys" in capsys.readouterr().err


def test_train_outputs_and_manifest(trained_dir):
    assert (trained_dir / "model.ckpt").exists()
    assert (trained_dir / "metrics.csv").exists()
    manifest = json.loads((trained_dir / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["resolved"]["p"] == 5
    assert "checkpoint_sha256" in manifest
    outs = {o.split("/")[-1] for o in manifest["outputs"]}
    assert outs == {"model.ckpt", "metrics.csv"}


def test_train_rerun_reproduces_metrics(tmp_path, trained_dir):
    out2 = tmp_path / "rerun"
    rc = main(["train", "--spec", "sl2p", "--p", "5", "--T", "6",
               "--alg", "alg1", "--batch", "20", "--trajectories", "3000",
               "--lr", "0.002", "--scramble-nmax", "0", "--hidden", "32",
               "--blocks", "1", "--time-embed", "4", "--seed", "1",
               "--out", str(out2)])
    assert rc == 0
    strip = lambda p: [",".join(ln.split(",")[:3])
                       for ln in (p / "metrics.csv").read_text().splitlines()]
    assert strip(out2) == strip(trained_dir)


def test_solve_solved_state_prints_empty_path(trained_dir, capsys):
    rc = main(["solve", "--spec", "sl2p", "--p", "5",
               "--checkpoint", str(trained_dir / "model.ckpt"),
               "--T", "6", "--start", "1,0,0,1"])
    assert rc == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("1,0,0,")
    assert line.split(",")[4] == ""


def test_solve_scramble_and_uniform_paths_verify(trained_dir, capsys):
    for startspec in (["--scramble", "3"], ["--uniform"]):
        rc = main(["solve", "--spec", "sl2p", "--p", "5",
                   "--checkpoint", str(trained_dir / "model.ckpt"),
                   "--T", "6", "--beam", "8", "--ball-radius", "2",
                   "--calibrate", "--seed", "7"] + startspec)
        assert rc == 0
        solved, length, nodes, secs, path = capsys.readouterr().out.strip().split(",")
        if solved == "1":
            g = sl2p_graph(5)
            moves = [g.generators.names.index(tok) for tok in path.split()] if path else []
            assert len(moves) == int(length)


def test_solve_dim_mismatch_is_format_error(trained_dir, tmp_path, capsys):
    wrong = init_model(8, 2, 8, 1, 4, seed=0)
    save_checkpoint(wrong, tmp_path / "wrong.ckpt")
    rc = main(["solve", "--spec", "sl2p", "--p", "5",
               "--checkpoint", str(tmp_path / "wrong.ckpt"),
               "--T", "6", "--start", "1,0,0,1"])
    assert rc == 3
    assert "do not match" in capsys.readouterr().err


def test_solve_bad_state_is_format_error(trained_dir):
    rc = main(["solve", "--spec", "sl2p", "--p", "5",
               "--checkpoint", str(trained_dir / "model.ckpt"),
               "--T", "6", "--start", "2,0,0,1"])
    assert rc == 3


def test_bench_single_cell_csv(trained_dir, tmp_path, capsys):
    out = tmp_path / "bench.csv"
    rc = main(["bench", "--spec", "sl2p", "--p", "5",
               "--checkpoint", str(trained_dir / "model.ckpt"),
               "--T", "6", "--beam-widths", "1", "--ball-radii", "0",
               "--instances", "20", "--seed", "3", "--compute-oracle",
               "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("beam_width,ball_radius,solve_rate")
    assert len(lines) == 2
    row = lines[1].split(",")
    assert row[0] == "1" and row[1] == "0"
    manifest = json.loads((tmp_path / "bench.csv.manifest.json").read_text())
    assert manifest["command"] == "bench"


def test_oracle_summary_and_roundtrip(tmp_path, capsys):
    out = tmp_path / "sl2p5.oracle"
    rc = main(["oracle", "--spec", "sl2p", "--p", "5", "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "states: 120" in text
    from cayleydiff.oracle import bfs_distances, load_distance_table
    g = sl2p_graph(5)
    loaded = load_distance_table(g, out)
    fresh = bfs_distances(g)
    assert np.array_equal(loaded.dense, fresh.dense)


def test_oracle_budget_exceeded_is_resource_error(capsys):
    rc = main(["oracle", "--spec", "sl2p", "--p", "31", "--max-states", "100"])
    assert rc == 4


def test_ball_zero_radius_and_roundtrip(tmp_path, capsys):
    out = tmp_path / "b.ball"
    rc = main(["ball", "--spec", "sl2p", "--p", "5", "--radius", "0",
               "--out", str(out)])
    assert rc == 0
    assert "states: 1" in capsys.readouterr().out
    ball = load_ball(sl2p_graph(5), out)
    assert len(ball) == 1


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == 2
