"""CLI tests: each subcommand end to end on tiny workloads."""

import json
import os

import pytest

from steertab import cli, flow


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])


def test_scenario_spec_parsing():
    assert cli._parse_scenarios(["single_target:3"]) == [("single_target", 3)]
    assert cli._parse_scenarios(["obstacle"]) == [("obstacle", 100)]


def test_datagen_writes_jsonl_and_stats(tmp_path, capsys):
    out = str(tmp_path / "data.jsonl")
    stats = str(tmp_path / "stats.csv")
    rc = cli.main(["datagen", "--out", out, "--stats", stats,
                   "--scenario", "single_target:3", "--seed", "0"])
    assert rc == 0
    rows = [json.loads(ln) for ln in open(out).read().strip().splitlines()]
    assert rows and all("cot" in r for r in rows)
    assert open(stats).readline().startswith("mode,")
    assert "samples ->" in capsys.readouterr().out


def test_train_saves_loadable_model(tmp_path):
    out = str(tmp_path / "model.stfw")
    curve = str(tmp_path / "curve.csv")
    rc = cli.main(["train", "--out", out, "--loss-curve", curve,
                   "--scenario", "single_target:2", "--steps", "20"])
    assert rc == 0
    model = flow.load_model(out)
    assert model.cond_dim == flow.COND_DIM
    assert len(open(curve).read().strip().splitlines()) == 21


def test_bench_emits_reports(tmp_path):
    model_path = str(tmp_path / "model.stfw")
    flow.save_model(flow.FlowModel(seed=0), model_path)
    out_dir = str(tmp_path / "report")
    rc = cli.main(["bench", "--model", model_path, "--out", out_dir,
                   "--episodes", "2", "--shift", "none",
                   "--modality", "none", "--chunk-stride", "4",
                   "--recovery"])
    assert rc == 0
    names = set(os.listdir(out_dir))
    assert {"report.csv", "report.md", "recovery.csv"} <= names


def test_bench_rejects_unknown_shift(tmp_path):
    model_path = str(tmp_path / "model.stfw")
    flow.save_model(flow.FlowModel(seed=0), model_path)
    with pytest.raises(Exception):
        cli.main(["bench", "--model", model_path, "--out", str(tmp_path),
                  "--episodes", "1", "--shift", "gravity"])
