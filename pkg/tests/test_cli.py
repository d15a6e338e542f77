import importlib
import json

import pandas as pd
import pytest
from click.testing import CliRunner

from src.cli import cli
from src.exceptions import NumericalFailureError


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def network(runner, tmp_path):
    out = tmp_path / "network"
    result = runner.invoke(cli, ["generate", "--L", "3", "--N", "200", "--seed", "7", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


def identify(runner, data, out, *args):
    result = runner.invoke(cli, ["identify", "--data", str(data), "--order", "3", "--out", str(out), *args])
    return result


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


class TestGenerate:
    def test_same_seed_same_files(self, runner, network, tmp_path):
        again = tmp_path / "again"
        result = runner.invoke(cli, ["generate", "--L", "3", "--N", "200", "--seed", "7", "--out", str(again)])
        assert result.exit_code == 0
        assert (again / "data.csv").read_bytes() == (network / "data.csv").read_bytes()
        assert read_json(again / "system.json") == read_json(network / "system.json")

    def test_no_edges(self, runner, tmp_path):
        out = tmp_path / "empty"
        result = runner.invoke(cli, ["generate", "--L", "4", "--N", "20", "--edge-prob", "0", "--out", str(out)])
        assert result.exit_code == 0
        assert read_json(out / "manifest.json")["edges"] == []
        assert read_json(out / "system.json")["edges"] == []

    def test_data_shape(self, runner, tmp_path):
        out = tmp_path / "six"
        result = runner.invoke(cli, ["generate", "--N", "100", "--seed", "1", "--out", str(out)])
        assert result.exit_code == 0
        frame = pd.read_csv(out / "data.csv")
        assert frame.shape == (100, 6)
        assert list(frame.columns) == [f"w{k}" for k in range(1, 7)]

    def test_bad_edge_prob(self, runner, tmp_path):
        result = runner.invoke(cli, ["generate", "--edge-prob", "2", "--out", str(tmp_path / "bad")])
        assert result.exit_code != 0


class TestIdentify:
    def test_huge_tolerance_gives_no_edges(self, runner, network, tmp_path):
        result = identify(runner, network / "data.csv", tmp_path / "id", "--tau", "1e9")
        assert result.exit_code == 0, result.output
        document = read_json(tmp_path / "id" / "topology.json")
        assert document["edges"] == []
        assert [node["predictor_graph"] for node in document["nodes"]] == [[[1, 1]], [[2, 2]], [[3, 3]]]

    def test_deterministic(self, runner, network, tmp_path):
        for name in ("a", "b"):
            result = identify(runner, network / "data.csv", tmp_path / name, "--seed", "3")
            assert result.exit_code == 0, result.output
        assert read_json(tmp_path / "a" / "topology.json") == read_json(tmp_path / "b" / "topology.json")
        assert (tmp_path / "a" / "traces.jsonl").read_text() == (tmp_path / "b" / "traces.jsonl").read_text()
        assert read_json(tmp_path / "a" / "timing.json")["method"] == "bs"

    def test_glasso_fixed_penalty(self, runner, network, tmp_path):
        result = identify(runner, network / "data.csv", tmp_path / "gl", "--method", "glasso", "--delta", "1e12")
        assert result.exit_code == 0, result.output
        document = read_json(tmp_path / "gl" / "topology.json")
        assert document["edges"] == []
        assert all(node["delta"] == 1e12 for node in document["nodes"])

    def test_config_file_overrides_options(self, runner, network, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"tau": 1e9}))
        result = identify(runner, network / "data.csv", tmp_path / "cfg", "--config", str(config))
        assert result.exit_code == 0, result.output
        assert read_json(tmp_path / "cfg" / "topology.json")["tau"] == 1e9

    def test_unknown_config_key(self, runner, network, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"bogus": 1}))
        result = identify(runner, network / "data.csv", tmp_path / "cfg", "--config", str(config))
        assert result.exit_code != 0


class TestBenchmark:
    def test_empty_methods_writes_header_only(self, runner, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"name": "none", "conditions": [{"name": "c", "N": 50, "n": 5}]}))
        result = runner.invoke(cli, ["benchmark", "--spec", str(spec), "--out", str(tmp_path / "bench")])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "bench" / "none.csv").read_text().strip().splitlines()
        assert lines == ["condition,method,tuning,TPR,FPR,dis,trials,failures"]
        assert (tmp_path / "bench" / "none.meta.json").exists()

    def test_invalid_spec(self, runner, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"conditions": [{"name": "c", "N": 1, "n": 0}], "trials": 0}))
        result = runner.invoke(cli, ["benchmark", "--spec", str(spec), "--out", str(tmp_path / "bench")])
        assert result.exit_code != 0
        assert not (tmp_path / "bench").exists()

    def test_needs_spec_or_preset(self, runner):
        assert runner.invoke(cli, ["benchmark"]).exit_code == 2

    def test_list_presets(self, runner):
        result = runner.invoke(cli, ["benchmark", "--list-presets"])
        assert result.exit_code == 0
        assert "paper-N500-desk" in result.output


class TestTraceDump:
    def test_prints_saved_traces(self, runner, network, tmp_path):
        assert identify(runner, network / "data.csv", tmp_path / "id").exit_code == 0
        result = runner.invoke(cli, ["trace-dump", "--traces", str(tmp_path / "id" / "traces.jsonl")])
        assert result.exit_code == 0, result.output
        assert "J_before" in result.output

    def test_recomputes_node_traces(self, runner, network, tmp_path):
        out = tmp_path / "traces"
        result = runner.invoke(
            cli, ["trace-dump", "--data", str(network / "data.csv"), "--node", "2", "--order", "3", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        em = pd.read_csv(out / "em_w2.csv")
        assert list(em.columns) == ["iteration", "J"]
        assert (out / "search_w2.jsonl").read_text().strip()


def test_identify_exports_regularization_paths(runner, network, tmp_path):
    out = tmp_path / "paths"
    result = identify(
        runner, network / "data.csv", out, "--method", "glasso", "--delta-grid", "0,10,100", "--export-path"
    )
    assert result.exit_code == 0, result.output
    for node in (1, 2, 3):
        frame = pd.read_csv(out / f"path_w{node}.csv")
        assert list(frame["delta"]) == [0.0, 10.0, 100.0]


def test_failed_path_export_writes_nothing(runner, network, tmp_path, monkeypatch):
    def failing(*args, **kwargs):
        raise NumericalFailureError("경로 계산 실패")

    monkeypatch.setattr(importlib.import_module("src.02_identify_topology"), "regularization_paths", failing)
    out = tmp_path / "partial"
    result = identify(
        runner, network / "data.csv", out, "--method", "glasso", "--delta-grid", "0,10", "--export-path"
    )
    assert result.exit_code != 0
    assert not out.exists()
