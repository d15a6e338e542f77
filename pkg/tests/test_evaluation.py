import json

import numpy as np
import pytest
from pydantic import ValidationError

import src.evaluation as evaluation
from src.evaluation import (
    RESULT_COLUMNS,
    ConfusionCounts,
    ExperimentSpec,
    MethodSpec,
    RocPoint,
    _aggregate,
    _condition_v_measure,
    confusion,
    dis,
    load_presets,
    mean_seconds,
    preset,
    run_benchmark,
    tuning_label,
    v_measure,
    write_results,
)
from src.exceptions import BenchmarkAbortedError, ConfigurationError, DivisionDomainError
from src.network_model import Topology


def tiny_spec(**overrides) -> ExperimentSpec:
    body = {
        "name": "tiny",
        "conditions": [{"name": "c1", "N": 60, "n": 3, "L": 3, "edge_prob": 0.5}],
        "methods": [
            {"method": "bs", "taus": [0, 5]},
            {"method": "glasso", "delta_grid": [0, 10, 100]},
        ],
        "trials": 2,
        "master_seed": 7,
    }
    body.update(overrides)
    return ExperimentSpec.model_validate(body)


class TestMetrics:
    def test_confusion(self):
        truth = Topology.from_edges([(1, 2), (2, 3)])
        estimate = Topology.from_edges([(1, 2), (3, 1), (2, 2)], self_loops=True)
        assert confusion(estimate, truth, 3) == ConfusionCounts(TP=1, FP=1, P=2, N=4)

    def test_rates_undefined_without_denominator(self):
        counts = ConfusionCounts(TP=0, FP=0, P=0, N=0)
        assert counts.tpr is None and counts.fpr is None

    @pytest.mark.parametrize("tpr, fpr, expected", [
        (1.0, 0.0, 0.0),
        (0.0, 1.0, np.sqrt(2.0)),
        (0.6, 0.3, 0.5),
    ])
    def test_dis(self, tpr, fpr, expected):
        assert dis(RocPoint("x", tpr, fpr)) == pytest.approx(expected)

    def test_v_measure(self):
        base = [0.1 * (k + 1) for k in range(11)]
        assert v_measure(base, base) == pytest.approx(0.0)
        assert v_measure([1.1 * b for b in base], base) == pytest.approx(10.0)

    def test_v_measure_errors(self):
        with pytest.raises(ConfigurationError):
            v_measure([0.1] * 10, [0.1] * 10)
        with pytest.raises(DivisionDomainError):
            v_measure([0.1] * 11, [0.0] + [0.1] * 10)

    def test_tuning_labels(self):
        assert tuning_label("bs", 0.0) == "tau=0"
        assert tuning_label("glasso", 10.0) == "delta=10"
        assert tuning_label("kglasso", 10.0, 0.7) == "delta=10,beta=0.7"
        assert tuning_label("glasso", "cv") == "cv"


class TestSpec:
    def test_range_expansion(self):
        spec = MethodSpec(method="glasso", delta_grid={"start": 0, "stop": 2000, "step": 10})
        assert len(spec.delta_grid) == 201
        assert spec.delta_grid[-1] == 2000.0

    def test_defaults(self):
        spec = MethodSpec(method="bs")
        assert spec.taus == [float(t) for t in range(11)]
        assert spec.is_search
        assert not MethodSpec(method="kglasso").is_search

    def test_all_errors_reported(self):
        with pytest.raises(ValidationError) as info:
            ExperimentSpec.model_validate({
                "conditions": [{"name": "a", "N": 1, "n": 0}],
                "methods": [{"method": "glasso", "delta_grid": [-1.0]}],
                "trials": 0,
            })
        assert info.value.error_count() >= 4

    def test_duplicate_condition_names(self):
        with pytest.raises(ValidationError):
            tiny_spec(conditions=[{"name": "c", "N": 10, "n": 2}, {"name": "c", "N": 20, "n": 2}])

    def test_presets_validate(self):
        names = load_presets()
        assert {"paper-N2000", "paper-N500", "paper-N50", "paper-N500-desk"} <= set(names)
        for name in names:
            spec = preset(name)
            assert spec.name == name
            assert spec.conditions

    def test_desk_preset_by_name(self):
        spec = preset("paper-N500-desk")
        assert [c.N for c in spec.conditions] == [500]

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            preset("missing")


class TestAggregate:
    def test_trials_without_true_edges_are_excluded_from_tpr(self):
        rows = [
            [("bs", "tau=0", ConfusionCounts(TP=1, FP=0, P=2, N=4))],
            [("bs", "tau=0", ConfusionCounts(TP=0, FP=1, P=0, N=6))],
        ]
        (row,) = _aggregate("c", rows, failures=0)
        assert row["TPR"] == pytest.approx(0.5)
        assert row["FPR"] == pytest.approx(1.0 / 12.0)
        assert row["trials"] == 2
        assert row["dis"] == pytest.approx(np.hypot(1.0 / 12.0, 0.5))

    def test_mean_seconds_per_method(self):
        timings = [{"bs": 1.0, "glasso": 0.5}, {"bs": 3.0}]
        assert mean_seconds(timings) == {"bs": 2.0, "glasso": 0.5}
        assert mean_seconds([]) == {}

    def test_v_measure_from_rows(self):
        rows = []
        for t in range(11):
            rows.append({"method": "bs", "tuning": f"tau={t}", "dis": 0.2})
            rows.append({"method": "bs-iter-em", "tuning": f"tau={t}", "dis": 0.3})
        assert _condition_v_measure(rows) == pytest.approx(50.0)
        assert _condition_v_measure(rows[:-1]) is None


class TestBenchmark:
    def test_empty_methods(self, tmp_path):
        frame, metadata = run_benchmark(tiny_spec(methods=[]))
        assert frame.empty
        assert list(frame.columns) == RESULT_COLUMNS
        csv_path, meta_path = write_results(frame, metadata, tmp_path, "empty")
        assert csv_path.read_text().strip() == ",".join(RESULT_COLUMNS)
        assert json.loads(meta_path.read_text())["master_seed"] == 7

    def test_rows_and_labels(self):
        frame, metadata = run_benchmark(tiny_spec())
        labels = set(zip(frame["method"], frame["tuning"]))
        assert {("bs", "tau=0"), ("bs", "tau=5"), ("bs", "default")} <= labels
        assert {("glasso", "delta=0"), ("glasso", "delta=100"), ("glasso", "cv")} <= labels
        assert (frame["trials"] + frame["failures"] <= 2).all()
        assert metadata["failures"] == {"c1": 0}
        timing = metadata["seconds_per_method"]["c1"]
        assert set(timing) == {"bs", "glasso"}
        assert all(seconds >= 0.0 for seconds in timing.values())
        assert frame["FPR"].between(0.0, 1.0).all()

    def test_byte_identical_across_thread_counts(self, tmp_path, monkeypatch):
        outputs = []
        for threads in ("1", "4"):
            monkeypatch.setenv("NETTOP_THREADS", threads)
            frame, metadata = run_benchmark(tiny_spec())
            csv_path, _ = write_results(frame, metadata, tmp_path / threads, "tiny")
            outputs.append(csv_path.read_bytes())
        assert outputs[0] == outputs[1]

    def test_aborts_when_too_many_trials_fail(self, monkeypatch):
        def failing(*args, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr(evaluation, "run_trial", failing)
        with pytest.raises(BenchmarkAbortedError):
            run_benchmark(tiny_spec())
