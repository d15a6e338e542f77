import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import src.network_model as network_model
from src.exceptions import ConfigurationError, SimulationDivergedError
from src.network_model import (
    DECAY_STEPS,
    DataSet,
    NetworkSystem,
    RationalTransfer,
    Topology,
    check_validity,
    closed_loop_impulse,
    decay_horizon,
    draw_edges,
    generate_random,
    load_dataset,
    load_system,
    predictor_topology,
    propagate,
    save_dataset,
    save_system,
    simulate,
    stationary_variance,
    true_topology,
)

from conftest import chain_system


def unstable_loop() -> NetworkSystem:
    return NetworkSystem.from_modules(
        2, {(1, 2): RationalTransfer.delay(1.2), (2, 1): RationalTransfer.delay(1.2)}
    )


def ar_noise(pole: float) -> RationalTransfer:
    return RationalTransfer(num=(1.0,), den=(1.0, -pole))


class TestSimulate:
    def test_identity_noise_model_returns_noise(self):
        system = NetworkSystem.from_modules(1, {})
        data = simulate(system, 3, seed=5)
        expected = np.random.default_rng(5).standard_normal((3, 1))[:, 0]
        assert_array_equal(data.column(1), expected)

    def test_pure_delay(self):
        e = np.zeros((20, 2))
        e[:, 0] = np.arange(1.0, 21.0)
        w = propagate(chain_system(), e)
        assert w[0, 1] == 0.0
        assert_allclose(w[1:, 1], w[:-1, 0])

    def test_deterministic(self):
        a = simulate(chain_system(), 200, seed=3)
        b = simulate(chain_system(), 200, seed=3)
        assert_array_equal(a.w, b.w)
        assert not np.array_equal(a.w, simulate(chain_system(), 200, seed=4).w)

    def test_divergence_names_node(self):
        with pytest.raises(SimulationDivergedError) as info:
            simulate(unstable_loop(), 1000, seed=0)
        assert info.value.node in (1, 2)

    def test_rejects_empty_length(self):
        with pytest.raises(ConfigurationError):
            simulate(chain_system(), 0)

    def test_ar_noise_variance(self):
        system = NetworkSystem.from_modules(1, {}, H=[ar_noise(0.5)])
        w = simulate(system, 100_000, seed=1).column(1)
        # 정상 분산 1 / (1 - 0.5²)
        assert abs(np.var(w) / (4.0 / 3.0) - 1.0) < 0.05
        assert_allclose(stationary_variance(system), [4.0 / 3.0], rtol=1e-9)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_random_system_variance_envelope(self, seed):
        system = generate_random(6, 0.5, seed=seed)
        data = simulate(system, 500, seed=seed)
        ratio = np.var(data.w, axis=0) / stationary_variance(system)
        assert np.all(ratio > 0.1) and np.all(ratio < 10.0)


class TestValidity:
    def test_open_loop_is_valid(self):
        system = NetworkSystem.from_modules(3, {}, H=[ar_noise(0.3)] * 3)
        assert check_validity(system)

    def test_high_gain_loop_is_invalid(self):
        report = check_validity(unstable_loop())
        assert not report
        assert report.diagnostics

    def test_noise_pole_on_unit_circle_is_invalid(self):
        system = NetworkSystem.from_modules(1, {}, H=[ar_noise(1.0)])
        assert not check_validity(system)

    def test_non_strictly_proper_module_is_invalid(self):
        system = NetworkSystem.from_modules(2, {(1, 2): RationalTransfer(num=(0.5,), den=(1.0,))})
        assert not check_validity(system)

    def test_chain_is_valid(self):
        assert check_validity(chain_system())


class TestTopology:
    def test_true_topology_examples(self):
        assert len(true_topology(NetworkSystem.from_modules(3, {}))) == 0
        assert true_topology(chain_system()).to_list() == [[1, 2]]

    def test_predictor_topology_adds_self_loop_for_colored_noise(self):
        assert predictor_topology(chain_system()).to_list() == [[1, 2]]
        system = NetworkSystem.from_modules(
            2, {(1, 2): RationalTransfer.delay()}, H=[RationalTransfer.unit(), ar_noise(0.5)]
        )
        assert predictor_topology(system).to_list() == [[1, 2], [2, 2]]

    def test_network_topology_rejects_self_loops(self):
        with pytest.raises(ConfigurationError):
            Topology.from_edges([(1, 1)])
        assert (1, 1) in Topology.from_edges([(1, 1)], self_loops=True)

    def test_sources_sorted(self):
        assert Topology.miso(2, [3, 1, 2]).sources(2) == (1, 2, 3)


class TestGenerateRandom:
    @pytest.mark.parametrize("N, expected", [(None, DECAY_STEPS), (50, DECAY_STEPS), (500, 5000), (2000, 20000)])
    def test_decay_horizon(self, N, expected):
        assert decay_horizon(N) == expected

    def test_validity_check_uses_record_length(self, monkeypatch):
        seen = []
        original = network_model.check_validity

        def spy(system, decay_steps=DECAY_STEPS):
            seen.append(decay_steps)
            return original(system, decay_steps)

        monkeypatch.setattr(network_model, "check_validity", spy)
        generate_random(3, 0.5, seed=4, N=500)
        assert seen and set(seen) == {5000}

    def test_no_edges(self):
        assert len(true_topology(generate_random(4, 0.0, seed=0))) == 0

    def test_all_edges_two_nodes(self):
        assert true_topology(generate_random(2, 1.0, seed=0)).to_list() == [[1, 2], [2, 1]]

    def test_module_properties(self):
        system = generate_random(6, 0.5, seed=7)
        for _, _, tf in system.modules():
            assert abs(tf.l2_norm() - 1.0) <= 1e-6
            assert tf.is_strictly_proper() and tf.is_stable()
            assert 2 <= tf.order <= 5
        for h in system.H:
            assert h.is_monic() and h.num[0] == pytest.approx(1.0)
            assert h.is_stable() and h.is_minimum_phase()
        assert check_validity(system)

    def test_deterministic(self):
        a = generate_random(4, 0.5, seed=12)
        b = generate_random(4, 0.5, seed=12)
        assert a.to_dict() == b.to_dict()

    def test_edge_frequency(self):
        rng = np.random.default_rng(0)
        trials, p = 2000, 0.5
        counts = np.zeros((6, 6))
        sizes = []
        for _ in range(trials):
            edges = draw_edges(rng, 6, p)
            sizes.append(len(edges))
            for i, j in edges:
                counts[i - 1, j - 1] += 1
        freq = counts / trials
        off = ~np.eye(6, dtype=bool)
        assert np.all(np.abs(freq[off] - p) <= 4 * np.sqrt(p * (1 - p) / trials))
        assert np.all(freq[~off] == 0.0)
        assert abs(np.mean(sizes) - 15.0) < 2.0

    def test_bad_edge_prob(self):
        with pytest.raises(ConfigurationError):
            generate_random(3, 1.5)


class TestPersistence:
    def test_system_round_trip(self, tmp_path):
        system = generate_random(3, 0.5, seed=4)
        loaded = load_system(save_system(system, tmp_path / "system.json"))
        assert loaded.to_dict() == system.to_dict()

    def test_dataset_round_trip(self, tmp_path):
        data = simulate(chain_system(), 50, seed=2)
        loaded = load_dataset(save_dataset(data, tmp_path / "data.csv"))
        assert_array_equal(loaded.w, data.w)

    def test_dataset_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        pd.DataFrame({"a": [1.0], "b": [2.0]}).to_csv(path, index=False)
        with pytest.raises(ConfigurationError):
            load_dataset(path)

    def test_dataset_rejects_non_finite(self):
        with pytest.raises(ConfigurationError):
            DataSet(w=np.array([[1.0], [np.nan]]))


def test_closed_loop_impulse_of_delay_chain():
    response = closed_loop_impulse(chain_system(), horizon=5)
    assert response[0, 0, 0] == 1.0
    assert response[1, 1, 0] == 1.0
    assert response[0, 1, 0] == 0.0
    assert np.all(response[:, 0, 1] == 0.0)
