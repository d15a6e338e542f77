"""
공용 픽스처
"""

import numpy as np
import pytest

from src.network_model import DataSet, NetworkSystem, RationalTransfer, simulate
from src.predictor import MisoProblem, build_miso, toeplitz_block


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 몬테카를로 반복이 많은 테스트 (-m \"not slow\" 로 제외)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_problem(rng: np.random.Generator, N: int, L: int, n: int, j: int = 1) -> MisoProblem:
    """백색 잡음 데이터로 만든 MISO 문제"""
    data = DataSet(w=rng.standard_normal((N, L)))
    return build_miso(data, j, n)


def single_block_problem(y: np.ndarray, u: np.ndarray, n: int) -> MisoProblem:
    """출력 y, 회귀 신호 u 하나로 이루어진 문제 (모듈 번호 1)"""
    return MisoProblem(j=1, y=np.asarray(y, dtype=float), blocks=(toeplitz_block(u, n),), n=n)


def chain_system(gain: float = 1.0, sigma: float = 1.0) -> NetworkSystem:
    """w_1 → w_2 순수 지연 체인, H = I"""
    return NetworkSystem.from_modules(2, {(1, 2): RationalTransfer.delay(gain)}, sigma=[sigma, sigma])


@pytest.fixture
def random_problem_factory(rng):
    def make(N: int = 30, L: int = 2, n: int = 5, j: int = 1) -> MisoProblem:
        return random_problem(rng, N, L, n, j)
    return make


@pytest.fixture
def chain_data():
    return simulate(chain_system(), 1000, seed=11)
