"""
예측기 회귀 모듈
데이터셋을 노드별 MISO 선형 회귀 w_j^N = A_j θ_j + e_j^N 형태로 변환
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.linalg import toeplitz

from src.exceptions import ConfigurationError
from src.network_model import DataSet, Topology


@dataclass(frozen=True, eq=False)
class MisoProblem:
    """노드 j 의 MISO 회귀 문제. blocks[i - 1] 은 A_ji (N×n Toeplitz)"""

    j: int
    y: np.ndarray
    blocks: tuple
    n: int

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def L(self) -> int:
        return len(self.blocks)

    def block(self, i: int) -> np.ndarray:
        return self.blocks[i - 1]

    @cached_property
    def full_matrix(self) -> np.ndarray:
        """A_j = [A_j1, ..., A_jL]"""
        return np.hstack(self.blocks)

    @cached_property
    def gram(self) -> np.ndarray:
        """A_jᵀ A_j (nL×nL)"""
        return self.full_matrix.T @ self.full_matrix

    @cached_property
    def cross(self) -> np.ndarray:
        """A_jᵀ y"""
        return self.full_matrix.T @ self.y

    @cached_property
    def energy(self) -> float:
        """yᵀ y"""
        return float(self.y @ self.y)

    def columns(self, sources: Iterable[int]) -> np.ndarray:
        """출발 노드 목록에 해당하는 A_j 열 인덱스 (오름차순 블록 순서)"""
        sources = sorted(sources)
        if not sources:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.arange((i - 1) * self.n, i * self.n) for i in sources])

    def rows(self, start: int, stop: int) -> "MisoProblem":
        """행 구간 [start, stop) 만 남긴 문제 (Toeplitz 블록은 전체 데이터 기준 유지)"""
        return MisoProblem(
            j=self.j,
            y=self.y[start:stop],
            blocks=tuple(block[start:stop] for block in self.blocks),
            n=self.n,
        )


@dataclass(frozen=True, eq=False)
class ThetaVector:
    """토폴로지에 포함된 모듈별 계수 벡터 θ_ji (각 길이 n)"""

    j: int
    n: int
    sources: tuple
    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.asarray(self.coefficients, dtype=float).reshape(len(self.sources), self.n)
        object.__setattr__(self, "sources", tuple(int(i) for i in self.sources))
        object.__setattr__(self, "coefficients", coefficients)

    def block(self, i: int) -> np.ndarray:
        return self.coefficients[self.sources.index(i)]

    def flat(self) -> np.ndarray:
        return self.coefficients.reshape(-1)

    def norms(self) -> dict[int, float]:
        return {i: float(np.linalg.norm(row)) for i, row in zip(self.sources, self.coefficients)}


def toeplitz_block(signal: np.ndarray, n: int) -> np.ndarray:
    """(t, k) 원소가 w(t - k) 인 N×n 행렬, t ≤ 0 구간은 0"""
    signal = np.asarray(signal, dtype=float)
    first_column = np.concatenate([[0.0], signal[:-1]])
    return toeplitz(first_column, np.zeros(n))


def build_miso(data: DataSet, j: int, n: int) -> MisoProblem:
    """노드 j 의 출력 벡터와 L개 Toeplitz 회귀 블록 생성 (자기 루프 블록 포함)"""
    if not 1 <= j <= data.L:
        raise ConfigurationError(f"노드 번호 j={j} 가 범위 [1, {data.L}] 밖입니다")
    if n < 1:
        raise ConfigurationError(f"FIR 차수 n은 1 이상이어야 합니다 (n={n})")
    blocks = tuple(toeplitz_block(data.column(i), n) for i in range(1, data.L + 1))
    return MisoProblem(j=j, y=data.column(j).copy(), blocks=blocks, n=n)


def restrict(problem: MisoProblem, g: Topology) -> tuple[np.ndarray, list[int]]:
    """g 에서 노드 j 로 들어오는 모듈 블록만 가로로 쌓은 A_j|G_j 와 모듈 번호 목록"""
    sources = list(g.sources(problem.j))
    if any(not 1 <= i <= problem.L for i in sources):
        raise ConfigurationError(f"토폴로지의 출발 노드 {sources} 가 범위 [1, {problem.L}] 밖입니다")
    if not sources:
        return np.zeros((problem.N, 0)), []
    return np.hstack([problem.block(i) for i in sources]), sources


def stack(problem: MisoProblem) -> np.ndarray:
    return problem.full_matrix


def training_length(N: int) -> int:
    """교차 검증 학습 구간 길이 floor(2(N + 1)/3)"""
    return (2 * (N + 1)) // 3


def train_validation_split(problem: MisoProblem, n_train: int = None) -> tuple[MisoProblem, MisoProblem]:
    if n_train is None:
        n_train = training_length(problem.N)
    if n_train >= problem.N:
        raise ConfigurationError(f"검증 구간이 비어 있습니다 (N={problem.N}, 학습 길이={n_train})")
    return problem.rows(0, n_train), problem.rows(n_train, problem.N)
