"""
TC 커널 모듈
임펄스 응답 사전분포의 커널 블록 K̄(β) (원소 β^{max(k,q)}) 과
블록 대각 사전 공분산 K_j 를 구성
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag
from scipy.special import logsumexp

from src.exceptions import KernelDomainError, SingularKernelError

# EM 의 β 탐색 구간 (β = 0 은 특이 커널)
BETA_MIN = 1e-6
BETA_MAX = 0.999
# 역행렬 계산에 쓰이는 λ 하한
LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelBlock:
    n: int
    beta: float
    lam: float = 1.0


def _check_domain(block: KernelBlock, open_interval: bool):
    if block.n < 1:
        raise KernelDomainError(f"커널 차수 n은 1 이상이어야 합니다 (n={block.n})")
    if block.lam <= 0:
        raise KernelDomainError(f"λ는 양수여야 합니다 (λ={block.lam})")
    if open_interval:
        if block.beta == 0.0:
            raise SingularKernelError("β = 0 이면 커널이 특이 행렬입니다")
        if not 0.0 < block.beta < 1.0:
            raise KernelDomainError(f"β는 (0, 1) 범위여야 합니다 (β={block.beta})")
    elif not 0.0 <= block.beta < 1.0:
        raise KernelDomainError(f"β는 [0, 1) 범위여야 합니다 (β={block.beta})")


def materialize(block: KernelBlock) -> np.ndarray:
    """λ·β^{max(k,q)}, k, q = 1..n"""
    _check_domain(block, open_interval=False)
    idx = np.arange(1, block.n + 1)
    return block.lam * np.power(block.beta, np.maximum.outer(idx, idx))


def tc_factor(n: int, beta: float) -> np.ndarray:
    """K̄(β) 의 닫힌 형태 하삼각 Cholesky 인자

    F[k, 0] = β^{k - 1/2}, F[k, m] = β^{k - m/2}·sqrt(1 - β) (k ≥ m ≥ 2, 1부터 센 인덱스)
    """
    k = np.arange(1, n + 1)[:, None]
    m = np.arange(1, n + 1)[None, :]
    factor = np.where(k >= m, np.power(beta, np.maximum(k - m / 2.0, 0.0)) * np.sqrt(1.0 - beta), 0.0)
    factor[:, 0] = np.power(beta, k[:, 0] - 0.5)
    return factor


def factor(block: KernelBlock) -> np.ndarray:
    """F·Fᵀ = λ K̄(β) 인 하삼각 F"""
    _check_domain(block, open_interval=True)
    return np.sqrt(block.lam) * tc_factor(block.n, block.beta)


def log_det(n: int, beta: float) -> float:
    """log det K̄(β) = n(n+1)/2·log β + (n-1)·log(1-β)"""
    return 0.5 * n * (n + 1) * np.log(beta) + (n - 1) * np.log1p(-beta)


def _log_pivots(n: int, beta: float) -> np.ndarray:
    """K̄ = U D Uᵀ (U 는 1로 채운 상삼각) 분해의 log D"""
    m = np.arange(1, n + 1)
    log_d = m * np.log(beta) + np.log1p(-beta)
    log_d[-1] = n * np.log(beta)
    return log_d


def _difference_diagonal(M: np.ndarray) -> np.ndarray:
    """U^{-1} M U^{-T} 의 대각 (U^{-1} 은 1, -1 이중대각)"""
    M = np.asarray(M, dtype=float)
    diag = np.diag(M).copy()
    if M.shape[0] > 1:
        diag[:-1] += -2.0 * np.diag(M, 1) + np.diag(M)[1:]
    return np.maximum(diag, 0.0)


def log_inverse_trace(n: int, beta: float, M: np.ndarray) -> float:
    """log tr(K̄(β)^{-1} M), 작은 β 에서도 넘치지 않도록 로그 공간에서 계산"""
    weights = _difference_diagonal(M)
    if not np.any(weights > 0):
        return -np.inf
    return float(logsumexp(-_log_pivots(n, beta), b=weights))


def inverse_quadratic(block: KernelBlock, M: np.ndarray) -> tuple[float, float]:
    """tr(K̄(β)^{-1} M) 와 log det K̄(β) - 삼중대각 역행렬의 닫힌 형태 이용"""
    _check_domain(block, open_interval=True)
    if block.beta >= 1.0:
        raise KernelDomainError(f"β는 1 미만이어야 합니다 (β={block.beta})")
    trace = float(np.exp(log_inverse_trace(block.n, block.beta, M)))
    return trace, float(log_det(block.n, block.beta))


def inverse(n: int, beta: float) -> np.ndarray:
    """K̄(β)^{-1} (삼중대각)"""
    _check_domain(KernelBlock(n=n, beta=beta), open_interval=True)
    difference = np.eye(n) - np.eye(n, k=1)
    return difference.T @ np.diag(np.exp(-_log_pivots(n, beta))) @ difference


@dataclass(frozen=True)
class PriorCovariance:
    """모듈별 커널 블록을 블록 대각으로 모은 K_j"""

    blocks: tuple

    @property
    def dim(self) -> int:
        return sum(b.n for b in self.blocks)

    def materialize(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((0, 0))
        return block_diag(*[materialize(b) for b in self.blocks])

    def factor(self) -> np.ndarray:
        """λ 하한을 적용한 블록 대각 하삼각 인자"""
        if not self.blocks:
            return np.zeros((0, 0))
        return block_diag(*[
            np.sqrt(max(b.lam, LAMBDA_FLOOR)) * tc_factor(b.n, b.beta) for b in self.blocks
        ])
