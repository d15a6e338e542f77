"""
그룹 Lasso 기준 방법 모듈
GLasso 와 커널 GLasso 를 블록 좌표 하강(BCD)으로 풀고, 교차 검증으로 (δ, β) 를 고름

    min_θ  ½‖y - Aθ‖² + δ Σ_i ‖θ_i‖₂                    (GLasso)
    min_θ  ½‖y - Aθ‖² + δ Σ_i sqrt(θ_iᵀ K̄(β)^{-1} θ_i)     (커널 GLasso, θ_i = F φ_i 로 변환)
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from scipy.linalg import eigh, lstsq
from scipy.optimize import brentq

from src.config import get_thread_count
from src.exceptions import ConfigurationError, KernelDomainError
from src.kernel import inverse, tc_factor
from src.network_model import Topology
from src.predictor import MisoProblem, ThetaVector, train_validation_split

METHODS = ("glasso", "kglasso")
SUPPORT_EPS = 1e-8
# 이보다 작은 고유값은 0 으로 취급 (블록 Gram 의 상대 크기)
EIGEN_RTOL = 1e-12


@dataclass(frozen=True)
class GlassoConfig:
    delta: float = 0.0
    beta: Optional[float] = None
    tol: float = 1e-9
    max_sweeps: int = 10000
    normalize: bool = False

    def __post_init__(self):
        if not self.delta >= 0:
            raise ConfigurationError(f"δ는 0 이상이어야 합니다 (δ={self.delta})")
        if self.beta is not None and not 0.0 < self.beta < 1.0:
            raise KernelDomainError(f"β는 (0, 1) 범위여야 합니다 (β={self.beta})")
        if self.max_sweeps < 1:
            raise ConfigurationError(f"max_sweeps 는 1 이상이어야 합니다 ({self.max_sweeps})")


@dataclass(frozen=True, eq=False)
class GlassoFit(ThetaVector):
    """추정 계수 + 수렴 여부 (예산 소진 시 converged=False 로 표시만 하고 사용 가능)"""

    converged: bool = True
    sweeps: int = 0
    objective: float = float("nan")


@dataclass(frozen=True, eq=False)
class _Blocks:
    """블록별 Gram 고유분해와 전체 Gram/교차항"""

    n: int
    L: int
    gram: np.ndarray
    cross: np.ndarray
    energy: float
    eigvals: tuple
    eigvecs: tuple


def _prepare(problem: MisoProblem) -> _Blocks:
    gram = problem.gram
    cross = problem.cross
    n = problem.n
    eigvals, eigvecs = [], []
    for i in range(problem.L):
        block = slice(i * n, (i + 1) * n)
        w, V = eigh(gram[block, block])
        eigvals.append(np.maximum(w, 0.0))
        eigvecs.append(V)
    return _Blocks(
        n=n,
        L=problem.L,
        gram=gram,
        cross=cross,
        energy=problem.energy,
        eigvals=tuple(eigvals),
        eigvecs=tuple(eigvecs),
    )


def column_scales(problem: MisoProblem) -> np.ndarray:
    """열마다 표본당 RMS ‖a_c‖/√N (0 인 열은 1)"""
    rms = np.sqrt(np.diag(problem.gram) / max(problem.N, 1))
    return np.where(rms > 0, rms, 1.0)


def normalized_problem(problem: MisoProblem) -> tuple[MisoProblem, np.ndarray]:
    """열을 단위 RMS 로 맞춘 문제와 열 스케일 d (원래 θ = φ / d)"""
    d = column_scales(problem)
    n = problem.n
    blocks = tuple(block / d[k * n:(k + 1) * n] for k, block in enumerate(problem.blocks))
    return MisoProblem(j=problem.j, y=problem.y, blocks=blocks, n=n), d


def _fit_normalized(solver, problem: MisoProblem, cfg: GlassoConfig, init: Optional[np.ndarray]) -> GlassoFit:
    scaled, d = normalized_problem(problem)
    start = None if init is None else np.asarray(init, dtype=float).reshape(-1) * d
    result = solver(scaled, replace(cfg, normalize=False), init=start)
    return GlassoFit(
        j=problem.j, n=problem.n, sources=result.sources, coefficients=result.flat() / d,
        converged=result.converged, sweeps=result.sweeps, objective=result.objective,
    )


def _block_minimizer(g: np.ndarray, w: np.ndarray, V: np.ndarray, delta: float) -> np.ndarray:
    """min_x ½xᵀHx - gᵀx + δ‖x‖ 의 정확한 해 (H = V diag(w) Vᵀ)

    ‖g‖ ≤ δ 이면 0, 아니면 x = (H + δ/t I)^{-1} g 이고 t = ‖x‖ 는
    Σ c_k² / (t w_k + δ)² = 1 의 근
    """
    if np.linalg.norm(g) <= delta:
        return np.zeros_like(g)
    c = V.T @ g
    keep = w > EIGEN_RTOL * max(float(w.max()), 1.0)
    if not np.any(keep):
        return np.zeros_like(g)
    c, w_kept = c[keep], w[keep]
    if delta == 0.0:
        return V[:, keep] @ (c / w_kept)

    def excess(t: float) -> float:
        return float(np.sum(c ** 2 / (t * w_kept + delta) ** 2)) - 1.0

    t_high = float(np.linalg.norm(c) / w_kept.min())
    if excess(0.0) <= 0.0:
        return np.zeros_like(g)
    t = brentq(excess, 0.0, t_high, xtol=1e-14, rtol=1e-14)
    return V[:, keep] @ (c / (w_kept + delta / t))


def _objective(blocks: _Blocks, theta: np.ndarray, delta: float) -> float:
    quad = 0.5 * (blocks.energy - 2.0 * blocks.cross @ theta + theta @ blocks.gram @ theta)
    penalty = delta * np.sum(np.linalg.norm(theta.reshape(blocks.L, blocks.n), axis=1))
    return float(quad + penalty)


def _bcd(blocks: _Blocks, delta: float, tol: float, max_sweeps: int, init: Optional[np.ndarray]) -> tuple:
    n, L = blocks.n, blocks.L
    theta = np.zeros(n * L) if init is None else np.array(init, dtype=float).reshape(-1)
    # gradient_part = Aᵀy - AᵀA θ, 블록 갱신마다 해당 열만 고쳐서 유지
    residual_corr = blocks.cross - blocks.gram @ theta
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for i in range(L):
            block = slice(i * n, (i + 1) * n)
            old = theta[block].copy()
            g = residual_corr[block] + blocks.gram[block, block] @ old
            new = _block_minimizer(g, blocks.eigvals[i], blocks.eigvecs[i], delta)
            change = new - old
            if np.any(change):
                theta[block] = new
                residual_corr -= blocks.gram[:, block] @ change
                max_change = max(max_change, float(np.max(np.abs(change))))
        if max_change < tol:
            return theta, True, sweep
    return theta, False, max_sweeps


def glasso_fit(problem: MisoProblem, cfg: GlassoConfig, init: Optional[np.ndarray] = None) -> GlassoFit:
    """순환 BCD 로 GLasso 풀기 (블록마다 정확한 그룹 soft-threshold)"""
    if cfg.normalize:
        return _fit_normalized(glasso_fit, problem, cfg, init)
    sources = tuple(range(1, problem.L + 1))

    if cfg.delta == 0.0:
        # 벌점 없음 - 전체 최소제곱
        theta = lstsq(problem.full_matrix, problem.y)[0]
        return GlassoFit(
            j=problem.j, n=problem.n, sources=sources, coefficients=theta,
            converged=True, sweeps=0, objective=glasso_objective(problem, theta, 0.0),
        )

    blocks = _prepare(problem)
    theta, converged, sweeps = _bcd(blocks, cfg.delta, cfg.tol, cfg.max_sweeps, init)
    if not converged:
        logger.warning(f"노드 w{problem.j}: GLasso BCD 가 {sweeps}회 sweep 안에 수렴하지 않음 (δ={cfg.delta:g})")
    return GlassoFit(
        j=problem.j, n=problem.n, sources=sources, coefficients=theta,
        converged=converged, sweeps=sweeps, objective=_objective(blocks, theta, cfg.delta),
    )


def transformed_problem(problem: MisoProblem, beta: float) -> tuple[MisoProblem, np.ndarray]:
    """A_ji → A_ji F(β) 로 바꾼 문제와 F"""
    if not 0.0 < beta < 1.0:
        raise KernelDomainError(f"β는 (0, 1) 범위여야 합니다 (β={beta})")
    F = tc_factor(problem.n, beta)
    blocks = tuple(block @ F for block in problem.blocks)
    return MisoProblem(j=problem.j, y=problem.y, blocks=blocks, n=problem.n), F


def kernel_glasso_fit(problem: MisoProblem, cfg: GlassoConfig, init: Optional[np.ndarray] = None) -> GlassoFit:
    """θ_i = F φ_i 로 바꿔 φ 에 대한 GLasso 를 풀고 θ 로 되돌림"""
    if cfg.beta is None:
        raise ConfigurationError("커널 GLasso 에는 β 가 필요합니다")
    if cfg.normalize:
        return _fit_normalized(kernel_glasso_fit, problem, cfg, init)
    transformed, F = transformed_problem(problem, cfg.beta)
    start = None
    if init is not None:
        start = np.linalg.solve(F, np.asarray(init, dtype=float).reshape(problem.L, problem.n).T).T
    fit = glasso_fit(transformed, cfg, init=start)
    theta = fit.coefficients @ F.T
    return GlassoFit(
        j=problem.j, n=problem.n, sources=fit.sources, coefficients=theta,
        converged=fit.converged, sweeps=fit.sweeps, objective=fit.objective,
    )


def fit(problem: MisoProblem, cfg: GlassoConfig, method: str, init: Optional[np.ndarray] = None) -> GlassoFit:
    if method == "glasso":
        return glasso_fit(problem, cfg, init=init)
    if method == "kglasso":
        return kernel_glasso_fit(problem, cfg, init=init)
    raise ConfigurationError(f"알 수 없는 GLasso 방법: {method} (가능: {METHODS})")


def topology_from_theta(theta: ThetaVector, eps: float = SUPPORT_EPS) -> Topology:
    """‖θ_ji‖₂ > eps 인 모듈만 남긴 예측기 토폴로지"""
    present = [i for i, norm in theta.norms().items() if norm > eps]
    return Topology.miso(theta.j, present)


def glasso_objective(problem: MisoProblem, theta, delta: float) -> float:
    theta = theta.flat() if isinstance(theta, ThetaVector) else np.asarray(theta, dtype=float).reshape(-1)
    residual = problem.y - problem.full_matrix @ theta
    norms = np.linalg.norm(theta.reshape(problem.L, problem.n), axis=1)
    return float(0.5 * residual @ residual + delta * np.sum(norms))


def kernel_penalty(theta: ThetaVector, beta: float, delta: float) -> float:
    """δ Σ sqrt(θ_iᵀ K̄(β)^{-1} θ_i)"""
    K_inv = inverse(theta.n, beta)
    return float(delta * sum(np.sqrt(max(row @ K_inv @ row, 0.0)) for row in theta.coefficients))


def kkt_residuals(problem: MisoProblem, theta, delta: float) -> np.ndarray:
    """블록별 KKT 잔차

    0 블록: max(0, ‖A_iᵀr‖ - δ), 0 이 아닌 블록: ‖A_iᵀr - δ θ_i/‖θ_i‖‖
    """
    theta = theta.flat() if isinstance(theta, ThetaVector) else np.asarray(theta, dtype=float).reshape(-1)
    gradient = problem.cross - problem.gram @ theta
    residuals = np.zeros(problem.L)
    for i in range(problem.L):
        block = slice(i * problem.n, (i + 1) * problem.n)
        norm = np.linalg.norm(theta[block])
        if norm == 0.0:
            residuals[i] = max(0.0, float(np.linalg.norm(gradient[block])) - delta)
        else:
            residuals[i] = float(np.linalg.norm(gradient[block] - delta * theta[block] / norm))
    return residuals


def prox_gradient_fit(
    problem: MisoProblem,
    delta: float,
    max_iterations: int = 200000,
    tol: float = 1e-13,
) -> GlassoFit:
    """가속 근위 경사법 (FISTA) - BCD 결과 검증용 독립 해법"""
    gram, cross = problem.gram, problem.cross
    step = 1.0 / max(float(np.linalg.eigvalsh(gram)[-1]), 1e-300)
    theta = np.zeros(gram.shape[0])
    momentum = theta.copy()
    t = 1.0
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        z = (momentum + step * (cross - gram @ momentum)).reshape(problem.L, problem.n)
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        shrink = np.maximum(0.0, 1.0 - step * delta / np.maximum(norms, 1e-300))
        theta_next = (z * shrink).reshape(-1)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        momentum = theta_next + ((t - 1.0) / t_next) * (theta_next - theta)
        change = float(np.max(np.abs(theta_next - theta)))
        theta, t = theta_next, t_next
        if change < tol:
            converged = True
            break
    return GlassoFit(
        j=problem.j, n=problem.n, sources=tuple(range(1, problem.L + 1)), coefficients=theta,
        converged=converged, sweeps=iteration, objective=glasso_objective(problem, theta, delta),
    )


def regularization_path(
    problem: MisoProblem,
    delta_grid: Sequence[float],
    cfg: GlassoConfig = GlassoConfig(),
    method: str = "glasso",
) -> pd.DataFrame:
    """δ 그리드(내림차순 warm start)에 대한 블록 노름 경로"""
    rows = []
    previous = None
    for delta in sorted(delta_grid, reverse=True):
        result = fit(problem, replace(cfg, delta=float(delta)), method, init=previous)
        previous = result.coefficients
        row = {"delta": float(delta)}
        row.update({f"norm_w{i}": norm for i, norm in result.norms().items()})
        row["objective"] = glasso_objective(problem, result, float(delta))
        row["converged"] = result.converged
        rows.append(row)
    frame = pd.DataFrame(rows)
    if frame.empty:
        return frame
    return frame.sort_values("delta").reset_index(drop=True)


def _validate_grids(delta_grid: Sequence[float], beta_grid: Sequence[float], method: str):
    if method not in METHODS:
        raise ConfigurationError(f"알 수 없는 GLasso 방법: {method} (가능: {METHODS})")
    if len(delta_grid) == 0:
        raise ConfigurationError("δ 그리드가 비어 있습니다")
    if any(not d >= 0 for d in delta_grid):
        raise ConfigurationError(f"δ 그리드에 음수가 있습니다: {list(delta_grid)}")
    if method == "kglasso":
        if len(beta_grid) == 0:
            raise ConfigurationError("β 그리드가 비어 있습니다")
        if any(not 0.0 < b < 1.0 for b in beta_grid):
            raise ConfigurationError(f"β 그리드는 (0, 1) 범위여야 합니다: {list(beta_grid)}")


def _validation_path(
    train: MisoProblem,
    validation: MisoProblem,
    delta_grid: Sequence[float],
    cfg: GlassoConfig,
    method: str,
) -> list[float]:
    """한 β 에 대해 δ 내림차순 warm start 로 적합하고 검증 RMSE 반환 (입력 그리드 순서)"""
    errors = [np.inf] * len(delta_grid)
    previous = None
    for k in sorted(range(len(delta_grid)), key=lambda k: -delta_grid[k]):
        result = fit(train, replace(cfg, delta=float(delta_grid[k])), method, init=previous)
        previous = result.coefficients
        prediction = validation.full_matrix @ result.flat()
        errors[k] = float(np.sqrt(np.mean((validation.y - prediction) ** 2)))
    return errors


def cross_validate(
    problem: MisoProblem,
    delta_grid: Sequence[float],
    beta_grid: Sequence[float] = (),
    method: str = "glasso",
    n_train: Optional[int] = None,
    cfg: GlassoConfig = GlassoConfig(),
) -> GlassoConfig:
    """앞쪽 floor(2(N+1)/3) 샘플로 학습, 나머지의 한 단계 예측 RMSE 가 가장 작은 설정 선택

    동점이면 그리드에서 먼저 나온 (β, δ) 를 유지
    """
    _validate_grids(delta_grid, beta_grid, method)
    train, validation = train_validation_split(problem, n_train)
    betas = [float(b) for b in beta_grid] if method == "kglasso" else [cfg.beta]

    with ThreadPoolExecutor(max_workers=max(1, min(get_thread_count(), len(betas)))) as executor:
        futures = [
            executor.submit(_validation_path, train, validation, list(delta_grid), replace(cfg, beta=b), method)
            for b in betas
        ]
        table = [future.result() for future in futures]

    best = None
    for b, errors in zip(betas, table):
        for delta, error in zip(delta_grid, errors):
            if best is None or error < best[0]:
                best = (error, float(delta), b)
    error, delta, beta = best
    logger.debug(f"노드 w{problem.j} {method} 교차 검증: δ={delta:g}, β={beta}, RMSE={error:.6g}")
    return replace(cfg, delta=delta, beta=beta)


def identify_network_glasso(
    problems: Sequence[MisoProblem],
    delta_grid: Sequence[float],
    beta_grid: Sequence[float] = (),
    method: str = "glasso",
    cfg: GlassoConfig = GlassoConfig(normalize=True),
) -> tuple[Topology, list[GlassoConfig], list[GlassoFit]]:
    """MISO 문제마다 교차 검증으로 (δ, β) 를 골라 전체 데이터로 다시 적합하고 간선을 합침"""
    configs, fits = [], []
    edges = frozenset()
    for problem in problems:
        chosen = cross_validate(problem, delta_grid, beta_grid, method=method, cfg=cfg)
        result = fit(problem, chosen, method)
        configs.append(chosen)
        fits.append(result)
        edges |= topology_from_theta(result).without_self_loops().edges
    return Topology(edges=edges), configs, fits


def identify_network_glasso_fixed(
    problems: Sequence[MisoProblem],
    cfg: GlassoConfig,
    method: str = "glasso",
) -> tuple[Topology, list[GlassoFit]]:
    """모든 MISO 문제에 같은 (δ, β) 를 적용 (ROC 곡선의 한 점)"""
    fits = [fit(problem, cfg, method) for problem in problems]
    edges = frozenset()
    for result in fits:
        edges |= topology_from_theta(result).without_self_loops().edges
    return Topology(edges=edges), fits
