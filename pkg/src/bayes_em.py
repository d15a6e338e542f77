"""
베이지안 주변우도 / EM 하이퍼파라미터 추정 모듈

J(G_j; η_j) = -yᵀ Γ^{-1} y - log det Γ,  Γ = σ² I + A K Aᵀ
모든 계산은 θ = F φ (F Fᵀ = K) 로 백색화한 좌표에서 수행하여 K^{-1} 없이 처리
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize_scalar

from src.exceptions import (
    ConfigurationError,
    MonotonicityViolationError,
    NumericalFailureError,
)
from src.kernel import (
    BETA_MAX,
    BETA_MIN,
    LAMBDA_FLOOR,
    KernelBlock,
    PriorCovariance,
    inverse,
    log_det,
    log_inverse_trace,
)
from src.network_model import Topology
from src.predictor import MisoProblem

DEFAULT_BETA = 0.5
DEFAULT_LAMBDA = 0.5
SIGMA_INIT_MEAN = 1.0
SIGMA_INIT_STD = 0.2
BETA_GRID_POINTS = 20
BETA_TOL = 1e-4
JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class HyperParams:
    """η_j = (σ_j, λ_j, β_j) - 모듈(출발 노드)마다 (λ, β) 한 쌍"""

    sigma: float
    sources: tuple = ()
    lam: tuple = ()
    beta: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "sources", tuple(int(i) for i in self.sources))
        object.__setattr__(self, "lam", tuple(float(x) for x in self.lam))
        object.__setattr__(self, "beta", tuple(float(x) for x in self.beta))
        if not len(self.sources) == len(self.lam) == len(self.beta):
            raise ConfigurationError("모듈, λ, β 개수가 서로 다릅니다")
        if list(self.sources) != sorted(set(self.sources)):
            raise ConfigurationError(f"모듈 번호는 중복 없이 오름차순이어야 합니다: {self.sources}")
        if not self.sigma > 0:
            raise ConfigurationError(f"σ는 양수여야 합니다 (σ={self.sigma})")
        if any(not lam > 0 for lam in self.lam):
            raise ConfigurationError(f"λ는 양수여야 합니다: {self.lam}")
        if any(not 0.0 < b < 1.0 for b in self.beta):
            raise ConfigurationError(f"β는 (0, 1) 범위여야 합니다: {self.beta}")

    @classmethod
    def default(
        cls,
        sources: Iterable[int],
        sigma: float = SIGMA_INIT_MEAN,
        lam: float = DEFAULT_LAMBDA,
        beta: float = DEFAULT_BETA,
    ) -> "HyperParams":
        sources = tuple(sorted(sources))
        return cls(sigma=sigma, sources=sources, lam=(lam,) * len(sources), beta=(beta,) * len(sources))

    def pair(self, i: int) -> tuple[float, float]:
        k = self.sources.index(i)
        return self.lam[k], self.beta[k]

    def restrict(self, sources: Iterable[int]) -> "HyperParams":
        sources = tuple(sorted(sources))
        missing = [i for i in sources if i not in self.sources]
        if missing:
            raise ConfigurationError(f"하이퍼파라미터에 모듈 {missing} 가 없습니다")
        pairs = [self.pair(i) for i in sources]
        return HyperParams(
            sigma=self.sigma,
            sources=sources,
            lam=tuple(p[0] for p in pairs),
            beta=tuple(p[1] for p in pairs),
        )

    def extend(self, sources: Iterable[int], fallback: "HyperParams") -> "HyperParams":
        """sources 의 각 모듈에 대해 자신의 값, 없으면 fallback 값 사용 (σ 는 자신의 값)"""
        sources = tuple(sorted(sources))
        pairs = [self.pair(i) if i in self.sources else fallback.pair(i) for i in sources]
        return HyperParams(
            sigma=self.sigma,
            sources=sources,
            lam=tuple(p[0] for p in pairs),
            beta=tuple(p[1] for p in pairs),
        )

    def prior(self, n: int) -> PriorCovariance:
        return PriorCovariance(blocks=tuple(
            KernelBlock(n=n, beta=b, lam=lam) for lam, b in zip(self.lam, self.beta)
        ))

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "modules": [
                {"source": i, "lambda": lam, "beta": b}
                for i, lam, b in zip(self.sources, self.lam, self.beta)
            ],
        }


@dataclass(frozen=True, eq=False)
class Posterior:
    """θ_j | w_j ~ N(mean, precision^{-1})"""

    sources: tuple
    mean: np.ndarray
    precision: np.ndarray
    covariance: np.ndarray


@dataclass
class EmTrace:
    values: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    clamped: bool = False


@dataclass(frozen=True)
class EmOptions:
    max_iterations: int = 200
    tol: float = 1e-6
    slack: float = 1e-8
    strict: bool = True


@dataclass(frozen=True, eq=False)
class _Whitened:
    """θ = F φ 좌표의 충분통계량"""

    sources: tuple
    factor: np.ndarray
    gram: np.ndarray
    cross: np.ndarray


def draw_initial_sigma(rng: np.random.Generator) -> float:
    """σ^(0) ~ N(1, 0.2²), 양수가 나올 때까지 재추출"""
    while True:
        sigma = rng.normal(SIGMA_INIT_MEAN, SIGMA_INIT_STD)
        if sigma > 0:
            return float(sigma)


def default_hypers(sources: Iterable[int], sigma: float = SIGMA_INIT_MEAN) -> HyperParams:
    return HyperParams.default(sources, sigma=sigma)


def restrict_hypers(full: HyperParams, g: Topology, j: Optional[int] = None) -> HyperParams:
    """g 에 없는 모듈의 (λ, β) 를 버림. j 를 주면 노드 j 로 들어오는 간선만 고려"""
    if j is None:
        sources = sorted({i for i, _ in g.edges})
    else:
        sources = g.sources(j)
    return full.restrict(sources)


def _sources(problem: MisoProblem, g: Topology) -> tuple:
    sources = g.sources(problem.j)
    if any(not 1 <= i <= problem.L for i in sources):
        raise ConfigurationError(f"토폴로지의 출발 노드 {sources} 가 범위 [1, {problem.L}] 밖입니다")
    return sources


def _whiten(problem: MisoProblem, sources: Sequence[int], eta: HyperParams) -> _Whitened:
    eta = eta.restrict(sources)
    factor = eta.prior(problem.n).factor()
    cols = problem.columns(sources)
    gram = factor.T @ problem.gram[np.ix_(cols, cols)] @ factor
    cross = factor.T @ problem.cross[cols]
    return _Whitened(sources=tuple(sources), factor=factor, gram=gram, cross=cross)


def _cholesky(matrix: np.ndarray, what: str) -> np.ndarray:
    """하삼각 Cholesky. 실패하면 1e-10·tr/dim 지터를 한 번만 더하고 재시도"""
    try:
        return cholesky(matrix, lower=True)
    except (LinAlgError, ValueError):
        dim = matrix.shape[0]
        jitter = JITTER_SCALE * float(np.trace(matrix)) / dim
        logger.warning(f"{what} 가 양의 정부호가 아님 - 지터 {jitter:.3g} 추가")
        try:
            return cholesky(matrix + jitter * np.eye(dim), lower=True)
        except (LinAlgError, ValueError) as e:
            raise NumericalFailureError(f"{what} Cholesky 분해 실패: {e}") from e


def _score_lemma(problem: MisoProblem, white: _Whitened, sigma: float) -> float:
    """역행렬 보조정리 (np×np) 형태"""
    s2 = sigma ** 2
    P = np.eye(white.gram.shape[0]) + white.gram / s2
    chol = _cholesky(P, "I + FᵀAᵀAF/σ²")
    alpha = cho_solve((chol, True), white.cross)
    quad = (problem.energy - white.cross @ alpha / s2) / s2
    logdet = problem.N * np.log(s2) + 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-quad - logdet)


def _score_gamma(problem: MisoProblem, white: _Whitened, sigma: float) -> float:
    """N×N Γ 형태"""
    B = problem.full_matrix[:, problem.columns(white.sources)] @ white.factor
    gamma = sigma ** 2 * np.eye(problem.N) + B @ B.T
    chol = _cholesky(gamma, "Γ")
    solved = solve_triangular(chol, problem.y, lower=True)
    return float(-(solved @ solved) - 2.0 * np.sum(np.log(np.diag(chol))))


def score(problem: MisoProblem, g: Topology, eta: HyperParams, form: str = "auto") -> float:
    """J(G_j; η_j) - 상수항을 뺀 2·log P(D_j | G_j; η_j)

    form: "auto" (작은 쪽 선택), "gamma" (N×N), "lemma" (np×np)
    """
    return score_sources(problem, _sources(problem, g), eta, form=form)


def score_sources(problem: MisoProblem, sources: Sequence[int], eta: HyperParams, form: str = "auto") -> float:
    sources = tuple(sorted(sources))
    dim = problem.n * len(sources)
    if dim == 0:
        s2 = eta.sigma ** 2
        return float(-problem.energy / s2 - problem.N * np.log(s2))
    if form == "auto":
        form = "gamma" if problem.N <= dim else "lemma"
    white = _whiten(problem, sources, eta)
    if form == "gamma":
        return _score_gamma(problem, white, eta.sigma)
    if form == "lemma":
        return _score_lemma(problem, white, eta.sigma)
    raise ConfigurationError(f"알 수 없는 score 형태: {form}")


def log_bayes_factor(problem: MisoProblem, g1: Topology, g2: Topology, eta: HyperParams) -> float:
    """log P(D_j|G1) - log P(D_j|G2)"""
    return 0.5 * (score(problem, g1, eta) - score(problem, g2, eta))


def network_score(problems: Sequence[MisoProblem], graphs: Sequence[Topology], etas: Sequence[HyperParams]) -> float:
    """MISO 분해에 따른 네트워크 전체 점수 Σ_j J_j"""
    return float(sum(score(p, g, eta) for p, g, eta in zip(problems, graphs, etas)))


def posterior(problem: MisoProblem, g: Topology, eta: HyperParams) -> Posterior:
    """가우시안 사후분포 - 평균은 (AᵀA + σ² K^{-1})^{-1} Aᵀ y 와 같음"""
    sources = _sources(problem, g)
    eta = eta.restrict(sources)
    dim = problem.n * len(sources)
    if dim == 0:
        empty = np.zeros((0, 0))
        return Posterior(sources=sources, mean=np.zeros(0), precision=empty, covariance=empty)

    s2 = eta.sigma ** 2
    white = _whiten(problem, sources, eta)
    P = np.eye(dim) + white.gram / s2
    chol = _cholesky(P, "사후 정밀도")
    mean = white.factor @ cho_solve((chol, True), white.cross) / s2
    covariance = white.factor @ cho_solve((chol, True), white.factor.T)

    cols = problem.columns(sources)
    prior_precision = np.zeros((dim, dim))
    for k, (lam, beta) in enumerate(zip(eta.lam, eta.beta)):
        block = slice(k * problem.n, (k + 1) * problem.n)
        prior_precision[block, block] = inverse(problem.n, beta) / max(lam, LAMBDA_FLOOR)
    precision = problem.gram[np.ix_(cols, cols)] / s2 + prior_precision
    if not (np.all(np.isfinite(precision)) and np.all(np.isfinite(mean))):
        raise NumericalFailureError("사후 정밀도 행렬이 유한하지 않습니다 (β 가 너무 작음)")
    return Posterior(sources=sources, mean=mean, precision=precision, covariance=covariance)


def posterior_impulse_responses(post: Posterior, n: int) -> dict[int, np.ndarray]:
    """사후 평균을 모듈별 예측기 임펄스 응답으로 분할"""
    return {i: post.mean[k * n:(k + 1) * n] for k, i in enumerate(post.sources)}


def _e_step(problem: MisoProblem, white: _Whitened, sigma: float) -> tuple[float, np.ndarray]:
    """M^(k) 와 Δ̂^(k) = Σ̂^{-1} + Ĉ y yᵀ Ĉᵀ"""
    s2 = sigma ** 2
    dim = white.gram.shape[0]
    P = np.eye(dim) + white.gram / s2
    chol = _cholesky(P, "사후 정밀도")
    mu = cho_solve((chol, True), white.cross) / s2
    second_moment = cho_solve((chol, True), np.eye(dim)) + np.outer(mu, mu)
    M = problem.energy - 2.0 * white.cross @ mu + np.sum(white.gram * second_moment)
    delta = white.factor @ second_moment @ white.factor.T
    return float(M), delta


def beta_objective(n: int, beta: float, delta_block: np.ndarray) -> float:
    """n·log tr(K̄^{-1}(β) Δ̂[i]) + log det K̄(β)"""
    return n * log_inverse_trace(n, beta, delta_block) + log_det(n, beta)


def update_module(n: int, delta_block: np.ndarray, beta_old: Optional[float] = None) -> tuple[float, float]:
    """(λ, β) 갱신 - 20점 그리드로 구간을 잡고 유계 스칼라 최소화, 이전 β 보다 나빠지지 않게 선택"""
    if not np.isfinite(log_inverse_trace(n, BETA_MAX, delta_block)):
        return (beta_old if beta_old is not None else DEFAULT_BETA), LAMBDA_FLOOR

    def objective(b: float) -> float:
        return beta_objective(n, b, delta_block)

    grid = np.linspace(BETA_MIN, BETA_MAX, BETA_GRID_POINTS)
    values = np.array([objective(b) for b in grid])
    k = int(np.argmin(values))
    low, high = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    result = minimize_scalar(objective, bounds=(low, high), method="bounded", options={"xatol": BETA_TOL})

    candidates = [(values[k], grid[k]), (float(result.fun), float(result.x))]
    if beta_old is not None and BETA_MIN <= beta_old <= BETA_MAX:
        candidates.append((objective(beta_old), beta_old))
    beta = min(candidates, key=lambda c: c[0])[1]
    lam = max(float(np.exp(log_inverse_trace(n, beta, delta_block))) / n, LAMBDA_FLOOR)
    return float(beta), lam


def em_step(problem: MisoProblem, sources: Sequence[int], eta: HyperParams) -> tuple[HyperParams, bool]:
    """닫힌 형태 σ, β, λ 갱신 한 번 - 모두 같은 Δ̂^(k) 를 사용"""
    sources = tuple(sorted(sources))
    n = problem.n
    if not sources:
        M, delta = problem.energy, np.zeros((0, 0))
    else:
        M, delta = _e_step(problem, _whiten(problem, sources, eta), eta.sigma)

    clamped = False
    if M <= 0:
        M = 1e-12 * problem.energy if problem.energy > 0 else 1e-12
        clamped = True
        logger.warning(f"노드 w{problem.j}: M^(k) ≤ 0 - {M:.3g} 로 고정")

    lam, beta = [], []
    eta = eta.restrict(sources)
    for k in range(len(sources)):
        block = delta[k * n:(k + 1) * n, k * n:(k + 1) * n]
        b, l = update_module(n, block, beta_old=eta.beta[k])
        beta.append(b)
        lam.append(l)

    sigma = float(np.sqrt(M / problem.N))
    return HyperParams(sigma=sigma, sources=sources, lam=tuple(lam), beta=tuple(beta)), clamped


def em_fit(
    problem: MisoProblem,
    g: Topology,
    init: HyperParams,
    opts: EmOptions = EmOptions(),
) -> tuple[HyperParams, EmTrace]:
    """EM 으로 η 추정 - 상대 J 변화 < tol 또는 최대 반복에서 종료"""
    sources = _sources(problem, g)
    eta = init.restrict(sources)
    J = score_sources(problem, sources, eta)
    trace = EmTrace(values=[J])

    for iteration in range(1, opts.max_iterations + 1):
        eta_next, clamped = em_step(problem, sources, eta)
        trace.clamped = trace.clamped or clamped
        J_next = score_sources(problem, sources, eta_next)
        if J_next < J - opts.slack * (1.0 + abs(J)):
            message = f"노드 w{problem.j}: EM {iteration}회차에서 J 감소 ({J:.10g} → {J_next:.10g})"
            if opts.strict:
                raise MonotonicityViolationError(message)
            logger.warning(message)
        trace.values.append(J_next)
        trace.iterations = iteration
        eta = eta_next
        if abs(J_next - J) < opts.tol * (1.0 + abs(J)):
            trace.converged = True
            break
        J = J_next

    logger.debug(
        f"노드 w{problem.j} EM 완료: {trace.iterations}회, 수렴={trace.converged}, J={trace.values[-1]:.6g}"
    )
    return eta, trace


def q2(n: int, lam: float, beta: float, delta_block: np.ndarray) -> float:
    """Q2 = -½ log det(λK̄) - ½ tr((λK̄)^{-1} Δ̂[i])"""
    trace = float(np.exp(log_inverse_trace(n, beta, delta_block)))
    return -0.5 * (n * np.log(lam) + log_det(n, beta)) - 0.5 * trace / lam


def q_function(problem: MisoProblem, g: Topology, eta: HyperParams, eta_k: HyperParams) -> float:
    """닫힌 형태 Q(η, η^(k)) = Q1 + Σ Q2 (상수항 제외)"""
    sources = _sources(problem, g)
    eta = eta.restrict(sources)
    n = problem.n
    if not sources:
        M, delta = problem.energy, np.zeros((0, 0))
    else:
        M, delta = _e_step(problem, _whiten(problem, sources, eta_k), eta_k.sigma)
    value = -problem.N * np.log(eta.sigma) - M / (2.0 * eta.sigma ** 2)
    for k, (lam, beta) in enumerate(zip(eta.lam, eta.beta)):
        block = delta[k * n:(k + 1) * n, k * n:(k + 1) * n]
        value += q2(n, lam, beta, block)
    return float(value)


def e_step_statistics(problem: MisoProblem, g: Topology, eta_k: HyperParams) -> tuple[float, np.ndarray]:
    """M^(k), Δ̂^(k) (검증용)"""
    sources = _sources(problem, g)
    if not sources:
        return problem.energy, np.zeros((0, 0))
    return _e_step(problem, _whiten(problem, sources, eta_k), eta_k.sigma)


def em_trace_frame(trace: EmTrace) -> pd.DataFrame:
    return pd.DataFrame({"iteration": np.arange(len(trace.values)), "J": trace.values})
