"""
BS (Bayesian Search) 탐색 모듈
MISO 문제마다 전진(간선 추가) - 후진(간선 삭제) 탐욕 탐색으로 예측기 그래프를 찾고,
노드별 결과를 합쳐 네트워크 토폴로지를 구성
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from loguru import logger

from src.bayes_em import (
    EmOptions,
    EmTrace,
    HyperParams,
    default_hypers,
    draw_initial_sigma,
    em_fit,
    score_sources,
)
from src.config import get_thread_count
from src.exceptions import ConfigurationError, NodeIdentificationError
from src.network_model import DataSet, Topology
from src.predictor import MisoProblem, build_miso

MODES = ("fixed-hypers", "iterative-em")
TIE_BREAKS = ("lowest-source",)
TAU_SUGGESTED_MAX = 10.0


@dataclass(frozen=True)
class SearchConfig:
    tau: float = 0.0
    mode: str = "fixed-hypers"
    tie_break: str = "lowest-source"
    em: EmOptions = EmOptions()

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigurationError(f"τ는 0 이상이어야 합니다 (τ={self.tau})")
        if self.tau > TAU_SUGGESTED_MAX:
            logger.warning(f"τ={self.tau} 가 권장 범위 [0, {TAU_SUGGESTED_MAX:g}] 를 벗어났습니다")
        if self.mode not in MODES:
            raise ConfigurationError(f"알 수 없는 탐색 모드: {self.mode} (가능: {MODES})")
        if self.tie_break not in TIE_BREAKS:
            raise ConfigurationError(f"알 수 없는 tie-break 규칙: {self.tie_break}")


@dataclass(frozen=True)
class SearchStep:
    phase: str
    edge: tuple
    j_before: float
    j_after: float
    accepted: bool

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "edge": list(self.edge),
            "J_before": self.j_before,
            "J_after": self.j_after,
            "accepted": self.accepted,
        }


@dataclass
class SearchTrace:
    steps: list = field(default_factory=list)
    predictor: Optional[Topology] = None
    self_loop_deleted: bool = False

    def accepted_steps(self) -> list[SearchStep]:
        return [s for s in self.steps if s.accepted]


@dataclass
class NodeResult:
    """노드 하나의 탐색 결과 (자기 루프를 포함한 예측기 그래프 유지)"""

    node: int
    tau: float
    predictor: Topology
    trace: SearchTrace
    hypers: HyperParams
    em_trace: Optional[EmTrace] = None


@dataclass
class NetworkIdentification:
    topology: Topology
    nodes: list


# 평가 함수: (출발 노드 튜플, 현재 채택된 그래프의 η) → (J, 후보 그래프의 η)
Evaluator = Callable[[tuple, Optional[HyperParams]], tuple]


def _greedy(problem: MisoProblem, evaluate: Evaluator, tau: float) -> tuple[Topology, SearchTrace, HyperParams]:
    """{(j, j)} 에서 시작하는 간선 추가 단계 후 간선 삭제 단계"""
    j, L = problem.j, problem.L
    current = (j,)
    J_cur, eta_cur = evaluate(current, None)
    trace = SearchTrace()

    # 간선 추가 단계 (최대 L - 1 회)
    for _ in range(L - 1):
        candidates = [i for i in range(1, L + 1) if i not in current]
        if not candidates:
            break
        best = None
        for i in candidates:
            J_new, eta_new = evaluate(tuple(sorted(current + (i,))), eta_cur)
            # 동점이면 번호가 작은 출발 노드 유지
            if best is None or J_new > best[0]:
                best = (J_new, i, eta_new)
        J_new, i, eta_new = best
        accepted = J_new - J_cur > tau
        trace.steps.append(SearchStep("add", (i, j), J_cur, J_new, accepted))
        logger.debug(f"노드 w{j} 추가 후보 w{i}: ΔJ={J_new - J_cur:.4g}, 채택={accepted}")
        if not accepted:
            break
        current, J_cur, eta_cur = tuple(sorted(current + (i,))), J_new, eta_new

    # 간선 삭제 단계 (최대 |G| 회)
    for _ in range(len(current)):
        if not current:
            break
        best = None
        for i in current:
            J_new, eta_new = evaluate(tuple(k for k in current if k != i), eta_cur)
            if best is None or J_new > best[0]:
                best = (J_new, i, eta_new)
        J_new, i, eta_new = best
        accepted = J_new - J_cur > tau
        trace.steps.append(SearchStep("delete", (i, j), J_cur, J_new, accepted))
        logger.debug(f"노드 w{j} 삭제 후보 w{i}: ΔJ={J_new - J_cur:.4g}, 채택={accepted}")
        if not accepted:
            break
        if i == j:
            trace.self_loop_deleted = True
            logger.info(f"노드 w{j}: 삭제 단계에서 자기 루프가 제거됨")
        current = tuple(k for k in current if k != i)
        J_cur, eta_cur = J_new, eta_new

    predictor = Topology.miso(j, current)
    trace.predictor = predictor
    return predictor, trace, eta_cur


def _fixed_evaluator(problem: MisoProblem, full_hypers: HyperParams, cache: Optional[dict]) -> Evaluator:
    cache = {} if cache is None else cache

    def evaluate(sources: tuple, incumbent: Optional[HyperParams]) -> tuple:
        key = (sources, full_hypers)
        if key not in cache:
            cache[key] = score_sources(problem, sources, full_hypers)
        return cache[key], full_hypers.restrict(sources)

    return evaluate


def _refit_evaluator(problem: MisoProblem, init: HyperParams, em_opts: EmOptions, cache: Optional[dict]) -> Evaluator:
    cache = {} if cache is None else cache

    def evaluate(sources: tuple, incumbent: Optional[HyperParams]) -> tuple:
        # 현재 그래프의 η 에서 warm start, 새 모듈은 초기값 사용
        warm = (incumbent or init).extend(sources, fallback=init)
        key = (sources, warm, em_opts)
        if key not in cache:
            eta, trace = em_fit(problem, Topology.miso(problem.j, sources), warm, em_opts)
            cache[key] = (trace.values[-1], eta)
        return cache[key]

    return evaluate


def bs_search(
    problem: MisoProblem,
    full_hypers: HyperParams,
    cfg: SearchConfig = SearchConfig(),
    cache: Optional[dict] = None,
) -> tuple[Topology, SearchTrace]:
    """전체 그래프에서 추정한 η 를 후보 그래프마다 제한해서 쓰는 BS 탐색"""
    predictor, trace, _ = _greedy(problem, _fixed_evaluator(problem, full_hypers, cache), cfg.tau)
    return predictor, trace


def bs_search_iterative_em(
    problem: MisoProblem,
    init: HyperParams,
    cfg: SearchConfig = SearchConfig(mode="iterative-em"),
    cache: Optional[dict] = None,
) -> tuple[Topology, SearchTrace]:
    """후보 그래프마다 현재 그래프의 η 에서 출발해 EM 으로 η 를 다시 추정하는 변형"""
    predictor, trace, _ = _greedy(problem, _refit_evaluator(problem, init, cfg.em, cache), cfg.tau)
    return predictor, trace


def exhaustive_search(
    problem: MisoProblem,
    hypers: HyperParams,
    refit: bool = False,
    em_opts: EmOptions = EmOptions(),
) -> tuple[Topology, float, dict]:
    """작은 L 에 대한 전수 탐색 (2^L 개 예측기 부분집합) - 탐욕 탐색 검증용"""
    scores = {}
    for size in range(problem.L + 1):
        for sources in itertools.combinations(range(1, problem.L + 1), size):
            if refit:
                _, trace = em_fit(problem, Topology.miso(problem.j, sources), hypers.restrict(sources), em_opts)
                scores[sources] = trace.values[-1]
            else:
                scores[sources] = score_sources(problem, sources, hypers)
    best = max(scores, key=lambda s: scores[s])
    return Topology.miso(problem.j, best), scores[best], scores


def is_locally_optimal(problem: MisoProblem, g: Topology, hypers: HyperParams, tau: float = 0.0) -> bool:
    """한 간선 추가/삭제로 J 가 τ 보다 더 좋아지지 않는지 확인"""
    current = g.sources(problem.j)
    J_cur = score_sources(problem, current, hypers)
    for i in range(1, problem.L + 1):
        moved = tuple(k for k in current if k != i) if i in current else tuple(sorted(current + (i,)))
        if score_sources(problem, moved, hypers) - J_cur > tau:
            return False
    return True


def _identify_node(
    problem: MisoProblem,
    init: HyperParams,
    cfg: SearchConfig,
    taus: Sequence[float],
) -> list[NodeResult]:
    """노드 하나에 대해 τ 값마다 탐색 (EM 적합과 점수 캐시는 공유)"""
    cache = {}
    results = []
    full_graph = Topology.miso(problem.j, range(1, problem.L + 1))

    if cfg.mode == "fixed-hypers":
        full_hypers, em_trace = em_fit(problem, full_graph, init, cfg.em)
        for tau in taus:
            predictor, trace = bs_search(problem, full_hypers, replace(cfg, tau=tau), cache=cache)
            results.append(NodeResult(problem.j, tau, predictor, trace, full_hypers, em_trace))
    else:
        for tau in taus:
            predictor, trace = bs_search_iterative_em(problem, init, replace(cfg, tau=tau), cache=cache)
            results.append(NodeResult(problem.j, tau, predictor, trace, init))
    return results


def identify_network_over_taus(
    data: DataSet,
    n: int,
    cfg: SearchConfig,
    taus: Sequence[float],
    seed: Optional[int] = None,
    init_sigma: Optional[float] = None,
) -> dict[float, NetworkIdentification]:
    """τ 그리드 전체에 대해 네트워크 토폴로지 식별 (노드별 병렬 실행)"""
    if init_sigma is None:
        # 모든 노드에 같은 σ^(0)
        init_sigma = draw_initial_sigma(np.random.default_rng(seed))
    init = default_hypers(range(1, data.L + 1), sigma=init_sigma)
    problems = [build_miso(data, j, n) for j in range(1, data.L + 1)]

    failures = {}
    per_node = {}
    with ThreadPoolExecutor(max_workers=max(1, min(get_thread_count(), data.L))) as executor:
        futures = [executor.submit(_identify_node, p, init, cfg, list(taus)) for p in problems]
        for problem, future in zip(problems, futures):
            try:
                per_node[problem.j] = future.result()
            except Exception as e:
                logger.error(f"노드 w{problem.j} 식별 실패: {e}")
                failures[problem.j] = str(e)
    if failures:
        raise NodeIdentificationError(failures)

    identifications = {}
    for k, tau in enumerate(taus):
        nodes = [per_node[j][k] for j in sorted(per_node)]
        edges = frozenset()
        for result in nodes:
            edges |= result.predictor.without_self_loops().edges
        identifications[tau] = NetworkIdentification(topology=Topology(edges=edges), nodes=nodes)
    return identifications


def identify_network(
    data: DataSet,
    n: int,
    cfg: SearchConfig = SearchConfig(),
    seed: Optional[int] = None,
    init_sigma: Optional[float] = None,
) -> tuple[Topology, list[NodeResult]]:
    """1단계 EM + 노드별 BS 탐색 후 자기 루프를 제거하고 간선을 합침"""
    result = identify_network_over_taus(data, n, cfg, [cfg.tau], seed=seed, init_sigma=init_sigma)[cfg.tau]
    return result.topology, result.nodes


def trace_records(trace: SearchTrace, node: int) -> list[dict]:
    """JSON lines 감사 로그용 레코드"""
    return [{"node": node, "step": k, **step.to_dict()} for k, step in enumerate(trace.steps, start=1)]
