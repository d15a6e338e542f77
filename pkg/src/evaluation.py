"""
평가 / 벤치마크 모듈
TPR, FPR, dis, V 지표와 몬테카를로 ROC 실험 실행
"""

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, field_validator, model_validator

from src.bayes_em import EmOptions, draw_initial_sigma
from src.config import PRESETS_FILE, get_thread_count
from src.exceptions import BenchmarkAbortedError, ConfigurationError, DivisionDomainError
from src.glasso import GlassoConfig, identify_network_glasso, identify_network_glasso_fixed
from src.network_model import Topology, generate_random, simulate, true_topology
from src.predictor import build_miso
from src.search import SearchConfig, identify_network_over_taus

RESULT_COLUMNS = ["condition", "method", "tuning", "TPR", "FPR", "dis", "trials", "failures"]
V_POINTS = 11
MAX_FAILURE_RATIO = 0.2
AVERAGING = "per-run network-level counts (P, N pooled over all MISO problems), then mean of per-run ratios"


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int
    FP: int
    P: int
    N: int

    @property
    def tpr(self) -> Optional[float]:
        return self.TP / self.P if self.P > 0 else None

    @property
    def fpr(self) -> Optional[float]:
        return self.FP / self.N if self.N > 0 else None


@dataclass(frozen=True)
class RocPoint:
    tuning: str
    tpr: float
    fpr: float


def confusion(estimate: Topology, truth: Topology, L: int) -> ConfusionCounts:
    """자기 루프를 제외한 L² - L 개 간선 후보에 대한 집합 교집합 개수"""
    estimated = estimate.without_self_loops().edges
    true_edges = truth.without_self_loops().edges
    P = len(true_edges)
    return ConfusionCounts(
        TP=len(estimated & true_edges),
        FP=len(estimated - true_edges),
        P=P,
        N=L * L - L - P,
    )


def dis(point: RocPoint) -> float:
    """(FPR, TPR) 에서 이상점 (0, 1) 까지의 거리"""
    return math.hypot(point.fpr, 1.0 - point.tpr)


def v_measure(dis_iter: Sequence[float], dis_bs: Sequence[float]) -> float:
    """iterative-EM BS 와 BS 의 dis 평균 상대 차이 (%) - 양수면 iterative-EM 이 더 나쁨"""
    if len(dis_iter) != V_POINTS or len(dis_bs) != V_POINTS:
        raise ConfigurationError(
            f"V 지표에는 τ ∈ {{0..10}} 의 {V_POINTS}개 쌍이 필요합니다 ({len(dis_iter)}, {len(dis_bs)})"
        )
    if any(b == 0 for b in dis_bs):
        raise DivisionDomainError("dis_BS 에 0 이 있어 V 지표를 계산할 수 없습니다")
    ratios = [(it - bs) / bs for it, bs in zip(dis_iter, dis_bs)]
    return float(sum(ratios) / V_POINTS * 100.0)


# ---------------------------------------------------------------------------
# 실험 스펙
# ---------------------------------------------------------------------------

class ConditionSpec(BaseModel):
    name: str
    # 교차 검증 검증 구간이 비지 않으려면 N ≥ 3
    N: int = Field(ge=3)
    n: int = Field(ge=1)
    L: int = Field(default=6, ge=1)
    edge_prob: float = Field(default=0.5, ge=0.0, le=1.0)


class MethodSpec(BaseModel):
    method: Literal["bs", "bs-iter-em", "glasso", "kglasso"]
    taus: list[float] = Field(default_factory=lambda: [float(t) for t in range(11)])
    delta_grid: list[float] = Field(default_factory=lambda: [float(d) for d in range(0, 2001, 10)])
    beta_grid: list[float] = Field(default_factory=lambda: [round(0.1 * k, 1) for k in range(1, 10)])
    roc_beta: float = Field(default=0.7, gt=0.0, lt=1.0)
    roc: bool = True
    # 비교표용 한 점: GLasso 는 교차 검증, BS 계열은 기본 τ = 0
    summary_point: bool = True

    @field_validator("taus", "delta_grid", "beta_grid", mode="before")
    @classmethod
    def _expand_range(cls, value):
        # {"start", "stop", "step"} 형태는 stop 을 포함한 등간격 그리드로 펼침
        if isinstance(value, dict):
            start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
            if step <= 0:
                raise ValueError(f"그리드 간격은 양수여야 합니다: {value}")
            count = int(round((stop - start) / step)) + 1
            return [round(start + k * step, 10) for k in range(count)]
        return value

    @field_validator("taus")
    @classmethod
    def _non_negative_taus(cls, value):
        if any(t < 0 for t in value):
            raise ValueError(f"τ는 0 이상이어야 합니다: {value}")
        return value

    @field_validator("delta_grid")
    @classmethod
    def _non_negative_deltas(cls, value):
        if not value:
            raise ValueError("δ 그리드가 비어 있습니다")
        if any(d < 0 for d in value):
            raise ValueError(f"δ는 0 이상이어야 합니다: {value}")
        return value

    @field_validator("beta_grid")
    @classmethod
    def _open_unit_betas(cls, value):
        if not value:
            raise ValueError("β 그리드가 비어 있습니다")
        if any(not 0.0 < b < 1.0 for b in value):
            raise ValueError(f"β는 (0, 1) 범위여야 합니다: {value}")
        return value

    @property
    def is_search(self) -> bool:
        return self.method in ("bs", "bs-iter-em")


class ExperimentSpec(BaseModel):
    name: str = "experiment"
    conditions: list[ConditionSpec]
    methods: list[MethodSpec] = Field(default_factory=list)
    trials: int = Field(default=50, ge=1)
    master_seed: int = Field(default=0, ge=0)
    order_range: tuple[int, int] = (2, 5)
    sigma: float = Field(default=1.0, gt=0.0)
    output_dir: str = "results"
    label: str = ""

    @field_validator("order_range")
    @classmethod
    def _ordered(cls, value):
        low, high = value
        if not 1 <= low <= high:
            raise ValueError(f"차수 범위가 올바르지 않습니다: {value}")
        return value

    @model_validator(mode="after")
    def _unique_names(self):
        names = [c.name for c in self.conditions]
        if len(set(names)) != len(names):
            raise ValueError(f"조건 이름이 중복됩니다: {names}")
        return self


def load_presets(path: Path = PRESETS_FILE) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)["presets"]


def preset(name: str, path: Path = PRESETS_FILE) -> ExperimentSpec:
    presets = load_presets(path)
    if name not in presets:
        raise ConfigurationError(f"알 수 없는 프리셋: {name} (가능: {sorted(presets)})")
    return ExperimentSpec.model_validate(presets[name])


def load_spec(path: Path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as f:
        return ExperimentSpec.model_validate(json.load(f))


# ---------------------------------------------------------------------------
# 몬테카를로 실행
# ---------------------------------------------------------------------------

def tuning_label(method: str, value=None, beta: Optional[float] = None) -> str:
    if value == "cv":
        return "cv"
    if method in ("bs", "bs-iter-em"):
        return f"tau={value:g}"
    if method == "kglasso":
        return f"delta={value:g},beta={beta:g}"
    return f"delta={value:g}"


def _trial_seeds(seed_seq: np.random.SeedSequence) -> tuple[int, int, int]:
    """시스템 생성 / 시뮬레이션 / σ 초기값 시드"""
    system_seed, data_seed, init_seed = seed_seq.generate_state(3)
    return int(system_seed), int(data_seed), int(init_seed)


def run_trial(
    condition: ConditionSpec,
    methods: Sequence[MethodSpec],
    seed_seq: np.random.SeedSequence,
    order_range: tuple[int, int] = (2, 5),
    sigma: float = 1.0,
) -> tuple[list[tuple], dict[str, float]]:
    """한 번의 몬테카를로 시행 - ((method, tuning, ConfusionCounts) 목록, 방법별 소요 초)"""
    system_seed, data_seed, init_seed = _trial_seeds(seed_seq)
    system = generate_random(
        condition.L, condition.edge_prob, order_range=order_range, seed=system_seed, sigma=sigma, N=condition.N
    )
    truth = true_topology(system)
    data = simulate(system, condition.N, seed=data_seed)
    init_sigma = draw_initial_sigma(np.random.default_rng(init_seed))

    records, seconds = [], {}
    problems = None
    for spec in methods:
        started = time.perf_counter()
        if spec.is_search:
            mode = "fixed-hypers" if spec.method == "bs" else "iterative-em"
            taus = list(spec.taus)
            if spec.summary_point and 0.0 not in taus:
                taus.append(0.0)
            results = identify_network_over_taus(
                data, condition.n, SearchConfig(mode=mode, em=EmOptions()), taus, init_sigma=init_sigma
            )
            for tau in spec.taus:
                records.append((spec.method, tuning_label(spec.method, tau), confusion(results[tau].topology, truth, condition.L)))
            if spec.summary_point:
                # 기본 τ = 0 결과를 비교표용으로 따로 기록
                records.append((spec.method, "default", confusion(results[0.0].topology, truth, condition.L)))
        else:
            if problems is None:
                problems = [build_miso(data, j, condition.n) for j in range(1, condition.L + 1)]
            beta = spec.roc_beta if spec.method == "kglasso" else None
            if spec.roc:
                for delta in spec.delta_grid:
                    cfg = GlassoConfig(delta=delta, beta=beta, normalize=True)
                    estimate, _ = identify_network_glasso_fixed(problems, cfg, spec.method)
                    records.append((spec.method, tuning_label(spec.method, delta, beta), confusion(estimate, truth, condition.L)))
            if spec.summary_point:
                estimate, _, _ = identify_network_glasso(
                    problems, spec.delta_grid, spec.beta_grid, method=spec.method, cfg=GlassoConfig(normalize=True)
                )
                records.append((spec.method, "cv", confusion(estimate, truth, condition.L)))
        seconds[spec.method] = seconds.get(spec.method, 0.0) + time.perf_counter() - started
    return records, seconds


def _aggregate(condition: str, rows: list[list[tuple]], failures: int) -> list[dict]:
    """시행 순서대로 모은 결과를 (method, tuning) 별로 평균"""
    grouped = {}
    for records in rows:
        for method, tuning, counts in records:
            grouped.setdefault((method, tuning), []).append(counts)

    table = []
    for (method, tuning), counts in grouped.items():
        tprs = [c.tpr for c in counts if c.tpr is not None]
        fprs = [c.fpr for c in counts if c.fpr is not None]
        excluded = len(counts) - len(tprs)
        if excluded:
            logger.warning(f"{condition}/{method}/{tuning}: 실제 간선이 없는 시행 {excluded}개를 TPR 평균에서 제외")
        tpr = float(np.mean(tprs)) if tprs else float("nan")
        fpr = float(np.mean(fprs)) if fprs else float("nan")
        table.append({
            "condition": condition,
            "method": method,
            "tuning": tuning,
            "TPR": tpr,
            "FPR": fpr,
            "dis": dis(RocPoint(tuning, tpr, fpr)),
            "trials": len(counts),
            "failures": failures,
        })
    return table


def mean_seconds(timings: Sequence[dict[str, float]]) -> dict[str, float]:
    """성공한 시행들의 방법별 평균 소요 시간 (초)"""
    methods = {}
    for seconds in timings:
        for method, value in seconds.items():
            methods.setdefault(method, []).append(value)
    return {method: float(np.mean(values)) for method, values in methods.items()}


def run_benchmark(spec: ExperimentSpec) -> tuple[pd.DataFrame, dict]:
    """조건 × 방법 × 튜닝값마다 평균 ROC 점과 dis 를 계산 (마스터 시드로 결정적)"""
    metadata = {
        "name": spec.name,
        "label": spec.label,
        "master_seed": spec.master_seed,
        "trials": spec.trials,
        "averaging": AVERAGING,
        "failures": {},
        "v_measure": {},
        "seconds_per_method": {},
    }
    if not spec.methods:
        logger.info("방법 목록이 비어 있어 빈 결과를 반환합니다")
        return pd.DataFrame(columns=RESULT_COLUMNS), metadata

    table = []
    condition_seeds = np.random.SeedSequence(spec.master_seed).spawn(len(spec.conditions))
    for condition, condition_seed in zip(spec.conditions, condition_seeds):
        logger.info("=" * 50)
        logger.info(
            f"조건 {condition.name}: N={condition.N}, n={condition.n}, L={condition.L}, "
            f"edge_prob={condition.edge_prob}, 시행 {spec.trials}회"
        )
        logger.info("=" * 50)
        trial_seeds = condition_seed.spawn(spec.trials)

        with ThreadPoolExecutor(max_workers=max(1, min(get_thread_count(), spec.trials))) as executor:
            futures = [
                executor.submit(run_trial, condition, spec.methods, seed, spec.order_range, spec.sigma)
                for seed in trial_seeds
            ]
            rows, timings, failures = [], [], 0
            for k, future in enumerate(futures, 1):
                try:
                    records, seconds = future.result()
                    rows.append(records)
                    timings.append(seconds)
                    logger.info(f"[{condition.name}] 시행 {k}/{spec.trials} 완료")
                except Exception as e:
                    failures += 1
                    logger.error(f"[{condition.name}] 시행 {k}/{spec.trials} 실패: {e}")

        metadata["failures"][condition.name] = failures
        metadata["seconds_per_method"][condition.name] = mean_seconds(timings)
        if failures > MAX_FAILURE_RATIO * spec.trials:
            raise BenchmarkAbortedError(
                f"조건 {condition.name}: 실패한 시행 {failures}/{spec.trials} 가 한도 {MAX_FAILURE_RATIO:.0%} 초과"
            )
        condition_rows = _aggregate(condition.name, rows, failures)
        table.extend(condition_rows)

        v_value = _condition_v_measure(condition_rows)
        if v_value is not None:
            metadata["v_measure"][condition.name] = v_value
            logger.info(f"조건 {condition.name}: V = {v_value:.2f}%")

    frame = pd.DataFrame(table, columns=RESULT_COLUMNS)
    return frame, metadata


def _condition_v_measure(rows: list[dict]) -> Optional[float]:
    """τ = 0..10 의 BS / iterative-EM BS 결과가 모두 있으면 V 지표"""
    labels = [tuning_label("bs", float(t)) for t in range(V_POINTS)]
    by_key = {(r["method"], r["tuning"]): r["dis"] for r in rows}
    try:
        dis_bs = [by_key[("bs", label)] for label in labels]
        dis_iter = [by_key[("bs-iter-em", label)] for label in labels]
    except KeyError:
        return None
    try:
        return v_measure(dis_iter, dis_bs)
    except DivisionDomainError as e:
        logger.warning(f"V 지표 계산 불가: {e}")
        return None


def write_results(frame: pd.DataFrame, metadata: dict, out_dir: Path, name: str) -> tuple[Path, Path]:
    """결과 CSV (전체 배정밀도) 와 메타데이터 JSON 저장"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    meta_path = out_dir / f"{name}.meta.json"
    frame.to_csv(csv_path, index=False, float_format="%.17g")
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump({**metadata, "written_at": datetime.now().isoformat()}, f, ensure_ascii=False, indent=2)
    return csv_path, meta_path
