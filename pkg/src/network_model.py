"""
전달함수 네트워크 모델 모듈
이산시간 유리 전달함수로 이루어진 동적 네트워크를 표현하고,
노드 신호를 시뮬레이션하며 벤치마크용 랜덤 시스템을 생성
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from scipy.signal import freqz, lfilter

from src.exceptions import (
    ConfigurationError,
    GenerationFailedError,
    SimulationDivergedError,
)

# 임펄스 응답 l2 노름 계산 시 절단 길이 (극점 ≤ 0.95 이면 꼬리는 1e-20 미만)
IMPULSE_TAPS = 1000
# 폐루프 안정성 판정용 주파수 그리드 점 개수
FREQUENCY_GRID = 512
DET_FLOOR = 1e-6
# 영입력 감쇠 시뮬레이션 최소 길이 (기본은 10·N 스텝)
DECAY_STEPS = 2000
DECAY_RATIO = 1e-3
# 이 값을 넘으면 발산으로 간주
DIVERGENCE_LIMIT = 1e12

# 랜덤 극점/영점 생성 규칙
MAX_ROOT_MODULUS = 0.95
REAL_ROOT_PROB = 0.6


@dataclass(frozen=True)
class RationalTransfer:
    """q^{-1}의 오름차순 계수로 표현한 유리 전달함수 num(q)/den(q)"""

    num: tuple[float, ...]
    den: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "num", tuple(float(c) for c in self.num))
        object.__setattr__(self, "den", tuple(float(c) for c in self.den))
        if not self.num or not self.den:
            raise ConfigurationError("전달함수 계수 리스트가 비어 있습니다")

    @classmethod
    def unit(cls) -> "RationalTransfer":
        return cls(num=(1.0,), den=(1.0,))

    @classmethod
    def delay(cls, gain: float = 1.0, lag: int = 1) -> "RationalTransfer":
        """gain·q^{-lag}"""
        return cls(num=(0.0,) * lag + (gain,), den=(1.0,))

    @property
    def order(self) -> int:
        return max(len(self.num), len(self.den)) - 1

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        return np.roots(self.num)

    def is_monic(self) -> bool:
        return abs(self.den[0] - 1.0) < 1e-12

    def is_strictly_proper(self) -> bool:
        return self.num[0] == 0.0

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def is_minimum_phase(self) -> bool:
        return bool(np.all(np.abs(self.zeros()) < 1.0))

    def is_identity(self) -> bool:
        num = np.trim_zeros(np.asarray(self.num), "b")
        den = np.trim_zeros(np.asarray(self.den), "b")
        return num.shape == den.shape and bool(np.allclose(num, den))

    def impulse_response(self, taps: int = IMPULSE_TAPS) -> np.ndarray:
        impulse = np.zeros(taps)
        impulse[0] = 1.0
        return lfilter(self.num, self.den, impulse)

    def l2_norm(self, taps: int = IMPULSE_TAPS) -> float:
        return float(np.linalg.norm(self.impulse_response(taps)))

    def scaled(self, factor: float) -> "RationalTransfer":
        return RationalTransfer(num=tuple(c * factor for c in self.num), den=self.den)

    def to_dict(self) -> dict:
        return {"num": list(self.num), "den": list(self.den)}

    @classmethod
    def from_dict(cls, data: dict) -> "RationalTransfer":
        return cls(num=data["num"], den=data["den"])


@dataclass(frozen=True)
class Topology:
    """방향 간선 집합. 간선 (i, j)는 w_i → w_j (노드 번호는 1부터)

    self_loops=True 이면 예측기 그래프(자기 루프 허용)로 취급한다.
    """

    edges: frozenset = frozenset()
    self_loops: bool = False

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        if not self.self_loops and any(i == j for i, j in edges):
            raise ConfigurationError("네트워크 토폴로지에는 자기 루프가 허용되지 않습니다")
        if any(i < 1 or j < 1 for i, j in edges):
            raise ConfigurationError("노드 번호는 1부터 시작해야 합니다")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, edges: Iterable[Sequence[int]], self_loops: bool = False) -> "Topology":
        return cls(edges=frozenset(tuple(e) for e in edges), self_loops=self_loops)

    @classmethod
    def miso(cls, j: int, sources: Iterable[int]) -> "Topology":
        """노드 j로 들어오는 예측기 그래프"""
        return cls(edges=frozenset((i, j) for i in sources), self_loops=True)

    def sources(self, j: int) -> tuple[int, ...]:
        """노드 j로 들어오는 간선의 출발 노드 (오름차순)"""
        return tuple(sorted(i for i, target in self.edges if target == j))

    def with_edge(self, edge: tuple[int, int]) -> "Topology":
        return Topology(edges=self.edges | {edge}, self_loops=self.self_loops)

    def without_edge(self, edge: tuple[int, int]) -> "Topology":
        return Topology(edges=self.edges - {edge}, self_loops=self.self_loops)

    def without_self_loops(self) -> "Topology":
        return Topology(edges=frozenset(e for e in self.edges if e[0] != e[1]))

    def union(self, other: "Topology") -> "Topology":
        return Topology(edges=self.edges | other.edges, self_loops=self.self_loops or other.self_loops)

    def to_list(self) -> list[list[int]]:
        return [list(e) for e in sorted(self.edges)]

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(sorted(self.edges))

    def __len__(self) -> int:
        return len(self.edges)

    def __contains__(self, edge) -> bool:
        return tuple(edge) in self.edges


@dataclass(frozen=True)
class NetworkSystem:
    """w(t) = G(q) w(t) + H(q) e(t)

    G[j][i]는 G_{j+1,i+1} (0부터 인덱싱), 대각은 None.
    """

    L: int
    G: tuple
    H: tuple
    sigma: tuple
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "G", tuple(tuple(row) for row in self.G))
        object.__setattr__(self, "H", tuple(self.H))
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))

    @classmethod
    def from_modules(
        cls,
        L: int,
        modules: dict,
        H: Optional[Sequence[RationalTransfer]] = None,
        sigma: Optional[Sequence[float]] = None,
        seed: Optional[int] = None,
    ) -> "NetworkSystem":
        """modules: {(i, j): G_ji} (1부터 시작하는 노드 번호)"""
        G = [[None] * L for _ in range(L)]
        for (i, j), tf in modules.items():
            G[j - 1][i - 1] = tf
        H = list(H) if H is not None else [RationalTransfer.unit()] * L
        sigma = list(sigma) if sigma is not None else [1.0] * L
        return cls(L=L, G=G, H=H, sigma=sigma, seed=seed)

    def module(self, i: int, j: int) -> Optional[RationalTransfer]:
        """G_ji (w_i → w_j)"""
        return self.G[j - 1][i - 1]

    def modules(self) -> Iterator[tuple[int, int, RationalTransfer]]:
        for j in range(self.L):
            for i in range(self.L):
                tf = self.G[j][i]
                if tf is not None:
                    yield i + 1, j + 1, tf

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "seed": self.seed,
            "edges": true_topology(self).to_list(),
            "modules": [
                {"source": i, "target": j, **tf.to_dict()} for i, j, tf in self.modules()
            ],
            "noise_models": [h.to_dict() for h in self.H],
            "sigma": list(self.sigma),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSystem":
        modules = {
            (m["source"], m["target"]): RationalTransfer.from_dict(m) for m in data.get("modules", [])
        }
        return cls.from_modules(
            L=int(data["L"]),
            modules=modules,
            H=[RationalTransfer.from_dict(h) for h in data["noise_models"]],
            sigma=data["sigma"],
            seed=data.get("seed"),
        )


@dataclass(frozen=True, eq=False)
class DataSet:
    """N×L 노드 측정값 행렬과 생성 시드"""

    w: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.ndim != 2 or w.shape[0] < 1:
            raise ConfigurationError(f"데이터는 N×L 행렬이어야 합니다 (shape={w.shape})")
        if not np.all(np.isfinite(w)):
            raise ConfigurationError("데이터에 유한하지 않은 값이 있습니다")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def N(self) -> int:
        return self.w.shape[0]

    @property
    def L(self) -> int:
        return self.w.shape[1]

    def column(self, j: int) -> np.ndarray:
        """노드 j (1부터) 신호"""
        return self.w[:, j - 1]

    def head(self, rows: int) -> "DataSet":
        return DataSet(w=self.w[:rows], seed=self.seed)


@dataclass
class ValidityReport:
    """check_validity 결과 - bool 로 평가 가능"""

    valid: bool
    diagnostics: list[str] = field(default_factory=list)
    min_abs_det: Optional[float] = None
    max_spectral_radius: Optional[float] = None
    winding_number: Optional[int] = None

    def __bool__(self) -> bool:
        return self.valid


def true_topology(system: NetworkSystem) -> Topology:
    """G_ji ≠ 0 인 간선 집합 (자기 루프 없음)"""
    return Topology(edges=frozenset((i, j) for i, j, _ in system.modules()))


def predictor_topology(system: NetworkSystem) -> Topology:
    """예측기 그래프: 실제 토폴로지 + 1 - H_j^{-1} ≠ 0 인 노드의 자기 루프"""
    loops = {(j, j) for j in range(1, system.L + 1) if not system.H[j - 1].is_identity()}
    return Topology(edges=true_topology(system).edges | loops, self_loops=True)


def propagate(
    system: NetworkSystem,
    e: np.ndarray,
    initial: Optional[np.ndarray] = None,
) -> np.ndarray:
    """주어진 잡음 e (N×L, 표준편차 반영 후)로 w = (I - G)^{-1} H e 를 시간 영역에서 계산

    initial 은 t ≤ 0 구간의 w 값 (기본 0). G 필터 자체의 내부 상태는 항상 0에서 시작.
    """
    e = np.asarray(e, dtype=float)
    N, L = e.shape
    v = np.column_stack([lfilter(h.num, h.den, e[:, k]) for k, h in enumerate(system.H)])

    edges = list(system.modules())
    if not edges:
        _check_divergence(v, offset=0)
        return v

    m = max(tf.order for _, _, tf in edges)
    src = np.array([i - 1 for i, _, _ in edges])
    dst = np.array([j - 1 for _, j, _ in edges])
    b = np.zeros((len(edges), m))
    a = np.zeros((len(edges), m))
    for k, (_, _, tf) in enumerate(edges):
        b[k, : len(tf.num) - 1] = tf.num[1:]
        a[k, : len(tf.den) - 1] = tf.den[1:]

    w_pad = np.zeros((N + m, L))
    if initial is not None:
        w_pad[:m] = np.asarray(initial, dtype=float)
    y_pad = np.zeros((N + m, len(edges)))

    for t in range(N):
        idx = t + m
        # lag 1..m 순서로 뒤집은 과거값
        u_past = w_pad[idx - m:idx][::-1][:, src]
        y_past = y_pad[idx - m:idx][::-1]
        y_t = np.einsum("em,me->e", b, u_past) - np.einsum("em,me->e", a, y_past)
        y_pad[idx] = y_t
        w_t = v[t] + np.bincount(dst, weights=y_t, minlength=L)
        _check_divergence(w_t[None, :], offset=t)
        w_pad[idx] = w_t

    return w_pad[m:].copy()


def _check_divergence(w: np.ndarray, offset: int):
    bad = ~np.isfinite(w) | (np.abs(w) > DIVERGENCE_LIMIT)
    if np.any(bad):
        row, col = np.argwhere(bad)[0]
        raise SimulationDivergedError(node=int(col) + 1, step=offset + int(row) + 1)


def simulate(system: NetworkSystem, N: int, seed: Optional[int] = None) -> DataSet:
    """네트워크 시스템에서 N개 샘플의 노드 신호 생성 (초기 조건 0)"""
    if N < 1:
        raise ConfigurationError(f"샘플 수 N은 1 이상이어야 합니다 (N={N})")
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((N, system.L)) * np.asarray(system.sigma)
    w = propagate(system, e)
    return DataSet(w=w, seed=seed)


def closed_loop_impulse(system: NetworkSystem, horizon: int = IMPULSE_TAPS) -> np.ndarray:
    """(I - G)^{-1} H 의 임펄스 응답, shape (horizon, L, L) - [t, j, k] 는 e_k → w_j"""
    response = np.zeros((horizon, system.L, system.L))
    for k in range(system.L):
        e = np.zeros((horizon, system.L))
        e[0, k] = 1.0
        response[:, :, k] = propagate(system, e)
    return response


def stationary_variance(system: NetworkSystem, horizon: int = IMPULSE_TAPS) -> np.ndarray:
    """각 노드 신호의 정상 분산 σ_k² Σ_t h_jk(t)²"""
    energy = np.sum(closed_loop_impulse(system, horizon) ** 2, axis=0)
    return energy @ (np.asarray(system.sigma) ** 2)


def _frequency_response(system: NetworkSystem, omega: np.ndarray) -> np.ndarray:
    """G(e^{iω}) 스택, shape (len(omega), L, L)"""
    response = np.zeros((len(omega), system.L, system.L), dtype=complex)
    for i, j, tf in system.modules():
        _, h = freqz(tf.num, tf.den, worN=omega)
        response[:, j - 1, i - 1] = h
    return response


def check_validity(system: NetworkSystem, decay_steps: int = DECAY_STEPS) -> ValidityReport:
    """모듈 조건과 (I - G)^{-1} 의 안정성을 검사

    안정성: 주파수 그리드에서 |det(I - G)| > 1e-6, det 의 회전수(winding number) 0,
    그리고 단위 초기 출력에서 시작한 영입력 시뮬레이션이 감쇠해야 함.
    """
    diagnostics = []
    L = system.L

    if len(system.G) != L or any(len(row) != L for row in system.G):
        diagnostics.append(f"G 행렬 크기가 {L}×{L}가 아닙니다")
        return ValidityReport(valid=False, diagnostics=diagnostics)
    if len(system.H) != L:
        diagnostics.append(f"H 개수({len(system.H)})가 노드 수({L})와 다릅니다")
    if len(system.sigma) != L or any(s <= 0 for s in system.sigma):
        diagnostics.append("잡음 표준편차는 노드마다 하나씩, 양수여야 합니다")

    for j in range(L):
        if system.G[j][j] is not None:
            diagnostics.append(f"G_{j + 1}{j + 1}: 대각 모듈은 허용되지 않습니다")

    for i, j, tf in system.modules():
        name = f"G_{j}{i}"
        if not tf.is_monic():
            diagnostics.append(f"{name}: 분모가 monic 이 아닙니다")
        if not tf.is_strictly_proper():
            diagnostics.append(f"{name}: strictly proper 가 아닙니다 (num[0] ≠ 0)")
        if not tf.is_stable():
            diagnostics.append(f"{name}: 불안정한 극점")

    for j, h in enumerate(system.H, start=1):
        if not h.is_monic() or abs(h.num[0] - 1.0) > 1e-12:
            diagnostics.append(f"H_{j}: monic 이 아닙니다")
        if not h.is_stable():
            diagnostics.append(f"H_{j}: 불안정한 극점")
        if not h.is_minimum_phase():
            diagnostics.append(f"H_{j}: 최소위상이 아닙니다")

    if diagnostics:
        return ValidityReport(valid=False, diagnostics=diagnostics)

    omega = np.linspace(0.0, 2.0 * np.pi, FREQUENCY_GRID, endpoint=False)
    g_freq = _frequency_response(system, omega)
    det = np.linalg.det(np.eye(L)[None, :, :] - g_freq)
    min_abs_det = float(np.min(np.abs(det)))
    max_radius = float(np.max(np.abs(np.linalg.eigvals(g_freq))))
    phase = np.unwrap(np.angle(np.append(det, det[0])))
    winding = int(np.round((phase[-1] - phase[0]) / (2.0 * np.pi)))

    report = ValidityReport(
        valid=True,
        min_abs_det=min_abs_det,
        max_spectral_radius=max_radius,
        winding_number=winding,
    )
    if min_abs_det <= DET_FLOOR:
        report.diagnostics.append(f"|det(I - G)| 최소값 {min_abs_det:.3g} ≤ {DET_FLOOR}")
    if winding != 0:
        report.diagnostics.append(f"det(I - G) 회전수 {winding} ≠ 0 (폐루프 불안정)")
    if report.diagnostics:
        report.valid = False
        return report

    if not _zero_input_decays(system, decay_steps):
        report.valid = False
        report.diagnostics.append(f"영입력 응답이 {decay_steps} 스텝 안에 감쇠하지 않습니다")
    return report


def decay_horizon(N: Optional[int] = None) -> int:
    """10·N 스텝, 짧은 기록에서도 DECAY_STEPS 이상"""
    if N is None:
        return DECAY_STEPS
    return max(10 * int(N), DECAY_STEPS)


def _zero_input_decays(system: NetworkSystem, steps: int) -> bool:
    max_order = max((tf.order for _, _, tf in system.modules()), default=0)
    if max_order == 0:
        return True
    initial = np.ones((max_order, system.L))
    try:
        w = propagate(system, np.zeros((steps, system.L)), initial=initial)
    except SimulationDivergedError:
        return False
    peak = max(1.0, float(np.max(np.abs(w))))
    tail = float(np.max(np.abs(w[-max(1, steps // 10):])))
    return tail < DECAY_RATIO * peak


def _random_roots(rng: np.random.Generator, count: int) -> np.ndarray:
    """실근 또는 켤레 복소근 쌍, 크기는 [0, 0.95] 균등"""
    roots = []
    while len(roots) < count:
        modulus = rng.uniform(0.0, MAX_ROOT_MODULUS)
        if count - len(roots) == 1 or rng.random() < REAL_ROOT_PROB:
            roots.append(modulus if rng.random() < 0.5 else -modulus)
        else:
            angle = rng.uniform(0.0, np.pi)
            root = modulus * np.exp(1j * angle)
            roots.extend([root, np.conj(root)])
    return np.array(roots)


def _poly(roots: np.ndarray) -> np.ndarray:
    return np.real(np.poly(roots)) if len(roots) else np.array([1.0])


def random_module(rng: np.random.Generator, order: int) -> RationalTransfer:
    """안정하고 strictly proper 인 G_ji, 임펄스 응답 l2 노름 1로 정규화"""
    den = _poly(_random_roots(rng, order))
    num = np.concatenate([[0.0], _poly(_random_roots(rng, order - 1))])
    if rng.random() < 0.5:
        num = -num
    tf = RationalTransfer(num=num, den=den)
    return tf.scaled(1.0 / tf.l2_norm())


def random_noise_model(rng: np.random.Generator, order: int) -> RationalTransfer:
    """monic, 안정, 최소위상 H_j"""
    return RationalTransfer(num=_poly(_random_roots(rng, order)), den=_poly(_random_roots(rng, order)))


def draw_edges(rng: np.random.Generator, L: int, edge_prob: float) -> list[tuple[int, int]]:
    """비대각 간선 각각을 edge_prob 확률로 독립 추출"""
    return [
        (i, j)
        for j in range(1, L + 1)
        for i in range(1, L + 1)
        if i != j and rng.random() < edge_prob
    ]


def generate_random(
    L: int,
    edge_prob: float,
    order_range: tuple[int, int] = (2, 5),
    seed: Optional[int] = None,
    sigma: float = 1.0,
    max_attempts: int = 1000,
    N: Optional[int] = None,
) -> NetworkSystem:
    """벤치마크용 랜덤 네트워크 시스템 생성 (유효성 검사를 통과할 때까지 재추출)

    N 을 주면 영입력 감쇠 검사를 decay_horizon(N) 스텝으로 수행
    """
    if not 0.0 <= edge_prob <= 1.0:
        raise ConfigurationError(f"edge_prob는 [0, 1] 범위여야 합니다 (edge_prob={edge_prob})")
    low, high = order_range
    if not 1 <= low <= high:
        raise ConfigurationError(f"차수 범위가 올바르지 않습니다: {order_range}")

    rng = np.random.default_rng(seed)
    for attempt in range(1, max_attempts + 1):
        modules = {
            edge: random_module(rng, int(rng.integers(low, high + 1)))
            for edge in draw_edges(rng, L, edge_prob)
        }
        H = [random_noise_model(rng, int(rng.integers(low, high + 1))) for _ in range(L)]
        system = NetworkSystem.from_modules(L, modules, H=H, sigma=[sigma] * L, seed=seed)
        report = check_validity(system, decay_horizon(N))
        if report:
            if attempt > 1:
                logger.warning(f"랜덤 시스템 생성: 불안정한 후보 {attempt - 1}개 기각 후 통과")
            return system
        logger.debug(f"랜덤 시스템 기각 ({attempt}/{max_attempts}): {report.diagnostics}")

    raise GenerationFailedError(
        f"{max_attempts}번 시도 안에 안정한 시스템을 생성하지 못했습니다 (L={L}, edge_prob={edge_prob})"
    )


def save_system(system: NetworkSystem, path: Path) -> Path:
    """시스템을 JSON 파일로 저장"""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(system.to_dict(), f, ensure_ascii=False, indent=2)
    return path


def load_system(path: Path) -> NetworkSystem:
    with open(path, "r", encoding="utf-8") as f:
        return NetworkSystem.from_dict(json.load(f))


def dataset_frame(data: DataSet) -> pd.DataFrame:
    return pd.DataFrame(data.w, columns=[f"w{k}" for k in range(1, data.L + 1)])


def save_dataset(data: DataSet, path: Path) -> Path:
    """노드별 한 열 (헤더 w1..wL), 전체 배정밀도"""
    path = Path(path)
    dataset_frame(data).to_csv(path, index=False, float_format="%.17g")
    return path


def load_dataset(path: Path, seed: Optional[int] = None) -> DataSet:
    frame = pd.read_csv(path)
    expected = [f"w{k}" for k in range(1, frame.shape[1] + 1)]
    if list(frame.columns) != expected:
        raise ConfigurationError(f"CSV 헤더가 {expected} 형식이 아닙니다: {list(frame.columns)}")
    return DataSet(w=frame.to_numpy(dtype=float), seed=seed)
