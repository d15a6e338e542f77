"""
네트워크 토폴로지 식별 도구의 예외 정의
"""


class NetTopError(Exception):
    """모든 도메인 예외의 기본 클래스"""


class KernelDomainError(NetTopError, ValueError):
    """커널 하이퍼파라미터(β, λ)가 정의역을 벗어남"""


class SingularKernelError(KernelDomainError):
    """β = 0 이면 커널이 특이 행렬이 되어 분해할 수 없음"""


class SimulationDivergedError(NetTopError, RuntimeError):
    """시뮬레이션 중 노드 신호가 발산함"""

    def __init__(self, node: int, step: int):
        self.node = node
        self.step = step
        super().__init__(f"시뮬레이션 발산: 노드 w{node} (t={step})")


class GenerationFailedError(NetTopError, RuntimeError):
    """랜덤 시스템 생성의 재시도 한도 초과"""


class NumericalFailureError(NetTopError, ArithmeticError):
    """공분산/정밀도 행렬이 양의 정부호가 아님 (지터 적용 후에도)"""


class MonotonicityViolationError(NetTopError, ArithmeticError):
    """EM 반복에서 로그 주변우도가 허용 오차 이상 감소함"""


class ConfigurationError(NetTopError, ValueError):
    """설정값/그리드/데이터 분할 오류"""


class DivisionDomainError(NetTopError, ZeroDivisionError):
    """V 지표 계산 시 dis_BS = 0"""


class NodeIdentificationError(NetTopError):
    """노드별 식별 실패를 모아서 보고"""

    def __init__(self, failures: dict[int, str]):
        self.failures = dict(sorted(failures.items()))
        details = ", ".join(f"w{node}: {msg}" for node, msg in self.failures.items())
        super().__init__(f"{len(self.failures)}개 노드 식별 실패 - {details}")


class BenchmarkAbortedError(NetTopError):
    """실패한 시행 비율이 한도를 넘어 벤치마크 중단"""
