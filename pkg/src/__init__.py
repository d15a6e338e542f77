"""
동적 네트워크 토폴로지 식별 (현행 모듈 구성)

1) 01_generate_network.py   - 랜덤 전달함수 네트워크 생성 + 시뮬레이션 (system JSON, data CSV)
2) 02_identify_topology.py  - BS / iterative-EM BS / GLasso / 커널 GLasso 로 토폴로지 추정
3) 03_run_benchmark.py      - 몬테카를로 ROC 벤치마크 (결과 CSV + 메타데이터)
4) 04_dump_trace.py         - EM / 탐색 trace 출력
5) cli.py                   - 위 명령을 묶은 click 그룹
"""

from src.config import (
    PROJECT_ROOT,
    DATA_DIR,
    PRESETS_FILE,
    RESULTS_DIR,
    LOGS_DIR,
    ensure_dirs,
    get_thread_count,
)

__all__ = [
    "PROJECT_ROOT",
    "DATA_DIR",
    "PRESETS_FILE",
    "RESULTS_DIR",
    "LOGS_DIR",
    "ensure_dirs",
    "get_thread_count",
]
