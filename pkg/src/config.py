"""
환경 설정 로드 모듈
.env 파일에서 환경 변수를 읽어 전역 설정으로 제공
"""

import json
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from src.exceptions import ConfigurationError

# 프로젝트 루트 경로
PROJECT_ROOT = Path(__file__).parent.parent
DATA_DIR = PROJECT_ROOT / "data"
PRESETS_FILE = DATA_DIR / "presets.json"
RESULTS_DIR = PROJECT_ROOT / "results"
LOGS_DIR = PROJECT_ROOT / "logs"

# .env 파일 로드
load_dotenv(PROJECT_ROOT / ".env")


def get_env(key: str, default: str = None, required: bool = False) -> str:
    """환경 변수 값을 가져옴"""
    value = os.getenv(key, default)
    if required and not value:
        raise ValueError(f"필수 환경 변수 '{key}'가 설정되지 않았습니다. .env 파일을 확인하세요.")
    return value


# 로그 레벨 (파일 싱크)
LOG_LEVEL = get_env("NETTOP_LOG_LEVEL", default="INFO")


def get_thread_count() -> int:
    """NETTOP_THREADS 환경 변수로 제한된 워커 개수 (호출 시점에 다시 읽음)"""
    raw = get_env("NETTOP_THREADS", default="")
    if not raw:
        return os.cpu_count() or 1
    try:
        count = int(raw)
    except ValueError:
        count = 0
    if count < 1:
        from loguru import logger
        logger.warning(f"NETTOP_THREADS 값이 올바르지 않습니다: {raw!r} - 1개 스레드로 실행")
        return 1
    return count


def ensure_dirs():
    """필요한 디렉토리들이 존재하는지 확인하고 생성"""
    for dir_path in [DATA_DIR, RESULTS_DIR, LOGS_DIR]:
        dir_path.mkdir(parents=True, exist_ok=True)


def apply_config_file(params: dict, path: Optional[Path]) -> dict:
    """JSON 설정 파일에 있는 키가 명령행 값을 덮어씀 (하이픈은 밑줄로 취급)"""
    if path is None:
        return dict(params)
    with open(path, "r", encoding="utf-8") as f:
        overrides = {key.replace("-", "_"): value for key, value in json.load(f).items()}
    unknown = sorted(key for key in overrides if key not in params)
    if unknown:
        raise ConfigurationError(f"설정 파일에 알 수 없는 키가 있습니다: {unknown}")
    merged = dict(params)
    merged.update(overrides)
    return merged


_file_sink_id = None


def setup_logging():
    """로깅 설정 초기화 (파일 싱크는 한 번만 추가)"""
    global _file_sink_id
    from loguru import logger
    ensure_dirs()
    if _file_sink_id is not None:
        return logger
    _file_sink_id = logger.add(
        LOGS_DIR / "nettop_{time:YYYY-MM-DD}.log",
        rotation="1 day",
        retention="30 days",
        encoding="utf-8",
        level=LOG_LEVEL
    )
    return logger


if __name__ == "__main__":
    # 설정 테스트
    ensure_dirs()
    print(f"프로젝트 루트: {PROJECT_ROOT}")
    print(f"워커 스레드: {get_thread_count()}")
    print(f"로그 레벨: {LOG_LEVEL}")
