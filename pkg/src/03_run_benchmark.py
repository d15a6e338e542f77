"""
벤치마크 실행 모듈
실험 스펙(JSON) 또는 프리셋으로 몬테카를로 ROC 실험을 돌려 결과 CSV 와 메타데이터 JSON 저장
"""

from pathlib import Path
from typing import Optional

import click
from loguru import logger
from pydantic import ValidationError

from src.config import PROJECT_ROOT, setup_logging
from src.evaluation import load_presets, load_spec, preset, run_benchmark, write_results
from src.exceptions import NetTopError


def format_validation_error(error: ValidationError) -> str:
    """스펙 검증 오류를 한 번에 모두 나열"""
    lines = [f"실험 스펙 검증 실패 ({error.error_count()}건):"]
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        lines.append(f"  - {location}: {item['msg']}")
    return "\n".join(lines)


@click.command("benchmark")
@click.option("--spec", "spec_file", default=None, type=click.Path(exists=True), help="실험 스펙 JSON 파일")
@click.option("--preset", "preset_name", default=None, help="data/presets.json 의 프리셋 이름")
@click.option("--trials", default=None, type=int, help="시행 횟수 덮어쓰기")
@click.option("--seed", default=None, type=int, help="마스터 시드 덮어쓰기")
@click.option("--out", "out", default=None, help="출력 디렉토리 (기본: 스펙의 output_dir)")
@click.option("--list-presets", is_flag=True, help="프리셋 목록 출력")
def main(
    spec_file: Optional[str],
    preset_name: Optional[str],
    trials: Optional[int],
    seed: Optional[int],
    out: Optional[str],
    list_presets: bool,
):
    """몬테카를로 벤치마크 실행"""
    setup_logging()

    if list_presets:
        for name, body in load_presets().items():
            click.echo(f"  - {name}: {body.get('label', '')}")
        return

    if (spec_file is None) == (preset_name is None):
        raise click.UsageError("--spec 과 --preset 중 하나만 지정하세요")

    try:
        spec = load_spec(Path(spec_file)) if spec_file else preset(preset_name)
        overrides = {}
        if trials is not None:
            overrides["trials"] = trials
        if seed is not None:
            overrides["master_seed"] = seed
        if overrides:
            spec = spec.model_validate({**spec.model_dump(), **overrides})

        out_dir = Path(out) if out else Path(spec.output_dir)
        if out is None and not out_dir.is_absolute():
            out_dir = PROJECT_ROOT / out_dir

        logger.info("=" * 50)
        logger.info(f"벤치마크 시작: {spec.name} (시행 {spec.trials}회, 시드 {spec.master_seed})")
        logger.info("=" * 50)
        frame, metadata = run_benchmark(spec)
        csv_path, _ = write_results(frame, metadata, out_dir, spec.name)
    except ValidationError as e:
        message = format_validation_error(e)
        logger.error(message)
        raise click.ClickException(message)
    except (NetTopError, OSError, ValueError) as e:
        logger.error(f"벤치마크 실패: {e}")
        raise click.ClickException(str(e))

    logger.info(f"결과 {len(frame)}행 저장: {csv_path}")
    for condition, value in metadata["v_measure"].items():
        logger.info(f"V[{condition}] = {value:.2f}%")


if __name__ == "__main__":
    main()
