"""
랜덤 네트워크 생성 모듈
벤치마크 규칙으로 안정한 랜덤 전달함수 네트워크를 만들고 노드 신호를 시뮬레이션해서
시스템 JSON 과 데이터 CSV 로 저장
"""

import json
from pathlib import Path
from typing import Optional

import click
import numpy as np
from loguru import logger
from pydantic import ValidationError

from src.config import RESULTS_DIR, apply_config_file, setup_logging
from src.exceptions import NetTopError
from src.network_model import (
    DataSet,
    NetworkSystem,
    generate_random,
    save_dataset,
    save_system,
    simulate,
    true_topology,
)


def derive_seeds(seed: int) -> tuple[int, int]:
    """마스터 시드에서 (시스템 생성 시드, 시뮬레이션 시드)"""
    system_seed, data_seed = np.random.SeedSequence(seed).generate_state(2)
    return int(system_seed), int(data_seed)


def generate_network(
    L: int,
    N: int,
    edge_prob: float,
    seed: int,
    order_range: tuple[int, int] = (2, 5),
    sigma: float = 1.0,
    max_attempts: int = 1000,
) -> tuple[NetworkSystem, DataSet]:
    system_seed, data_seed = derive_seeds(seed)
    system = generate_random(
        L, edge_prob, order_range=order_range, seed=system_seed, sigma=sigma, max_attempts=max_attempts, N=N
    )
    data = simulate(system, N, seed=data_seed)
    return system, data


def write_outputs(
    system: NetworkSystem,
    data: DataSet,
    out_dir: Path,
    seed: int,
) -> dict:
    """시스템 JSON, 데이터 CSV, 시드를 기록한 manifest 저장"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    system_path = save_system(system, out_dir / "system.json")
    data_path = save_dataset(data, out_dir / "data.csv")
    manifest = {
        "seed": seed,
        "system_seed": system.seed,
        "data_seed": data.seed,
        "L": system.L,
        "N": data.N,
        "edges": true_topology(system).to_list(),
        "system": system_path.name,
        "data": data_path.name,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2)
    return manifest


@click.command("generate")
@click.option("--L", "L", default=6, type=int, help="노드 개수")
@click.option("--N", "N", default=500, type=int, help="샘플 개수")
@click.option("--edge-prob", default=0.5, type=float, help="각 간선의 존재 확률")
@click.option("--seed", default=0, type=int, help="마스터 시드")
@click.option("--order-min", default=2, type=int, help="전달함수 최소 차수")
@click.option("--order-max", default=5, type=int, help="전달함수 최대 차수")
@click.option("--sigma", default=1.0, type=float, help="잡음 표준편차")
@click.option("--max-attempts", default=1000, type=int, help="재추출 한도")
@click.option("--out", "out", default=str(RESULTS_DIR / "network"), help="출력 디렉토리")
@click.option("--config", "config_file", default=None, type=click.Path(exists=True), help="옵션을 덮어쓰는 JSON 설정 파일")
def main(
    L: int,
    N: int,
    edge_prob: float,
    seed: int,
    order_min: int,
    order_max: int,
    sigma: float,
    max_attempts: int,
    out: str,
    config_file: Optional[str],
):
    """랜덤 네트워크 시스템과 측정 데이터 생성"""
    setup_logging()
    try:
        params = apply_config_file(
            dict(L=L, N=N, edge_prob=edge_prob, seed=seed, order_min=order_min, order_max=order_max,
                 sigma=sigma, max_attempts=max_attempts, out=out),
            config_file,
        )
        logger.info("=" * 50)
        logger.info(
            f"네트워크 생성 - L={params['L']}, N={params['N']}, "
            f"edge_prob={params['edge_prob']}, seed={params['seed']}"
        )
        logger.info("=" * 50)
        system, data = generate_network(
            int(params["L"]),
            int(params["N"]),
            float(params["edge_prob"]),
            int(params["seed"]),
            order_range=(int(params["order_min"]), int(params["order_max"])),
            sigma=float(params["sigma"]),
            max_attempts=int(params["max_attempts"]),
        )
        manifest = write_outputs(system, data, Path(params["out"]), int(params["seed"]))
    except (NetTopError, ValidationError, OSError, ValueError) as e:
        logger.error(f"네트워크 생성 실패: {e}")
        raise click.ClickException(str(e))

    logger.info(f"간선 {len(manifest['edges'])}개: {manifest['edges']}")
    logger.info(f"저장 완료: {params['out']}")


if __name__ == "__main__":
    main()
