"""
토폴로지 식별 모듈
측정 데이터 CSV 에서 BS / iterative-EM BS / GLasso / 커널 GLasso 로 네트워크 토폴로지를 추정하고
토폴로지 JSON, 노드별 탐색 trace (JSON lines), 소요 시간을 저장
"""

import json
import time
from pathlib import Path
from typing import Optional

import click
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from src.bayes_em import EmOptions
from src.config import RESULTS_DIR, apply_config_file, setup_logging
from src.exceptions import ConfigurationError, NetTopError, NodeIdentificationError
from src.glasso import (
    GlassoConfig,
    identify_network_glasso,
    identify_network_glasso_fixed,
    regularization_path,
)
from src.network_model import DataSet, load_dataset
from src.predictor import build_miso
from src.search import SearchConfig, identify_network, trace_records

METHODS = ("bs", "bs-iter-em", "glasso", "kglasso")


def parse_grid(text) -> list[float]:
    """"0,10,20" 또는 "start:stop:step" (stop 포함) 형식의 그리드"""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    text = str(text).strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigurationError(f"그리드 형식이 올바르지 않습니다: {text!r}")
        start, stop, step = parts
        count = int(round((stop - start) / step)) + 1
        return [round(start + k * step, 10) for k in range(count)]
    values = [float(x) for x in text.split(",") if x.strip()]
    if not values:
        raise ConfigurationError(f"그리드가 비어 있습니다: {text!r}")
    return values


def identify(
    data: DataSet,
    method: str,
    order: int,
    tau: float = 0.0,
    seed: Optional[int] = None,
    delta: Optional[float] = None,
    beta: Optional[float] = None,
    delta_grid: Optional[list] = None,
    beta_grid: Optional[list] = None,
) -> tuple[dict, list[dict]]:
    """(토폴로지 문서, trace 레코드 목록)"""
    if method not in METHODS:
        raise ConfigurationError(f"알 수 없는 방법: {method} (가능: {METHODS})")

    if method in ("bs", "bs-iter-em"):
        mode = "fixed-hypers" if method == "bs" else "iterative-em"
        topology, nodes = identify_network(data, order, SearchConfig(tau=tau, mode=mode, em=EmOptions()), seed=seed)
        document = {
            "method": method,
            "order": order,
            "tau": tau,
            "seed": seed,
            "L": data.L,
            "edges": topology.to_list(),
            "nodes": [
                {
                    "node": result.node,
                    "predictor_graph": result.predictor.to_list(),
                    "self_loop_deleted": result.trace.self_loop_deleted,
                    "hypers": result.hypers.to_dict(),
                }
                for result in nodes
            ],
        }
        records = [record for result in nodes for record in trace_records(result.trace, result.node)]
        return document, records

    problems = [build_miso(data, j, order) for j in range(1, data.L + 1)]
    if delta is not None:
        cfg = GlassoConfig(delta=delta, beta=beta, normalize=True)
        topology, fits = identify_network_glasso_fixed(problems, cfg, method)
        configs = [cfg] * len(fits)
    else:
        topology, configs, fits = identify_network_glasso(
            problems,
            delta_grid or parse_grid("0:2000:10"),
            beta_grid or parse_grid("0.1:0.9:0.1"),
            method=method,
        )
    document = {
        "method": method,
        "order": order,
        "L": data.L,
        "edges": topology.to_list(),
        "nodes": [
            {
                "node": result.j,
                "delta": cfg.delta,
                "beta": cfg.beta,
                "block_norms": {f"w{i}": norm for i, norm in result.norms().items()},
                "converged": result.converged,
            }
            for cfg, result in zip(configs, fits)
        ],
    }
    return document, []


def regularization_paths(data: DataSet, document: dict, delta_grid: list) -> dict[int, pd.DataFrame]:
    """노드별 δ 경로 (커널 GLasso 는 그 노드에서 고른 β 사용)"""
    method = document["method"]
    frames = {}
    for node in document["nodes"]:
        problem = build_miso(data, node["node"], document["order"])
        cfg = GlassoConfig(beta=node["beta"], normalize=True)
        frames[node["node"]] = regularization_path(problem, delta_grid, cfg, method=method)
    return frames


def write_outputs(document: dict, records: list[dict], elapsed: float, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "topology.json", "w", encoding="utf-8") as f:
        json.dump(document, f, ensure_ascii=False, indent=2)
    with open(out_dir / "traces.jsonl", "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    with open(out_dir / "timing.json", "w", encoding="utf-8") as f:
        json.dump({"method": document["method"], "seconds": elapsed}, f, ensure_ascii=False, indent=2)
    return out_dir


@click.command("identify")
@click.option("--data", "data_file", required=True, type=click.Path(exists=True), help="측정 데이터 CSV (w1..wL)")
@click.option("--method", "-m", default="bs", type=click.Choice(METHODS), help="식별 방법")
@click.option("--order", "-n", default=20, type=int, help="FIR 절단 차수 n")
@click.option("--tau", default=0.0, type=float, help="BS 허용 오차 τ")
@click.option("--seed", default=0, type=int, help="σ 초기값 시드")
@click.option("--delta", default=None, type=float, help="고정 δ (지정 시 교차 검증 생략)")
@click.option("--beta", default=None, type=float, help="커널 GLasso 고정 β")
@click.option("--delta-grid", default="0:2000:10", help="교차 검증 δ 그리드")
@click.option("--beta-grid", default="0.1:0.9:0.1", help="교차 검증 β 그리드")
@click.option("--out", "out", default=str(RESULTS_DIR / "identify"), help="출력 디렉토리")
@click.option("--config", "config_file", default=None, type=click.Path(exists=True), help="옵션을 덮어쓰는 JSON 설정 파일")
@click.option("--export-path", is_flag=True, help="GLasso 계열: 노드별 δ 경로 CSV 저장")
def main(
    data_file: str,
    method: str,
    order: int,
    tau: float,
    seed: int,
    delta: Optional[float],
    beta: Optional[float],
    delta_grid: str,
    beta_grid: str,
    out: str,
    config_file: Optional[str],
    export_path: bool,
):
    """측정 데이터로 네트워크 토폴로지 식별"""
    setup_logging()
    try:
        params = apply_config_file(
            dict(data_file=data_file, method=method, order=order, tau=tau, seed=seed, delta=delta,
                 beta=beta, delta_grid=delta_grid, beta_grid=beta_grid, out=out),
            config_file,
        )
        if params["method"] not in METHODS:
            raise ConfigurationError(f"알 수 없는 방법: {params['method']} (가능: {METHODS})")
        data = load_dataset(Path(params["data_file"]))
        logger.info("=" * 50)
        logger.info(f"토폴로지 식별 - 방법: {params['method']}, N={data.N}, L={data.L}, n={params['order']}")
        logger.info("=" * 50)

        started = time.perf_counter()
        document, records = identify(
            data,
            params["method"],
            int(params["order"]),
            tau=float(params["tau"]),
            seed=params["seed"],
            delta=params["delta"],
            beta=params["beta"],
            delta_grid=parse_grid(params["delta_grid"]),
            beta_grid=parse_grid(params["beta_grid"]),
        )
        elapsed = time.perf_counter() - started
        paths = {}
        if export_path and params["method"] in ("glasso", "kglasso"):
            paths = regularization_paths(data, document, parse_grid(params["delta_grid"]))
        # 모든 계산이 끝난 뒤에만 출력 디렉토리에 기록
        out_dir = write_outputs(document, records, elapsed, Path(params["out"]))
        for node, frame in paths.items():
            frame.to_csv(out_dir / f"path_w{node}.csv", index=False, float_format="%.17g")
    except NodeIdentificationError as e:
        for node, message in e.failures.items():
            logger.error(f"노드 w{node}: {message}")
        raise click.ClickException(str(e))
    except (NetTopError, ValidationError, OSError, ValueError) as e:
        logger.error(f"토폴로지 식별 실패: {e}")
        raise click.ClickException(str(e))

    logger.info(f"추정 간선 {len(document['edges'])}개: {document['edges']} ({elapsed:.2f}초)")


if __name__ == "__main__":
    main()
