"""
trace 출력 모듈
- 저장된 탐색 trace (JSON lines) 를 표로 출력
- 한 노드에 대해 전체 그래프 EM 수렴 기록(iteration, J)과 BS 탐색 trace 를 새로 계산해 저장
"""

import json
from pathlib import Path
from typing import Optional

import click
import numpy as np
import pandas as pd
from loguru import logger

from src.bayes_em import EmOptions, default_hypers, draw_initial_sigma, em_fit, em_trace_frame
from src.config import RESULTS_DIR, setup_logging
from src.exceptions import NetTopError
from src.network_model import Topology, load_dataset
from src.predictor import build_miso
from src.search import SearchConfig, bs_search, trace_records


def read_traces(path: Path) -> pd.DataFrame:
    """JSON lines trace → DataFrame"""
    with open(path, "r", encoding="utf-8") as f:
        records = [json.loads(line) for line in f if line.strip()]
    frame = pd.DataFrame(records, columns=["node", "step", "phase", "edge", "J_before", "J_after", "accepted"])
    if not frame.empty:
        frame["delta_J"] = frame["J_after"] - frame["J_before"]
    return frame


def node_traces(data_file: Path, node: int, order: int, tau: float, seed: int) -> tuple[pd.DataFrame, list[dict]]:
    """노드 하나의 전체 그래프 EM 기록과 BS 탐색 trace"""
    data = load_dataset(data_file)
    problem = build_miso(data, node, order)
    init = default_hypers(range(1, data.L + 1), sigma=draw_initial_sigma(np.random.default_rng(seed)))
    full_graph = Topology.miso(node, range(1, data.L + 1))
    full_hypers, em_trace = em_fit(problem, full_graph, init, EmOptions())
    logger.info(
        f"노드 w{node} EM: {em_trace.iterations}회, 수렴={em_trace.converged}, M 고정={em_trace.clamped}"
    )
    _, search_trace = bs_search(problem, full_hypers, SearchConfig(tau=tau))
    return em_trace_frame(em_trace), trace_records(search_trace, node)


@click.command("trace-dump")
@click.option("--traces", "traces_file", default=None, type=click.Path(exists=True), help="출력할 traces.jsonl")
@click.option("--data", "data_file", default=None, type=click.Path(exists=True), help="측정 데이터 CSV")
@click.option("--node", "-j", default=1, type=int, help="대상 노드 번호")
@click.option("--order", "-n", default=20, type=int, help="FIR 절단 차수 n")
@click.option("--tau", default=0.0, type=float, help="BS 허용 오차 τ")
@click.option("--seed", default=0, type=int, help="σ 초기값 시드")
@click.option("--out", "out", default=str(RESULTS_DIR / "traces"), help="출력 디렉토리")
def main(
    traces_file: Optional[str],
    data_file: Optional[str],
    node: int,
    order: int,
    tau: float,
    seed: int,
    out: str,
):
    """EM / 탐색 trace 확인"""
    setup_logging()
    if (traces_file is None) == (data_file is None):
        raise click.UsageError("--traces 와 --data 중 하나만 지정하세요")

    try:
        if traces_file:
            frame = read_traces(Path(traces_file))
            if frame.empty:
                click.echo("trace 가 비어 있습니다.")
                return
            click.echo(frame.to_string(index=False))
            return

        em_frame, records = node_traces(Path(data_file), node, order, tau, seed)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        em_path = out_dir / f"em_w{node}.csv"
        search_path = out_dir / f"search_w{node}.jsonl"
        em_frame.to_csv(em_path, index=False, float_format="%.17g")
        with open(search_path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, ensure_ascii=False) + "\n")
    except (NetTopError, OSError, ValueError) as e:
        logger.error(f"trace 출력 실패: {e}")
        raise click.ClickException(str(e))

    click.echo(em_frame.to_string(index=False))
    logger.info(f"저장 완료: {em_path}, {search_path}")


if __name__ == "__main__":
    main()
