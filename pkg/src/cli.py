"""
네트워크 토폴로지 식별 CLI

    python -m src.cli generate --L 6 --N 500 --seed 7
    python -m src.cli identify --data results/network/data.csv --method bs
    python -m src.cli benchmark --preset paper-N500-desk
    python -m src.cli trace-dump --traces results/identify/traces.jsonl
"""

import importlib

import click

# 숫자로 시작하는 모듈명은 importlib으로 로드
_generate = importlib.import_module("src.01_generate_network")
_identify = importlib.import_module("src.02_identify_topology")
_benchmark = importlib.import_module("src.03_run_benchmark")
_trace = importlib.import_module("src.04_dump_trace")


@click.group()
def cli():
    """동적 네트워크 토폴로지 식별 도구"""
    pass


cli.add_command(_generate.main, "generate")
cli.add_command(_identify.main, "identify")
cli.add_command(_benchmark.main, "benchmark")
cli.add_command(_trace.main, "trace-dump")


if __name__ == "__main__":
    cli()
