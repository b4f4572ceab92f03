"""Run scenarios and collect transcripts, metrics and invariant violations."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable

from ..scenario import ScenarioConfig
from ..simnet import Simulator, Transcript
from .invariants import Violation, check_invariants
from .metrics import RunMetrics, metrics_csv, run_metrics


@dataclass
class RunResult:
    config: ScenarioConfig
    transcript: Transcript
    metrics: RunMetrics
    violations: list[Violation]


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    transcript = Simulator(cfg).run()
    return RunResult(cfg, transcript, run_metrics(transcript), check_invariants(transcript))


def run_many(configs: Iterable[ScenarioConfig], jobs: int = 1) -> list[RunResult]:
    """Scenarios are independent, so ``jobs > 1`` runs them in worker processes."""
    configs = list(configs)
    if jobs <= 1 or len(configs) <= 1:
        return [run_scenario(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_scenario, configs))


def run_suite(configs: Iterable[ScenarioConfig], jobs: int = 1) -> str:
    """CSV report: one row per (scenario, request) plus one aggregate row per scenario."""
    return metrics_csv([r.transcript for r in run_many(configs, jobs)])
