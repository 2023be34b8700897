"""Timing harness: dynamic routing vs. fast routing with a master matrix."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from caproute.errors import DimensionError, ValidationError
from caproute.master import MasterMatrix
from caproute.routing import RoutingConfig, classify, dynamic_route, fast_route
from caproute.synth import LabeledDataset


@dataclass
class BenchReport:
    mode: str
    wall_time_total: float  # seconds, median over repeats
    per_example_mean_us: float
    per_example_p50_us: float
    per_example_p95_us: float
    examples: int
    iterations: int
    speedup_vs_dynamic: float | None
    flop_ratio: float | None
    agreement_rate: float
    accuracy: float
    throughput_per_s: float  # threaded, informational only

    def as_row(self) -> dict:
        return asdict(self)


def multiply_adds(n_lower: int, n_upper: int, dim: int, iterations: int | None) -> int:
    """Multiply-adds in the routing layer; ``iterations=None`` means fast routing.

    Dynamic routing does one weighted sum and one agreement update per
    iteration, each N_i*N_j*d_h multiply-adds; fast routing does one
    weighted sum.
    """
    per_pass = n_lower * n_upper * dim
    return per_pass if iterations is None else 2 * iterations * per_pass


def flop_ratio(n_lower: int, n_upper: int, dim: int, iterations: int) -> float:
    return multiply_adds(n_lower, n_upper, dim, iterations) / multiply_adds(n_lower, n_upper, dim, None)


def _time_each(fn, inputs) -> np.ndarray:
    out = np.empty(len(inputs))
    for e, x in enumerate(inputs):
        t0 = time.perf_counter_ns()
        fn(x)
        out[e] = time.perf_counter_ns() - t0
    return out


def _throughput(fn, inputs, workers: int) -> float:
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fn, inputs))
    return len(inputs) / (time.perf_counter() - t0)


def run_benchmark(
    dataset: LabeledDataset,
    master: MasterMatrix,
    routing_config: RoutingConfig | None = None,
    repeats: int = 5,
    workers: int = 4,
) -> tuple[BenchReport, BenchReport]:
    """Time per-example dynamic and fast routing on the same inputs.

    One untimed warm-up pass precedes ``repeats`` timed passes. Per-example
    latency is the median over repeats; totals are the median pass time.
    """
    routing_config = routing_config or RoutingConfig()
    if repeats < 3:
        raise ValidationError("repeats must be >= 3")
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    n_i, n_j, dim = dataset.dims
    if master.shape != (n_i, n_j):
        raise DimensionError(f"master {master.shape} does not match dataset ({n_i}, {n_j})")

    inputs = list(dataset.predictions)
    values = master.values

    def dyn(x):
        return dynamic_route(x, routing_config).outputs

    def fast(x):
        return fast_route(x, values, routing_config.epsilon)

    results = {}
    for mode, fn in (("dynamic", dyn), ("fast", fast)):
        preds = np.array([classify(fn(x)) for x in inputs])  # warm-up, also the reference answers
        times = np.stack([_time_each(fn, inputs) for _ in range(repeats)])
        per_example = np.median(times, axis=0) / 1e3
        total = float(np.median(times.sum(axis=1))) / 1e9
        results[mode] = (preds, per_example, total, _throughput(fn, inputs, workers))

    dyn_preds, fast_preds = results["dynamic"][0], results["fast"][0]
    agreement = float(np.mean(dyn_preds == fast_preds))
    reports = []
    for mode in ("dynamic", "fast"):
        preds, per_example, total, tput = results[mode]
        is_fast = mode == "fast"
        reports.append(
            BenchReport(
                mode=mode,
                wall_time_total=total,
                per_example_mean_us=float(per_example.mean()),
                per_example_p50_us=float(np.percentile(per_example, 50)),
                per_example_p95_us=float(np.percentile(per_example, 95)),
                examples=len(inputs),
                iterations=routing_config.iterations,
                speedup_vs_dynamic=results["dynamic"][2] / total if is_fast else None,
                flop_ratio=flop_ratio(n_i, n_j, dim, routing_config.iterations) if is_fast else None,
                agreement_rate=agreement,
                accuracy=float(np.mean(preds == dataset.labels)),
                throughput_per_s=tput,
            )
        )
    return reports[0], reports[1]
