"""Wall-clock comparison of dynamic and fast routing.

Two measurements: per-example latency through the benchmark harness on a
planted test set, and batched throughput at a CapsNet-sized layer
(N_i=1152, N_j=10, d_h=16) with random predictions.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from caproute import storage
from caproute.bench import flop_ratio, run_benchmark
from caproute.master import build_master
from caproute.routing import RoutingConfig, dynamic_route, fast_route
from caproute.synth import PlantedSpec, generate_planted


@dataclass
class BenchConfig:
    iterations: int = 3
    repeats: int = 5
    per_class: int = 20
    batch: int = 256
    n_lower: int = 1152
    seed: int = 0
    out: str = "results/bench.csv"


def batched_speedup(cfg: BenchConfig) -> tuple[float, float]:
    rng = np.random.default_rng(cfg.seed)
    u_hat = rng.standard_normal((cfg.batch, cfg.n_lower, 10, 16)) * 0.05
    master = rng.random((cfg.n_lower, 10))
    routing = RoutingConfig(iterations=cfg.iterations)
    dynamic_route(u_hat, routing), fast_route(u_hat, master)
    t_dyn, t_fast = [], []
    for _ in range(cfg.repeats):
        t0 = time.perf_counter()
        dynamic_route(u_hat, routing)
        t_dyn.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        fast_route(u_hat, master)
        t_fast.append(time.perf_counter() - t0)
    return float(np.median(t_dyn)), float(np.median(t_fast))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    defaults = BenchConfig()
    for name in ("iterations", "repeats", "per_class", "batch", "n_lower", "seed"):
        parser.add_argument(f"--{name.replace('_', '-')}", type=int, default=getattr(defaults, name))
    parser.add_argument("--out", default=defaults.out)
    cfg = BenchConfig(**vars(parser.parse_args()))

    routing = RoutingConfig(iterations=cfg.iterations)
    train, test = generate_planted(PlantedSpec(per_class_train=cfg.per_class, per_class_test=cfg.per_class, seed=cfg.seed))
    dyn, fast = run_benchmark(test, build_master(train, routing), routing, repeats=cfg.repeats)
    rows = [r.as_row() for r in (dyn, fast)]
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    storage.write_csv(cfg.out, list(rows[0]), [["" if v is None else v for v in r.values()] for r in rows])
    print(f"per-example: dynamic p50 {dyn.per_example_p50_us:.1f}us, fast p50 {fast.per_example_p50_us:.1f}us, "
          f"speedup {fast.speedup_vs_dynamic:.2f}x, agreement {fast.agreement_rate:.4f}")

    t_dyn, t_fast = batched_speedup(cfg)
    ratio = flop_ratio(cfg.n_lower, 10, 16, cfg.iterations)
    print(f"batch {cfg.batch} at N_i={cfg.n_lower}: dynamic {t_dyn * 1e3:.1f}ms, fast {t_fast * 1e3:.1f}ms, "
          f"speedup {t_dyn / t_fast:.1f}x (multiply-add ratio {ratio:g}x)")


if __name__ == "__main__":
    main()
