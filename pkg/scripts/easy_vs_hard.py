"""Dynamic vs fast accuracy across planted regimes.

Compares dynamic routing, fast routing with a Max-Min master, fast routing
with a Softmax master and the GT-column-only master on a grid of noise
levels and overlaps. One CSV row per (overlap, noise) cell.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from caproute import storage
from caproute.master import BuilderConfig, build_gt_only_master, build_master, route_dataset
from caproute.routing import NormKind, RoutingConfig, classify, dynamic_route, fast_route
from caproute.synth import PlantedSpec, generate_planted


@dataclass
class SweepConfig:
    noises: list[float] = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0, 3.0])
    overlaps: list[float] = field(default_factory=lambda: [0.0, 0.5])
    per_class: int = 100
    seed: int = 0
    out: str = "results/easy_vs_hard.csv"


def _acc(outputs, labels) -> float:
    return float(np.mean(classify(outputs) == labels))


def evaluate(spec: PlantedSpec) -> dict:
    train, test = generate_planted(spec)
    maxmin = RoutingConfig()
    softmax = RoutingConfig(norm=NormKind.SOFTMAX)
    coeffs, _ = route_dataset(train, maxmin)
    master = build_master(train, maxmin)
    soft_master = build_master(train, softmax, BuilderConfig(norm=NormKind.SOFTMAX))
    gt_only = build_gt_only_master(coeffs, train.labels, spec.classes)
    x, y = test.predictions, test.labels
    dyn = _acc(dynamic_route(x, maxmin).outputs, y)
    fast = _acc(fast_route(x, master), y)
    return {
        "dynamic": dyn,
        "fast_maxmin": fast,
        "fast_softmax": _acc(fast_route(x, soft_master), y),
        "fast_gt_only": _acc(fast_route(x, gt_only), y),
        "gap": dyn - fast,
        "master_std_maxmin": float(np.std(master.values)),
        "master_std_softmax": float(np.std(soft_master.values)),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--noises", type=float, nargs="+", default=SweepConfig().noises)
    parser.add_argument("--overlaps", type=float, nargs="+", default=SweepConfig().overlaps)
    parser.add_argument("--per-class", type=int, default=SweepConfig.per_class)
    parser.add_argument("--seed", type=int, default=SweepConfig.seed)
    parser.add_argument("--out", default=SweepConfig.out)
    cfg = SweepConfig(**{k.replace("-", "_"): v for k, v in vars(parser.parse_args()).items()})

    rows, header = [], None
    for rho in cfg.overlaps:
        for sigma in cfg.noises:
            spec = PlantedSpec(noise=sigma, overlap=rho, per_class_train=cfg.per_class,
                               per_class_test=cfg.per_class, seed=cfg.seed)
            result = evaluate(spec)
            header = ["overlap", "noise", *result]
            rows.append([rho, sigma, *result.values()])
            print(f"rho={rho:.2f} sigma={sigma:.2f}  " + "  ".join(f"{k}={v:.4f}" for k, v in result.items()))
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    storage.write_csv(cfg.out, header, rows)


if __name__ == "__main__":
    main()
