"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 format error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from caproute import analysis, storage
from caproute.bench import run_benchmark
from caproute.errors import FormatError, ValidationError
from caproute.master import BuilderConfig, FilterSpec, build_master, route_dataset
from caproute.routing import RoutingConfig, capsule_norms, classify, dynamic_route, fast_route
from caproute.synth import PlantedSpec, generate_planted

EXIT_VALIDATION, EXIT_FORMAT, EXIT_IO = 2, 3, 4

_GEN_FLAGS = {
    "classes": ("--classes", int),
    "n_lower": ("--n-lower", int),
    "dim": ("--dim", int),
    "active_fraction": ("--active-frac", float),
    "overlap": ("--overlap", float),
    "noise": ("--noise", float),
    "beta": ("--beta", float),
    "jitter": ("--jitter", float),
    "per_class_train": ("--per-class-train", int),
    "per_class_test": ("--per-class-test", int),
}


def _routing_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--norm", choices=["maxmin", "softmax"], default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--q", type=float, default=None)


def _routing_config(args, fallback: RoutingConfig | None = None) -> RoutingConfig:
    base = fallback or RoutingConfig()
    return RoutingConfig(
        iterations=args.iters if args.iters is not None else base.iterations,
        norm=args.norm or base.norm,
        lower=args.p if args.p is not None else base.lower,
        upper=args.q if args.q is not None else base.upper,
        init_coefficient=base.init_coefficient,
        epsilon=base.epsilon,
    )


def cmd_gen(args) -> None:
    fields = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            try:
                fields = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"spec file is not valid JSON: {exc}") from exc
        if not isinstance(fields, dict):
            raise ValidationError("spec file must hold a JSON object")
    for name in _GEN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    fields["seed"] = args.seed
    try:
        spec = PlantedSpec(**fields)
    except TypeError as exc:
        raise ValidationError(f"bad planted spec: {exc}") from exc
    train, test = generate_planted(spec)
    storage.write_dataset(train, args.out_train)
    storage.write_dataset(test, args.out_test)
    print(f"train: {len(train)} examples -> {args.out_train}")
    print(f"test:  {len(test)} examples -> {args.out_test}")


def cmd_route(args) -> None:
    data = storage.read_dataset(args.dataset)
    config = _routing_config(args)
    if args.mode == "fast":
        if not args.master:
            raise ValidationError("--mode fast needs --master")
        master = storage.read_master(args.master)
        outputs = fast_route(data.predictions, master, config.epsilon)
        coeffs = np.zeros((len(data), 0) + data.dims[:2])
    else:
        trace = dynamic_route(data.predictions, config)
        outputs, coeffs = trace.outputs, trace.coefficients
    preds = classify(outputs)
    if args.out_trace:
        meta = {"mode": args.mode, "routing_config": config.to_dict()}
        storage.write_trace(storage.TraceRecord(coeffs, outputs, data.labels, meta), args.out_trace)
    if args.report:
        norms = capsule_norms(outputs)
        header = ["example", "label", "predicted"] + [f"norm{j}" for j in range(norms.shape[1])]
        rows = [[e, int(y), int(p), *map(float, n)] for e, (y, p, n) in enumerate(zip(data.labels, preds, norms))]
        storage.write_csv(args.report, header, rows)
    print(f"{args.mode} routing accuracy: {np.mean(preds == data.labels):.4f} on {len(data)} examples")


def cmd_build_master(args) -> None:
    data = storage.read_dataset(args.dataset)
    if args.filter.startswith("kmeans") and args.seed is None:
        raise ValidationError("--filter kmeans needs --seed")
    routing = _routing_config(args)
    builder = BuilderConfig(
        norm=routing.norm, lower=routing.lower, upper=routing.upper,
        filter=FilterSpec.parse(args.filter, seed=args.seed),
    )
    master = build_master(data, routing, builder)
    storage.write_master(master, args.out, dim=data.dims[2])
    print(f"master {master.shape} from {sum(master.class_counts)} examples -> {args.out}")


def cmd_analyze(args) -> None:
    data = storage.read_dataset(args.dataset)
    master = storage.read_master(args.master) if args.master else None
    config = _routing_config(args, master.routing_config if master else None)
    k = data.n_classes

    if args.kind in ("tuning", "accuracy"):
        if master is not None:
            outputs = fast_route(data.predictions, master, config.epsilon)
        else:
            outputs = dynamic_route(data.predictions, config).outputs
        if args.kind == "tuning":
            result = analysis.tuning_curves(outputs, data.labels, k)
        else:
            result = analysis.accuracy_report(classify(outputs), data.labels, k)
    else:
        if args.kind == "gt-corr" and args.first is not None:
            data = data.subset(np.arange(min(args.first, len(data))))
        coeffs, _ = route_dataset(data, config)
        if args.kind == "gt-corr":
            result = analysis.gt_correlation_matrix(coeffs, data.labels)
        elif args.kind == "class-corr":
            result = analysis.class_mean_correlations(coeffs, data.labels, k)
        else:
            if master is None:
                raise ValidationError("master-corr needs --master")
            result = analysis.master_class_correlations(master, coeffs, data.labels, k)
    storage.export_csv(result, args.out)
    print(f"{args.kind} -> {args.out}")


def cmd_bench(args) -> None:
    data = storage.read_dataset(args.dataset)
    master = storage.read_master(args.master)
    base = master.routing_config or RoutingConfig()
    config = RoutingConfig(
        iterations=args.iters, norm=base.norm, lower=base.lower, upper=base.upper,
        init_coefficient=base.init_coefficient, epsilon=base.epsilon,
    )
    reports = run_benchmark(data, master, config, args.repeats)
    rows = [r.as_row() for r in reports]
    header = list(rows[0])
    storage.write_csv(args.out, header, [["" if r[h] is None else r[h] for h in header] for r in rows])
    dyn, fast = reports
    print(f"dynamic {dyn.wall_time_total:.4f}s  fast {fast.wall_time_total:.4f}s  "
          f"speedup {fast.speedup_vs_dynamic:.2f}x (multiply-add ratio {fast.flop_ratio:.0f}x)  "
          f"agreement {fast.agreement_rate:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caproute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate planted train/test datasets")
    p.add_argument("--spec", help="JSON file with planted-spec fields; inline flags override it")
    for name, (flag, typ) in _GEN_FLAGS.items():
        p.add_argument(flag, dest=name, type=typ, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("route", help="route a dataset and report predictions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=["dynamic", "fast"], required=True)
    p.add_argument("--master")
    _routing_args(p)
    p.add_argument("--out-trace")
    p.add_argument("--report")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("build-master", help="build master routing coefficients from a training set")
    p.add_argument("--dataset", required=True)
    _routing_args(p)
    p.add_argument("--filter", default="none", help="none | kmeans:<drop> | sim:<keep>")
    p.add_argument("--seed", type=int, default=None, help="required for the k-means filter")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_master)

    p = sub.add_parser("analyze", help="correlation, tuning-curve and accuracy tables as CSV")
    p.add_argument("kind", choices=["gt-corr", "class-corr", "master-corr", "tuning", "accuracy"])
    p.add_argument("--dataset", required=True)
    p.add_argument("--master")
    p.add_argument("--first", type=int, default=None)
    _routing_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="time dynamic vs fast routing")
    p.add_argument("--dataset", required=True)
    p.add_argument("--master", required=True)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
