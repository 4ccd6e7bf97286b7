"""Command-line interface.

Exit codes: 0 success, 1 property violation (``oracle-check``), 2 unreadable
configuration file, 3 invalid parameters.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, ripcalc
from .model import FlatSparsity, SparsityTree
from .measure import gaussian_operator, normalize_columns, unnormalize_solution
from .solve import SolverOptions, hihtp, htp

EXIT_OK, EXIT_VIOLATION, EXIT_UNREADABLE, EXIT_INVALID = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` overrides; dotted keys reach into nested objects."""
    config = json.loads(json.dumps(config))
    for item in overrides:
        if "=" not in item:
            raise bench.ConfigError(item, "override must look like key=value")
        key, value = item.split("=", 1)
        target = config
        parts = key.split(".")
        for p in parts[:-1]:
            target = target.setdefault(p, {})
        target[parts[-1]] = _parse_value(value)
    return config


def cmd_sweep(args) -> int:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config {path}: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE
    try:
        raw = apply_overrides(raw, args.set or [])
        if args.seed is not None:
            raw["seed"] = args.seed
        config = bench.ExperimentConfig.from_json(raw)
    except bench.ConfigError as exc:
        print(f"invalid config field {exc.field}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name
    records = bench.run_sweep(config, progress=args.progress)
    bench.write_csv(records, out / f"{stem}.csv")
    bench.write_sidecar(config, out / f"{stem}.json", records)
    for (alg, m), agg in bench.summarize(records).items():
        if "recovery_rate" in agg:
            print(f"{alg:>6} m={m:<5d} recovered {agg['recovery_rate']:.2f}  "
                  f"blocks {agg['mean_total_blocks']:.2f}  "
                  f"median time {agg['median_wall_time']:.4f}s")
    print(f"wrote {out / (stem + '.csv')} and {out / (stem + '.json')}")
    return EXIT_OK


def _parse_levels(text: str) -> list[tuple[int, int]]:
    levels = []
    for part in text.split(","):
        n, s = part.split(":")
        levels.append((int(n), int(s)))
    return levels


def cmd_rip_bound(args) -> int:
    try:
        if args.levels:
            levels = _parse_levels(args.levels)
        else:
            FlatSparsity(args.N, args.n, args.s, args.sigma)
            levels = [(args.N, args.s), (args.n, args.sigma)]
        tree = SparsityTree.uniform(levels)
        d = tree.d
        k = int(np.prod([s for _, s in levels]))
        rows = []
        for delta in args.delta:
            for eps in args.epsilon:
                structured = ripcalc.tree_sample_bound(levels, delta, eps)
                plain = ripcalc.unstructured_sample_bound(d, k, delta, eps)
                rows.append((delta, eps, structured, plain, plain - structured))
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID
    shape = " ".join(f"({n},{s})" for n, s in levels)
    print(f"levels {shape}  d={d}  support size {k}")
    print(f"{'delta':>8} {'epsilon':>8} {'hierarchical':>13} {'unstructured':>13} {'saved':>8}")
    for delta, eps, a, b, diff in rows:
        print(f"{delta:>8g} {eps:>8g} {a:>13d} {b:>13d} {diff:>8d}")
    if args.output:
        with open(args.output, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["levels", "d", "delta", "epsilon", "m_hierarchical", "m_unstructured"])
            for delta, eps, a, b, _ in rows:
                w.writerow([shape, d, delta, eps, a, b])
    return EXIT_OK


def cmd_rip_estimate(args) -> int:
    try:
        fp = FlatSparsity(args.N, args.n, args.s, args.sigma)
        op = gaussian_operator(args.m, fp.d, args.seed)
        a = op.matrix / np.sqrt(args.m)
        if args.trials:
            est = ripcalc.monte_carlo_rip(a, fp, args.trials, args.seed)
        else:
            est = ripcalc.exhaustive_rip(a, fp, cap=args.cap)
    except (ValueError, RuntimeError) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"delta_(s={fp.s},sigma={fp.sigma}) of A/sqrt(m), m={args.m}, d={fp.d}: "
          f"{est.delta_lower:.6f} ({est.method}, {est.supports_checked} supports)")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .oracle import run_all
    from .threshold import support_indices

    thresholder = None
    if args.inject_fault:
        def thresholder(z, sp):
            # deliberately wrong: thresholds the reversed vector
            omega = support_indices(np.asarray(z)[::-1], sp)
            return omega

    reports = run_all(seed=args.seed, cap=args.cap, scale=args.scale, thresholder=thresholder)
    for r in reports:
        print(r.line(args.seed))
    return EXIT_OK if all(r.ok for r in reports) else EXIT_VIOLATION


def cmd_demo(args) -> int:
    try:
        fp = FlatSparsity(args.N, args.n, args.s, args.sigma)
        if not 1 <= args.m <= fp.d:
            raise ValueError(f"m must lie in [1, {fp.d}]")
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID
    seeds = np.random.SeedSequence(args.seed).spawn(3)
    x, _ = bench.gen_signal(fp, "real", seeds[0])
    op = gaussian_operator(args.m, fp.d, seeds[1])
    y = op.apply(x)
    if args.snr:
        y = bench.add_noise(y, args.snr, seeds[2])
    unit, scaling = normalize_columns(op)
    print(f"N={fp.N} n={fp.n} s={fp.s} sigma={fp.sigma} m={args.m} seed={args.seed}")
    for name, run in (("htp", lambda: htp(unit, y, fp.s * fp.sigma, SolverOptions())),
                      ("hihtp", lambda: hihtp(unit, y, fp, SolverOptions()))):
        res = run()
        err = np.linalg.norm(unnormalize_solution(res.estimate, scaling) - x)
        print(f"{name:>6}: error {err:.3e}  iterations {res.iterations}  stop {res.stop_reason}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hisparse", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sw = sub.add_parser("sweep", help="run a recovery sweep from a JSON config")
    sw.add_argument("--config", required=True)
    sw.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config entry (repeatable, dotted keys allowed)")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--output", default=".")
    sw.add_argument("--name", default="sweep", help="stem of the output files")
    sw.add_argument("--progress", action="store_true")
    sw.set_defaults(func=cmd_sweep)

    rb = sub.add_parser("rip-bound", help="Gaussian sample bounds, hierarchical vs plain")
    rb.add_argument("--N", type=int, default=30)
    rb.add_argument("--n", type=int, default=100)
    rb.add_argument("--s", type=int, default=4)
    rb.add_argument("--sigma", type=int, default=20)
    rb.add_argument("--levels", help="uniform tree levels as n0:s0,n1:s1,...")
    rb.add_argument("--delta", type=float, nargs="+", default=[0.5])
    rb.add_argument("--epsilon", type=float, nargs="+", default=[0.1])
    rb.add_argument("--output", help="also write the table as CSV")
    rb.set_defaults(func=cmd_rip_bound)

    re_ = sub.add_parser("rip-estimate", help="RIP constant of a Gaussian A/sqrt(m)")
    re_.add_argument("--N", type=int, required=True)
    re_.add_argument("--n", type=int, required=True)
    re_.add_argument("--s", type=int, required=True)
    re_.add_argument("--sigma", type=int, required=True)
    re_.add_argument("--m", type=int, required=True)
    re_.add_argument("--seed", type=int, default=0)
    re_.add_argument("--trials", type=int, default=0,
                     help="sample this many supports instead of enumerating all")
    re_.add_argument("--cap", type=int, default=ripcalc.DEFAULT_RIP_CAP)
    re_.set_defaults(func=cmd_rip_estimate)

    oc = sub.add_parser("oracle-check", help="fast paths vs exhaustive references")
    oc.add_argument("--cap", type=int, default=12, help="largest vector dimension tested")
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--scale", type=int, default=1, help="multiply the number of cases")
    oc.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    oc.set_defaults(func=cmd_oracle_check)

    de = sub.add_parser("demo", help="recover one random block-sparse signal")
    de.add_argument("--N", type=int, default=30)
    de.add_argument("--n", type=int, default=100)
    de.add_argument("--s", type=int, default=4)
    de.add_argument("--sigma", type=int, default=20)
    de.add_argument("--m", type=int, default=300)
    de.add_argument("--snr", type=float)
    de.add_argument("--seed", type=int, default=0)
    de.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
