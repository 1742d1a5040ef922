"""Command-line interface: ``cautiouscal <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .datagen import gen_true_map, sample_calibration_set, save_map_csv, save_set_csv
from .evaluation import (
    eval_independent_violation,
    eval_outcomes,
    eval_within_map_violation,
)
from .experiment import ExperimentConfig, run_experiment
from .htlb import DEFAULT_MAX_WORK_UNITS, ResourceLimitError, precompute_maxcp_table
from .maps import LowerBoundMap
from .scenario import DEFAULT_L, outcome_sweep
from .stats import SeededRng


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="cautiouscal", description="Cautious calibration lower bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write true maps and calibration sets as CSV")
    g.add_argument("--n-maps", type=int, default=1)
    g.add_argument("--sets-per-map", type=int, default=1)
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--lo", type=float, default=0.9)
    g.add_argument("--hi", type=float, default=1.0)

    t = sub.add_parser("precompute-maxcp", parents=[common], help="build the max-cp null quantile table")
    t.add_argument("--m1", type=int, default=100)
    t.add_argument("--m2", type=int, default=2000)
    t.add_argument("--q", type=float, default=0.99)
    t.add_argument("--n-p", type=int, default=500)
    t.add_argument("--n-seq", type=int, default=20000)
    t.add_argument("--max-work", type=float, default=DEFAULT_MAX_WORK_UNITS)

    r = sub.add_parser("run", parents=[common], help="run a batch experiment")
    r.add_argument("--config", help="INI file with an [experiment] section")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    r.add_argument("--dry-run", action="store_true", help="print work units and exit")

    e = sub.add_parser("eval", parents=[common], help="score dumped map files (index,score,truth,bound)")
    e.add_argument("maps", nargs="+")
    e.add_argument("--l", type=float, default=DEFAULT_L)
    e.add_argument("--percentile", type=float, default=1.0)
    e.add_argument("--eval-skip", type=int, default=0)

    d = sub.add_parser("demo-scenario", parents=[common], help="expected outcome sweep for exact and perturbed c")
    d.add_argument("--l", type=float, nargs="+", default=[DEFAULT_L], help="one or more cost exponents")
    d.add_argument("--delta", type=float, default=0.01)
    d.add_argument("--c-min", type=float, default=0.9)
    d.add_argument("--c-max", type=float, default=0.985)
    d.add_argument("--points", type=int, default=200)
    return parser


def _write_rows(out: str | None, header: list[str], rows) -> None:
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if out:
            fh.close()


def cmd_gen_data(args) -> int:
    seed = args.seed or 0
    out = Path(args.out or "data")
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n_maps):
        truth = gen_true_map(args.n, SeededRng(seed, i).generator(), args.lo, args.hi)
        save_map_csv(out / f"truth_{i:04d}.csv", truth)
        for j in range(args.sets_per_map):
            cal = sample_calibration_set(truth, SeededRng(seed, i * 2**32 + j).generator(), map_id=i)
            save_set_csv(out / f"set_{i:04d}_{j:04d}.csv", cal)
    print(f"wrote {args.n_maps} maps and {args.n_maps * args.sets_per_map} sets to {out}")
    return 0


def cmd_precompute(args) -> int:
    table = precompute_maxcp_table(
        args.m1,
        args.m2,
        args.q,
        n_p=args.n_p,
        n_seq=args.n_seq,
        seed=args.seed or 0,
        threads=args.threads or 1,
        max_work_units=args.max_work,
    )
    out = args.out or f"maxcp_m1{args.m1}_m2{args.m2}_q{args.q:g}.csv"
    table.save(out)
    print(f"wrote {table.n_p}-point table to {out}")
    return 0


def cmd_run(args) -> int:
    overrides = dict(kv.split("=", 1) for kv in args.set)
    if args.seed is not None:
        overrides["base_seed"] = str(args.seed)
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    if args.config:
        config = ExperimentConfig.from_file(args.config, overrides)
    else:
        config = ExperimentConfig.from_strings(overrides)
    result = run_experiment(config, dry_run=args.dry_run)
    print(json.dumps(result, indent=2))
    return 0


def _read_dump(path) -> tuple[LowerBoundMap, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"index", "truth", "bound"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns index,score,truth,bound")
    truth = np.array([float(r["truth"]) for r in rows])
    bounds = np.array([float(r["bound"]) if r["bound"] not in ("", "nan") else math.nan for r in rows])
    defined = np.flatnonzero(~np.isnan(bounds))
    start = int(defined[0]) if defined.size else len(rows)
    return LowerBoundMap(bounds, defined_from=start, method=Path(path).stem), truth


def cmd_eval(args) -> int:
    rng = SeededRng(args.seed or 0, 0).generator()
    out_rows = []
    for path in args.maps:
        lbmap, truth = _read_dump(path)
        p1, mean = eval_outcomes(lbmap, truth, args.l, args.percentile, args.eval_skip)
        out_rows.append(
            [
                path,
                eval_independent_violation(lbmap, truth, rng, args.eval_skip),
                repr(eval_within_map_violation(lbmap, truth, args.eval_skip)),
                repr(p1),
                repr(mean),
            ]
        )
    _write_rows(
        args.out, ["file", "independent_violation", "within_map_violation_pct", "outcome_p1", "outcome_mean"], out_rows
    )
    return 0


def cmd_demo(args) -> int:
    grid = np.linspace(args.c_min, args.c_max, args.points)
    rows = []
    for l in args.l:
        sweep = outcome_sweep(grid, l, args.delta)
        cols = [sweep[k].tolist() for k in ("c", "optimal", "under", "over")]
        rows += [[repr(float(l))] + [repr(v) for v in vals] for vals in zip(*cols)]
    _write_rows(args.out, ["l", "c", "optimal", "under", "over"], rows)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "precompute-maxcp": cmd_precompute,
    "run": cmd_run,
    "eval": cmd_eval,
    "demo-scenario": cmd_demo,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, ResourceLimitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
