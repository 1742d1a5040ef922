"""Batch experiments: truths x calibration sets x method variants -> metrics.

Seeding is positional. Truth ``i`` uses stream ``(base_seed, i)``; set ``j``
of truth ``i`` uses stream ``(base_seed, i * 2**32 + j)`` and its evaluation
draw uses the child stream tagged 1 of that same stream. Output therefore does
not depend on worker count or scheduling.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines
from .datagen import gen_true_map, sample_calibration_set
from .evaluation import (
    eval_outcomes,
    eval_within_map_violation,
    independent_violation_at,
)
from .htlb import HtlbConfig, MaxCpTable, htlb_map
from .maps import LowerBoundMap, apply_postproc
from .stats import SeededRng, cp_lower_bound

log = logging.getLogger(__name__)

METRICS_VERSION = 1
METRICS_COLUMNS = [
    "map_id",
    "set_id",
    "method",
    "postproc",
    "independent_violation",
    "within_map_violation_pct",
    "outcome_p1",
    "outcome_mean",
    "error",
]

# post-processing variants per method; the last entry is the conservative one
METHOD_GRID: dict[str, tuple[str, ...]] = {
    "isocal": ("none", "cut"),
    "logcal": ("none", "cut"),
    "betacal": ("none", "cut"),
    "sva": ("none", "cut", "mono", "cut+mono"),
    "isobins_cp": ("none", "cut", "mono", "cut+mono"),
    "rcir_cp": ("none", "cut", "mono", "cut+mono"),
    "htlb_cp": ("none", "mono"),
    "htlb_maxcp": ("none", "mono"),
}
CONSERVATIVE = {method: variants[-1] for method, variants in METHOD_GRID.items()}
DEFAULT_METHODS = tuple(f"{m}:{p}" for m, variants in METHOD_GRID.items() for p in variants)


def parse_method(text: str) -> tuple[str, str]:
    method, _, postproc = text.strip().partition(":")
    postproc = postproc or "none"
    if method not in METHOD_GRID:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHOD_GRID)}")
    if postproc not in ("none", "cut", "mono", "cut+mono"):
        raise ValueError(f"unknown post-processing {postproc!r} in {text!r}")
    return method, postproc


@dataclass
class ExperimentConfig:
    n_maps: int = 100
    sets_per_map: int = 500
    n: int = 10000
    map_lo: float = 0.9
    map_hi: float = 1.0
    q: float = 0.99
    m: int = 2000
    m1: int = 100
    methods: tuple[str, ...] = DEFAULT_METHODS
    l: float = 2.0
    base_seed: int = 0
    maxcp_table_path: str | None = None
    output_dir: str = "results"
    eval_skip: int | None = None
    threads: int = 1
    smoothing_eps: float = baselines.DEFAULT_SMOOTHING
    rcir_threshold: float = baselines.DEFAULT_RCIR_THRESHOLD
    percentile: float = 1.0
    xi_max: float = 1e6
    dump_maps: int = 0

    def __post_init__(self):
        if isinstance(self.methods, str):
            self.methods = tuple(s for s in self.methods.replace("\n", ",").split(",") if s.strip())
        self.methods = tuple(f"{m}:{p}" for m, p in map(parse_method, self.methods))
        if self.eval_skip is None:
            self.eval_skip = self.m
        for name in ("n_maps", "sets_per_map", "n", "m", "m1", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not (0.0 <= self.map_lo <= self.map_hi <= 1.0):
            raise ValueError("need 0 <= map_lo <= map_hi <= 1")
        if not (0.0 < self.q < 1.0):
            raise ValueError("q must lie in (0, 1)")
        if self.m1 > self.m:
            raise ValueError("m1 must not exceed m")
        if self.m > self.n:
            raise ValueError("window m exceeds n")
        if self.eval_skip < self.m - 1 or self.eval_skip >= self.n:
            raise ValueError(f"eval_skip must lie in [m - 1, n), got {self.eval_skip}")
        if self.l <= 1.0:
            raise ValueError("l must exceed 1")

    @property
    def method_pairs(self) -> list[tuple[str, str]]:
        return [parse_method(s) for s in self.methods]

    @property
    def needs_table(self) -> bool:
        return any(m == "htlb_maxcp" for m, _ in self.method_pairs)

    @property
    def cut_value(self) -> float:
        return cp_lower_bound(self.m, self.m, self.q)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        """Read ``key = value`` pairs from the ``[experiment]`` section of an INI-style file."""
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if not text.lstrip().startswith("["):
            text = "[experiment]\n" + text
        parser.read_string(text)
        raw = dict(parser["experiment"]) if parser.has_section("experiment") else {}
        raw.update(overrides or {})
        return cls.from_strings(raw)

    @classmethod
    def from_strings(cls, raw: dict) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(types[key], value)
        return cls(**kwargs)


def _coerce(type_name, value):
    if not isinstance(value, str):
        return value
    value = value.strip()
    t = str(type_name)
    if "None" in t and value.lower() in ("", "none"):
        return None
    if t.startswith("int"):
        return int(value)
    if t.startswith("float"):
        return float(value)
    return value


def work_units(config: ExperimentConfig) -> dict[str, int]:
    n_sets = config.n_maps * config.sets_per_map
    return {
        "calibration_sets": n_sets,
        "learned_maps": n_sets * len(config.methods),
        "label_draws": n_sets * config.n,
        "htlb_window_ops": n_sets * config.n * config.m,
    }


def _fit_base(method: str, cal, config: ExperimentConfig, table: MaxCpTable | None) -> LowerBoundMap:
    y, z = cal.labels, cal.scores
    if method == "htlb_cp":
        return htlb_map(y, HtlbConfig(config.m, config.q), "sum")
    if method == "htlb_maxcp":
        return htlb_map(y, HtlbConfig(config.m, config.q, config.m1), "maxcp", table)
    if method == "isocal":
        return baselines.isocal_map(y, config.smoothing_eps)
    if method == "logcal":
        return baselines.logcal_map(z, y, config.smoothing_eps)
    if method == "betacal":
        return baselines.betacal_map(z, y)
    if method == "sva":
        return baselines.sva_lower(y, z)
    if method == "isobins_cp":
        return baselines.isobins_cp(y, config.q)
    if method == "rcir_cp":
        return baselines.rcir_cp(y, config.q, config.rcir_threshold)
    raise ValueError(f"unknown method {method!r}")


def _set_stream(i: int, j: int) -> int:
    return i * 2**32 + j


def run_map(i: int, config: ExperimentConfig, table: MaxCpTable | None = None) -> list[dict]:
    """All calibration sets of truth ``i``: one metrics row per (set, method variant)."""
    truth = gen_true_map(config.n, SeededRng(config.base_seed, i).generator(), config.map_lo, config.map_hi)
    pairs = config.method_pairs
    bases = list(dict.fromkeys(m for m, _ in pairs))
    cut_value = config.cut_value
    rows = []
    for j in range(config.sets_per_map):
        stream = SeededRng(config.base_seed, _set_stream(i, j))
        cal = sample_calibration_set(truth, stream.generator(), map_id=i)
        position = int(stream.generator(1).integers(config.eval_skip, config.n))
        fitted: dict[str, LowerBoundMap | Exception] = {}
        for method in bases:
            try:
                fitted[method] = _fit_base(method, cal, config, table)
            except Exception as exc:  # recorded per row, the run continues
                log.warning("map %d set %d: %s failed: %s", i, j, method, exc)
                fitted[method] = exc
        for method, postproc in pairs:
            row = {"map_id": i, "set_id": j, "method": method, "postproc": postproc}
            base = fitted[method]
            if isinstance(base, Exception):
                row.update(
                    independent_violation=math.nan,
                    within_map_violation_pct=math.nan,
                    outcome_p1=math.nan,
                    outcome_mean=math.nan,
                    error=f"{type(base).__name__}: {base}",
                )
                rows.append(row)
                continue
            lbmap = apply_postproc(base, postproc, cut_value)
            p1, mean = eval_outcomes(lbmap, truth, config.l, config.percentile, config.eval_skip, config.xi_max)
            row.update(
                independent_violation=independent_violation_at(lbmap, truth, position),
                within_map_violation_pct=eval_within_map_violation(lbmap, truth, config.eval_skip),
                outcome_p1=p1,
                outcome_mean=mean,
                error="",
            )
            rows.append(row)
            if i * config.sets_per_map + j < config.dump_maps and config.output_dir:
                _dump_map(Path(config.output_dir) / "maps", i, j, cal.scores, truth.probs, lbmap, postproc)
    return rows


def _dump_map(folder: Path, i: int, j: int, scores, truth, lbmap: LowerBoundMap, postproc: str) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    path = folder / f"map{i:04d}_set{j:04d}_{lbmap.method}_{postproc.replace('+', '-')}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "score", "truth", "bound"])
        for k, (z, c, b) in enumerate(zip(scores, truth, lbmap.bounds)):
            writer.writerow([k, repr(float(z)), repr(float(c)), "" if math.isnan(b) else repr(float(b))])


def _run_map_task(args):
    return run_map(*args)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# cautiouscal metrics v{METRICS_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in METRICS_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for r in csv.DictReader(lines):
        for key in ("map_id", "set_id"):
            r[key] = int(r[key])
        for key in ("independent_violation", "within_map_violation_pct", "outcome_p1", "outcome_mean"):
            r[key] = float(r[key])
        rows.append(r)
    return rows


def summarize(rows: list[dict]) -> dict[str, dict]:
    """Per ``method:postproc`` aggregates over all learned maps."""
    groups: dict[str, list[dict]] = {}
    for r in rows:
        groups.setdefault(f"{r['method']}:{r['postproc']}", []).append(r)
    out = {}
    for key, rs in groups.items():
        ok = [r for r in rs if not r["error"]]
        iv = np.array([r["independent_violation"] for r in ok], dtype=float)
        wm = np.array([r["within_map_violation_pct"] for r in ok], dtype=float)
        p1 = np.array([r["outcome_p1"] for r in ok], dtype=float)
        mean = np.array([r["outcome_mean"] for r in ok], dtype=float)
        stats = {"n_maps": len(rs), "n_errors": len(rs) - len(ok)}
        if ok:
            stats.update(
                independent_violation_pct=100.0 * float(iv.mean()),
                within_map_zero_fraction=float(np.mean(wm == 0.0)),
                within_map_mean_pct=float(wm.mean()),
                within_map_median_pct=float(np.median(wm)),
                within_map_max_pct=float(wm.max()),
                outcome_p1_nonneg_fraction=float(np.mean(p1 >= 0.0)),
                outcome_p1_min=float(p1.min()),
                outcome_p1_median=float(np.median(p1)),
                outcome_mean_mean=float(mean.mean()),
                outcome_mean_median=float(np.median(mean)),
            )
        out[key] = stats
    return out


def run_experiment(config: ExperimentConfig, dry_run: bool = False) -> dict:
    """Run every (truth, set, method variant) cell and write ``metrics.csv`` and ``summary.json``.

    Returns a dict with the output paths (or, for ``dry_run``, the work-unit estimate).
    """
    units = work_units(config)
    if dry_run:
        return {"dry_run": True, "work_units": units, "config": config.to_dict()}
    table = None
    if config.needs_table:
        if not config.maxcp_table_path:
            raise ValueError("htlb_maxcp requested but maxcp_table_path is not set")
        table = MaxCpTable.load(config.maxcp_table_path, config.m1, config.m, config.q)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(i, config, table) for i in range(config.n_maps)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(_run_map_task, tasks))
    else:
        chunks = [_run_map_task(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["map_id"], r["set_id"], r["method"], r["postproc"]))
    metrics_path = out_dir / "metrics.csv"
    metrics_path.write_text(metrics_csv_text(rows), encoding="utf-8")
    summary = {
        "metrics_version": METRICS_VERSION,
        "config": config.to_dict(),
        "work_units": units,
        "conservative": {m: CONSERVATIVE[m] for m in dict.fromkeys(m for m, _ in config.method_pairs)},
        "methods": summarize(rows),
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"metrics": str(metrics_path), "summary": str(summary_path), "rows": len(rows)}


def conservative_key(method: str) -> str:
    return f"{method}:{CONSERVATIVE[method]}"
