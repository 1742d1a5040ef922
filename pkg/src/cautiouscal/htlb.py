"""Hypothesis-testing lower bounds on left label windows.

Each position ``k`` receives a lower bound computed only from the labels in a
window ending at ``k``. Two test statistics are provided: the window sum
(bounds are exact Clopper-Pearson quantiles) and the max-cp statistic (the
largest Clopper-Pearson bound over all suffix windows of lengths ``m1..m2``),
whose null distribution is tabulated by simulation.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .maps import LowerBoundMap
from .stats import SeededRng, cp_bound_grid, cp_lower_bound

TABLE_FORMAT_VERSION = 1
DEFAULT_MAX_WORK_UNITS = 5 * 10**10
_CHUNK_SEQ = 1000


class TableMismatchError(ValueError):
    """A max-cp table does not match the configuration requesting it."""


class ResourceLimitError(RuntimeError):
    """Requested precomputation exceeds the configured work ceiling."""


@dataclass(frozen=True)
class HtlbConfig:
    """Window configuration.

    ``m`` is the window length (the longest window for max-cp); ``m1`` is the
    shortest suffix window considered by max-cp and is ignored by the sum
    statistic.
    """

    m: int
    q: float
    m1: int | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"window length must be >= 1, got {self.m}")
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"q must lie in (0, 1), got {self.q!r}")
        if self.m1 is not None and not (1 <= self.m1 <= self.m):
            raise ValueError(f"need 1 <= m1 <= m, got m1={self.m1}, m={self.m}")

    @property
    def m2(self) -> int:
        return self.m

    @property
    def max_bound(self) -> float:
        """Largest bound either statistic can return (an all-ones window)."""
        return cp_lower_bound(self.m, self.m, self.q)


def sum_statistic(v) -> int:
    v = np.asarray(v)
    if v.size == 0:
        raise ValueError("empty vector")
    return int(v.sum())


def maxcp_statistic(v, m1: int, q: float) -> float | np.ndarray:
    """Largest Clopper-Pearson bound over the suffix windows of ``v``.

    Parameters
    ----------
    v : array_like
        Binary vector of length ``m2``, or a 2-D batch with one vector per row.
    m1 : int
        Shortest suffix window; windows of length ``m1..m2`` are scanned.
    q : float
        Confidence level of the per-window bounds.

    Returns
    -------
    float or ndarray
        Scalar for a 1-D input, one value per row for a batch.
    """
    v = np.asarray(v)
    m2 = v.shape[-1]
    if not (1 <= m1 <= m2):
        raise ValueError(f"vector length {m2} incompatible with m1={m1}")
    grid = cp_bound_grid(int(m1), int(m2), float(q))
    suffix = np.cumsum(v[..., ::-1], axis=-1, dtype=np.int32)
    js = np.arange(m1, m2 + 1)
    vals = grid[js, suffix[..., js - 1]]
    out = vals.max(axis=-1)
    return float(out) if v.ndim == 1 else out


def bit_flip(v, k: int) -> np.ndarray:
    """Copy of ``v`` with (0-based) position ``k`` set to 1."""
    v = np.array(v, copy=True)
    if not (0 <= k < v.shape[-1]):
        raise IndexError(f"position {k} out of range for length {v.shape[-1]}")
    v[..., k] = 1
    return v


@dataclass
class MaxCpTable:
    """Empirical ``q``-quantiles of the max-cp statistic under homogeneous nulls."""

    m1: int
    m2: int
    q: float
    p_grid: np.ndarray
    quantile_stat: np.ndarray
    n_seq: int
    seed: int = 0
    format_version: int = TABLE_FORMAT_VERSION

    def __post_init__(self):
        self.p_grid = np.asarray(self.p_grid, dtype=float)
        self.quantile_stat = np.asarray(self.quantile_stat, dtype=float)
        if self.p_grid.shape != self.quantile_stat.shape or self.p_grid.ndim != 1 or self.p_grid.size == 0:
            raise ValueError("p_grid and quantile_stat must be non-empty vectors of equal length")
        if np.any(np.diff(self.p_grid) <= 0) or self.p_grid[0] <= 0 or self.p_grid[-1] >= 1:
            raise ValueError("p_grid must be strictly increasing inside (0, 1)")
        if np.any(np.diff(self.quantile_stat) < 0):
            raise ValueError("quantile_stat must be non-decreasing")

    @property
    def n_p(self) -> int:
        return self.p_grid.size

    def check_compatible(self, m1: int, m2: int, q: float) -> None:
        if (self.m1, self.m2) != (m1, m2) or not math.isclose(self.q, q, rel_tol=0, abs_tol=1e-15):
            raise TableMismatchError(
                f"table built for m1={self.m1}, m2={self.m2}, q={self.q}; requested m1={m1}, m2={m2}, q={q}"
            )

    def header(self) -> str:
        return (
            f"maxcp-table v{self.format_version}; m1={self.m1}; m2={self.m2}; q={self.q!r}; "
            f"n_p={self.n_p}; n_seq={self.n_seq}; seed={self.seed}"
        )

    def save(self, path) -> None:
        lines = [self.header(), "p,quantile_stat"]
        lines += [f"{p:.17g},{s:.17g}" for p, s in zip(self.p_grid, self.quantile_stat)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, m1: int | None = None, m2: int | None = None, q: float | None = None) -> "MaxCpTable":
        """Read a table file; when ``m1``/``m2``/``q`` are given they must match the header."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("maxcp-table v"):
            raise ValueError(f"{path}: not a max-cp table file")
        fields = [f.strip() for f in lines[0].split(";")]
        version = int(fields[0].removeprefix("maxcp-table v"))
        if version != TABLE_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported table version {version}")
        meta = dict(f.split("=", 1) for f in fields[1:])
        rows = [ln.split(",") for ln in lines[1:] if ln and not ln.startswith("p,")]
        table = cls(
            m1=int(meta["m1"]),
            m2=int(meta["m2"]),
            q=float(meta["q"]),
            p_grid=np.array([float(r[0]) for r in rows]),
            quantile_stat=np.array([float(r[1]) for r in rows]),
            n_seq=int(meta["n_seq"]),
            seed=int(meta["seed"]),
            format_version=version,
        )
        if table.n_p != int(meta["n_p"]):
            raise ValueError(f"{path}: header says n_p={meta['n_p']} but {table.n_p} rows were read")
        if m1 is not None or m2 is not None or q is not None:
            table.check_compatible(
                table.m1 if m1 is None else m1, table.m2 if m2 is None else m2, table.q if q is None else q
            )
        return table


def lookup_lower_bound(table: MaxCpTable, stat):
    """Map max-cp statistic values to lower bounds.

    The largest tabulated quantile not exceeding ``stat`` is located and the
    smallest grid ``p`` attaining that quantile is returned. Statistics below
    every tabulated quantile, and non-positive statistics (all-zero windows),
    map to 0.
    """
    stat_arr = np.asarray(stat, dtype=float)
    qs = table.quantile_stat
    idx = np.searchsorted(qs, stat_arr, side="right") - 1
    found = idx >= 0
    s_star = qs[np.clip(idx, 0, None)]
    first = np.searchsorted(qs, s_star, side="left")
    out = np.where(found & (stat_arr > 0), table.p_grid[first], 0.0)
    return float(out) if out.ndim == 0 else out


def empirical_quantile(values: np.ndarray, q: float) -> float:
    """Order statistic at rank ``ceil(q * N)`` (1-based)."""
    n = values.size
    rank = min(max(math.ceil(round(q * n, 9)), 1), n)
    return float(np.partition(values, rank - 1)[rank - 1])


def maxcp_null_quantile(p: float, m1: int, m2: int, q: float, n_seq: int, rng: np.random.Generator) -> float:
    """Empirical ``q``-quantile of the max-cp statistic for iid Bernoulli(p) windows."""
    stats = np.empty(n_seq)
    done = 0
    while done < n_seq:
        size = min(_CHUNK_SEQ, n_seq - done)
        batch = rng.random((size, m2), dtype=np.float32) < p
        stats[done : done + size] = maxcp_statistic(batch.view(np.int8), m1, q)
        done += size
    return empirical_quantile(stats, q)


def _null_quantile_task(args) -> float:
    i, p, m1, m2, q, n_seq, seed = args
    return maxcp_null_quantile(p, m1, m2, q, n_seq, SeededRng(seed, i).generator())


def precompute_maxcp_table(
    m1: int,
    m2: int,
    q: float,
    n_p: int = 500,
    n_seq: int = 20000,
    seed: int = 0,
    threads: int = 1,
    max_work_units: int = DEFAULT_MAX_WORK_UNITS,
) -> MaxCpTable:
    """Simulate the max-cp null on an evenly spaced grid ``p_i = i / (n_p + 1)``.

    Grid point ``i`` draws from its own stream ``(seed, i)``, so the table does
    not depend on ``threads``. The quantile sequence is rectified with a
    running maximum over increasing ``p``.
    """
    HtlbConfig(m2, q, m1)
    if n_p < 1 or n_seq < 1:
        raise ValueError("n_p and n_seq must be positive")
    work = n_p * n_seq * m2
    if work > max_work_units:
        raise ResourceLimitError(
            f"{work:.3g} work units exceed the ceiling {max_work_units:.3g}; shard the grid or raise the limit"
        )
    p_grid = np.arange(1, n_p + 1) / (n_p + 1.0)
    tasks = [(i, float(p), m1, m2, float(q), n_seq, seed) for i, p in enumerate(p_grid)]
    if threads > 1:
        cp_bound_grid(m1, m2, float(q))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_null_quantile_task, tasks, chunksize=max(1, n_p // (4 * threads))))
    else:
        raw = [_null_quantile_task(t) for t in tasks]
    rectified = np.maximum.accumulate(np.asarray(raw))
    return MaxCpTable(m1, m2, float(q), p_grid, rectified, n_seq, seed)


def _window_sums(labels: np.ndarray, j: int, first_end: int) -> np.ndarray:
    # sums of labels[e-j+1..e] for 0-based ends e = first_end..n-1
    csum = np.concatenate(([0], np.cumsum(labels, dtype=np.int64)))
    n = labels.size
    return csum[first_end + 1 : n + 1] - csum[first_end + 1 - j : n + 1 - j]


def htlb_map(labels, config: HtlbConfig, statistic: str = "sum", table: MaxCpTable | None = None) -> LowerBoundMap:
    """Lower bound at every position from the window of ``config.m`` labels ending there.

    Positions before the first full window are undefined.

    Examples
    --------
    >>> htlb_map([1, 1, 1], HtlbConfig(m=2, q=0.99)).bounds.round(6)
    array([   nan, 0.1  , 0.1  ])
    """
    labels = np.asarray(labels)
    n, m = labels.size, config.m
    if n < m:
        raise ValueError(f"window length {m} exceeds data length {n}")
    bounds = np.full(n, np.nan)
    if statistic == "sum":
        sums = _window_sums(labels, m, m - 1)
        uniq, inverse = np.unique(sums, return_inverse=True)
        vals = np.array([cp_lower_bound(int(t), m, config.q) for t in uniq])
        bounds[m - 1 :] = vals[inverse]
        method = "htlb_cp"
    elif statistic == "maxcp":
        if config.m1 is None:
            raise ValueError("max-cp statistic needs m1 in the configuration")
        if table is None:
            raise TableMismatchError("max-cp statistic needs a precomputed MaxCpTable")
        table.check_compatible(config.m1, config.m2, config.q)
        bounds[m - 1 :] = lookup_lower_bound(table, htlb_maxcp_statistics(labels, config.m1, m, config.q))
        method = "htlb_maxcp"
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    snapshot = {"m": m, "q": config.q, "m1": config.m1, "statistic": statistic, "max_bound": config.max_bound}
    return LowerBoundMap(bounds, m - 1, method, snapshot)


def htlb_maxcp_statistics(labels: np.ndarray, m1: int, m2: int, q: float) -> np.ndarray:
    """Max-cp statistic of every length-``m2`` window, for windows ending at ``m2-1..n-1``."""
    grid = cp_bound_grid(int(m1), int(m2), float(q))
    csum = np.concatenate(([0], np.cumsum(labels, dtype=np.int64)))
    n = labels.size
    ends = csum[m2 : n + 1]
    best = np.zeros(n - m2 + 1)
    for j in range(m1, m2 + 1):
        np.maximum(best, grid[j, ends - csum[m2 - j : n + 1 - j]], out=best)
    return best
