"""Synthetic ground truth and calibration sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stats import PROB_TOL, check_probability, sample_hbernoulli


@dataclass
class TrueCalibrationMap:
    """Monotone vector of true calibrated probabilities over ordered scores."""

    probs: np.ndarray
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.lo = check_probability(self.lo, "lo")
        self.hi = check_probability(self.hi, "hi")
        if self.probs.ndim != 1 or self.probs.size == 0:
            raise ValueError("probs must be a non-empty 1-D vector")
        if np.any(np.diff(self.probs) < 0):
            raise ValueError("probs must be monotone non-decreasing")
        if self.probs[0] < self.lo - PROB_TOL or self.probs[-1] > self.hi + PROB_TOL:
            raise ValueError("probs must lie within [lo, hi]")

    def __len__(self) -> int:
        return self.probs.size


@dataclass
class CalibrationSet:
    scores: np.ndarray
    labels: np.ndarray
    map_id: int | None = field(default=None)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError("scores and labels must be 1-D vectors of equal length")
        if np.any(np.diff(self.scores) < 0):
            raise ValueError("scores must be sorted non-decreasing")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be binary")

    def __len__(self) -> int:
        return self.labels.size


def gen_true_map(n: int, rng: np.random.Generator, lo: float = 0.9, hi: float = 1.0) -> TrueCalibrationMap:
    """Random monotone map by recursive splitting.

    A position ``k`` is drawn uniformly from the current index range and given
    a value uniform in the current ``[lo, hi]``; the range right of ``k`` is
    then filled within ``[v, hi]`` and the range left of it within ``[lo, v]``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    lo = check_probability(lo, "lo")
    hi = check_probability(hi, "hi")
    if lo > hi:
        raise ValueError(f"lo must not exceed hi (lo={lo}, hi={hi})")
    probs = np.empty(n)
    # explicit stack of (start, stop, lo, hi); right half is pushed last so it is filled first
    stack = [(0, n, lo, hi)]
    while stack:
        start, stop, a, b = stack.pop()
        if start >= stop:
            continue
        if a == b:
            probs[start:stop] = a
            continue
        k = int(rng.integers(start, stop))
        v = float(rng.uniform(a, b))
        probs[k] = v
        stack.append((start, k, a, v))
        stack.append((k + 1, stop, v, b))
    return TrueCalibrationMap(probs, lo, hi)


def synthetic_scores(n: int) -> np.ndarray:
    """Evenly spaced scores ``i / (n + 1)`` for ``i = 1..n``."""
    return np.arange(1, n + 1) / (n + 1.0)


def sample_calibration_set(
    truth: TrueCalibrationMap, rng: np.random.Generator, map_id: int | None = None
) -> CalibrationSet:
    labels = sample_hbernoulli(truth.probs, rng)
    return CalibrationSet(synthetic_scores(len(truth)), labels, map_id)


def save_map_csv(path, truth: TrueCalibrationMap) -> None:
    scores = synthetic_scores(len(truth))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "score", "true_prob"])
        for i, (z, c) in enumerate(zip(scores, truth.probs)):
            writer.writerow([i, repr(float(z)), repr(float(c))])


def load_map_csv(path, lo: float = 0.0, hi: float = 1.0) -> TrueCalibrationMap:
    rows = _read_rows(path, "true_prob")
    return TrueCalibrationMap(np.array([float(r["true_prob"]) for r in rows]), lo, hi)


def save_set_csv(path, cal: CalibrationSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "score", "label"])
        for i, (z, y) in enumerate(zip(cal.scores, cal.labels)):
            writer.writerow([i, repr(float(z)), int(y)])


def load_set_csv(path, map_id: int | None = None) -> CalibrationSet:
    rows = _read_rows(path, "label")
    scores = np.array([float(r["score"]) for r in rows])
    labels = np.array([int(r["label"]) for r in rows])
    return CalibrationSet(scores, labels, map_id)


def _read_rows(path, column: str) -> list[dict]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or column not in rows[0]:
        raise ValueError(f"{path}: expected a header with column {column!r}")
    rows.sort(key=lambda r: int(r["index"]))
    return rows
