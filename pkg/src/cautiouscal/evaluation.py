"""Metrics comparing a learned lower-bound map with the known truth.

Only positions ``>= eval_skip`` (0-based) are eligible, so every method is
scored on the same region.
"""

from __future__ import annotations

import numpy as np

from .maps import LowerBoundMap
from .scenario import DEFAULT_XI_MAX, expected_outcome, risk_levels


def _eligible(lbmap: LowerBoundMap, truth, eval_skip: int) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(getattr(truth, "probs", truth), dtype=float)
    if c.shape != lbmap.bounds.shape:
        raise ValueError("map and truth lengths differ")
    start = max(eval_skip, lbmap.defined_from)
    if start >= c.size:
        raise ValueError("no eligible positions to evaluate")
    return lbmap.bounds[start:], c[start:]


def eval_independent_violation(lbmap: LowerBoundMap, truth, rng: np.random.Generator, eval_skip: int = 0) -> int:
    """1 if the bound at one uniformly drawn eligible position exceeds the truth."""
    est, c = _eligible(lbmap, truth, eval_skip)
    k = int(rng.integers(est.size))
    return int(est[k] > c[k])


def independent_violation_at(lbmap: LowerBoundMap, truth, position: int) -> int:
    """Violation indicator at a fixed (already drawn) 0-based position."""
    c = np.asarray(getattr(truth, "probs", truth), dtype=float)
    if position < lbmap.defined_from:
        raise ValueError("position lies in the undefined prefix")
    return int(lbmap.bounds[position] > c[position])


def eval_within_map_violation(lbmap: LowerBoundMap, truth, eval_skip: int = 0) -> float:
    """Percentage of eligible positions whose bound exceeds the truth."""
    est, c = _eligible(lbmap, truth, eval_skip)
    return 100.0 * float(np.mean(est > c))


def eval_outcomes(
    lbmap: LowerBoundMap,
    truth,
    l: float,
    percentile: float = 1.0,
    eval_skip: int = 0,
    xi_max: float = DEFAULT_XI_MAX,
) -> tuple[float, float]:
    """Percentile (linear interpolation) and mean of expected outcomes over eligible positions."""
    est, c = _eligible(lbmap, truth, eval_skip)
    out = expected_outcome(c, risk_levels(est, l, xi_max), l)
    return float(np.percentile(out, percentile)), float(np.mean(out))
