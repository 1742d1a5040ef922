"""Optimal risk-level selection under an asymmetric outcome.

Choosing risk ``xi`` pays ``xi`` on a positive and costs ``xi**l`` on a
negative, so the expected outcome under ``Y ~ Bernoulli(c)`` is
``xi * c - xi**l * (1 - c)``.
"""

from __future__ import annotations

import numpy as np

DEFAULT_L = 2.0
DEFAULT_XI_MAX = 1e6


def outcome(y: int, xi: float, l: float) -> float:
    if xi < 0:
        raise ValueError(f"risk level must be non-negative, got {xi!r}")
    return float(xi) if y == 1 else -(float(xi) ** l)


def optimal_risk(c: float, l: float) -> float:
    """Risk level maximising the expected outcome, ``(c / (l (1 - c)))**(1 / (l - 1))``."""
    if not (0.0 <= c < 1.0):
        raise ValueError(f"c must lie in [0, 1), got {c!r}")
    if l <= 1.0:
        raise ValueError(f"l must exceed 1, got {l!r}")
    if c == 0.0:
        return 0.0
    return (c / (l * (1.0 - c))) ** (1.0 / (l - 1.0))


def expected_outcome(c_true, xi, l: float):
    c_true = np.asarray(c_true, dtype=float)
    xi = np.asarray(xi, dtype=float)
    out = xi * c_true - xi**l * (1.0 - c_true)
    return float(out) if out.ndim == 0 else out


def risk_levels(c_hat, l: float, xi_max: float = DEFAULT_XI_MAX) -> np.ndarray:
    """Vectorised :func:`optimal_risk`, capped at ``xi_max`` (estimates of 1 map to the cap)."""
    if l <= 1.0:
        raise ValueError(f"l must exceed 1, got {l!r}")
    c = np.clip(np.asarray(c_hat, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        ratio = np.where(c < 1.0, c / (l * (1.0 - c)), np.inf)
    return np.minimum(ratio ** (1.0 / (l - 1.0)), xi_max)


def outcome_sweep(c_grid, l: float = DEFAULT_L, delta: float = 0.01) -> dict[str, np.ndarray]:
    """Expected outcomes when risk is chosen from ``c``, ``c - delta`` and ``c + delta``."""
    c = np.asarray(c_grid, dtype=float)
    return {
        "c": c,
        "optimal": expected_outcome(c, risk_levels(c, l), l),
        "under": expected_outcome(c, risk_levels(c - delta, l), l),
        "over": expected_outcome(c, risk_levels(c + delta, l), l),
    }
