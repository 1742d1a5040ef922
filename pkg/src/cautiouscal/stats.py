"""Exact distributional primitives.

Regularized incomplete beta and its inverse, binomial tails, the one-sided
Clopper-Pearson lower bound and seeded Bernoulli sampling. The scalar routines
are self-contained (continued fraction plus safeguarded Newton); the bulk
table used by the max-cp statistic is vectorized through ``scipy.special``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

PROB_TOL = 1e-12

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXIT = 20000
_QUANTILE_MAXIT = 200


class ConvergenceError(ArithmeticError):
    """An iterative numerical routine did not reach its tolerance."""


def check_probability(x: float, name: str = "probability") -> float:
    """Validate ``x`` as a probability, clamping round-off beyond [0, 1]."""
    x = float(x)
    if not (-PROB_TOL <= x <= 1.0 + PROB_TOL):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")
    return min(max(x, 0.0), 1.0)


@dataclass(frozen=True)
class SeededRng:
    """Addressable random stream: ``(seed, stream)`` fixes the sequence.

    Backed by the counter-based Philox generator keyed through
    :class:`numpy.random.SeedSequence`, so any task can rebuild its own stream
    without coordinating with other workers.
    """

    seed: int
    stream: int = 0

    def generator(self, *tags: int) -> np.random.Generator:
        key = (int(self.stream),) + tuple(int(t) for t in tags)
        ss = np.random.SeedSequence(int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_STIRLING_MIN = 10.0


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _stirling_corr(z: float) -> float:
    # lgamma(z) - [(z - 1/2) ln z - z + ln(2 pi)/2], valid for z >= 10
    z2 = 1.0 / (z * z)
    return (
        1.0 / 12.0
        - z2 * (1.0 / 360.0 - z2 * (1.0 / 1260.0 - z2 * (1.0 / 1680.0 - z2 * (1.0 / 1188.0 - z2 * 691.0 / 360360.0))))
    ) / z


def _log_beta_front(x: float, a: float, b: float) -> float:
    """``log(x**a * (1 - x)**b / B(a, b))`` without lgamma cancellation."""
    y = 1.0 - x
    small, large = min(a, b), max(a, b)
    if large < _STIRLING_MIN:
        return a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    s = a + b
    if small >= _STIRLING_MIN:
        # 1 + e/a == x s / a and 1 - e/b == y s / b; use whichever form is exact
        e = x * b - y * a
        ra, rb = x * s / a, y * s / b
        return (
            a * (math.log(ra) if ra < 0.5 else math.log1p(e / a))
            + b * (math.log(rb) if rb < 0.5 else math.log1p(-e / b))
            + 0.5 * math.log(a * b / s)
            - _HALF_LOG_2PI
            + _stirling_corr(s)
            - _stirling_corr(a)
            - _stirling_corr(b)
        )
    # one shape large, one small: only lgamma(large + small) - lgamma(large) is expanded
    log_small_x = math.log(x) if a == small else math.log1p(-x)
    log_large_x = math.log1p(-x) if a == small else math.log(x)
    return (
        large * log_large_x
        + small * log_small_x
        + (large - 0.5) * math.log1p(small / large)
        + small * math.log(s)
        - small
        - math.lgamma(small)
        + _stirling_corr(s)
        - _stirling_corr(large)
    )


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ConvergenceError(f"continued fraction did not converge for a={a}, b={b}, x={x}")


def _check_shape(a: float, b: float) -> None:
    if not (a > 0 and b > 0) or math.isinf(a) or math.isinf(b):
        raise ValueError(f"beta shape parameters must be positive and finite, got a={a!r}, b={b!r}")


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function :math:`I_x(a, b)`.

    Parameters
    ----------
    x : float
        Evaluation point in [0, 1].
    a, b : float
        Positive shape parameters.

    Returns
    -------
    float
        The Beta(a, b) CDF at ``x``.
    """
    _check_shape(a, b)
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = _log_beta_front(x, a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        val = math.exp(log_front) * _betacf(a, b, x) / a
    else:
        val = 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b
    return min(max(val, 0.0), 1.0)


def _beta_log_pdf(x: float, a: float, b: float) -> float:
    return _log_beta_front(x, a, b) - math.log(x) - math.log1p(-x)


def _bracket_mid(lo: float, hi: float) -> float:
    # geometric midpoints near the ends reach extreme tails in few steps
    if hi <= 0.5:
        return math.sqrt(max(lo, 1e-300) * hi)
    if lo >= 0.5:
        return 1.0 - math.sqrt(max(1.0 - hi, 1e-16) * (1.0 - lo))
    return 0.5 * (lo + hi)


def beta_quantile(prob: float, a: float, b: float) -> float:
    """Inverse of :func:`reg_inc_beta` in its first argument.

    Bisection on [0, 1] with Newton steps accepted only when they stay inside
    the current bracket.
    """
    _check_shape(a, b)
    if not (0.0 <= prob <= 1.0):
        raise ValueError(f"prob must lie in [0, 1], got {prob!r}")
    if prob == 0.0:
        return 0.0
    if prob == 1.0:
        return 1.0
    lo, hi = 0.0, 1.0
    x = a / (a + b)
    for _ in range(_QUANTILE_MAXIT):
        f = reg_inc_beta(x, a, b) - prob
        if abs(f) <= 1e-13:
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        if hi - lo <= 4 * math.ulp(hi):
            return x
        step_ok = False
        logpdf = _beta_log_pdf(x, a, b) if 0.0 < x < 1.0 else -math.inf
        if logpdf > -700.0:
            newton = x - f / math.exp(logpdf)
            if lo < newton < hi:
                x_new = newton
                step_ok = True
        if not step_ok:
            x_new = _bracket_mid(lo, hi)
        x = x_new
    raise ConvergenceError(f"beta_quantile did not converge for prob={prob}, a={a}, b={b}")


def binomial_cdf(k: int, m: int, p: float) -> float:
    """``Pr(Bin(m, p) <= k)`` through the incomplete beta identity."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    p = check_probability(p, "p")
    if k < 0:
        return 0.0
    if k >= m:
        return 1.0
    return reg_inc_beta(1.0 - p, m - k, k + 1)


@lru_cache(maxsize=1 << 16)
def _cp_lower_bound_cached(t: int, m: int, q: float) -> float:
    return beta_quantile(1.0 - q, t, m - t + 1)


def cp_lower_bound(t: int, m: int, q: float) -> float:
    """One-sided Clopper-Pearson lower bound for ``t`` ones out of ``m``.

    This is the largest ``p`` with ``Pr(Bin(m, p) <= t - 1) >= q``, i.e. the
    ``1 - q`` quantile of Beta(t, m - t + 1). Zero ones give the vacuous
    bound 0.

    Examples
    --------
    >>> round(cp_lower_bound(2000, 2000, 0.99), 6)
    0.9977
    """
    t, m = int(t), int(m)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not (0 <= t <= m):
        raise ValueError(f"t must lie in [0, m={m}], got {t}")
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie in (0, 1), got {q!r}")
    if t == 0:
        return 0.0
    return _cp_lower_bound_cached(t, m, float(q))


@lru_cache(maxsize=4)
def cp_bound_grid(m1: int, m2: int, q: float) -> np.ndarray:
    """Table ``G[j, t] = cp_lower_bound(t, j, q)`` for ``m1 <= j <= m2``.

    Rows below ``m1`` and cells with ``t > j`` are left at zero. The array is
    read-only and shared between callers.
    """
    if not (1 <= m1 <= m2):
        raise ValueError(f"need 1 <= m1 <= m2, got m1={m1}, m2={m2}")
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie in (0, 1), got {q!r}")
    grid = np.zeros((m2 + 1, m2 + 1))
    for j in range(m1, m2 + 1):
        t = np.arange(1, j + 1, dtype=float)
        grid[j, 1 : j + 1] = special.betaincinv(t, j - t + 1.0, 1.0 - q)
    grid.setflags(write=False)
    return grid


def sample_hbernoulli(p_vec, rng: np.random.Generator) -> np.ndarray:
    """Draw independent ``Bernoulli(p_i)`` labels as an int8 vector."""
    p = np.asarray(p_vec, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("p_vec must be a non-empty 1-D vector")
    if np.any(p < -PROB_TOL) or np.any(p > 1 + PROB_TOL):
        raise ValueError("p_vec entries must lie in [0, 1]")
    return (rng.random(p.size) < p).astype(np.int8)
