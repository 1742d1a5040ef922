"""Classical calibrators and cautious baselines built from them.

Classical: isotonic (PAVA), logistic and beta calibration. Repurposed for
cautious calibration: the label-0 branch of simplified Venn-Abers (SVA),
isotonic bins with Clopper-Pearson bounds, and RCIR-merged bins with
Clopper-Pearson bounds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .maps import LowerBoundMap
from .stats import ConvergenceError, beta_quantile, cp_lower_bound

# small enough that smoothed isocal/logcal stay close to their unsmoothed fits
DEFAULT_SMOOTHING = 0.001
DEFAULT_RCIR_THRESHOLD = 0.05
SCORE_CLIP = 1e-9


@dataclass
class IsotonicFit:
    """Level sets of a monotone least-squares fit.

    Block ``b`` covers positions ``starts[b]:stops[b]`` and carries the total
    weight ``weights[b]`` and weighted label sum ``sums[b]``.
    """

    starts: np.ndarray
    stops: np.ndarray
    sums: np.ndarray
    weights: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.sums / self.weights

    @property
    def sizes(self) -> np.ndarray:
        return self.stops - self.starts

    def per_position(self) -> np.ndarray:
        return np.repeat(self.values, self.sizes)


def pava_isotonic(labels, weights=None) -> IsotonicFit:
    """Weighted isotonic (non-decreasing) least-squares fit by pool-adjacent-violators.

    Adjacent blocks with equal means are pooled too, so block values are
    strictly increasing.
    """
    y = np.asarray(labels, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("labels must be a non-empty 1-D vector")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape:
        raise ValueError("weights must match labels")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    starts, sums, wts = [], [], []
    for i, (yi, wi) in enumerate(zip(y.tolist(), w.tolist())):
        s, ww, st = yi * wi, wi, i
        while sums and sums[-1] * ww >= s * wts[-1]:
            s += sums.pop()
            ww += wts.pop()
            st = starts.pop()
        starts.append(st)
        sums.append(s)
        wts.append(ww)
    starts_arr = np.array(starts, dtype=np.int64)
    stops = np.append(starts_arr[1:], y.size)
    return IsotonicFit(starts_arr, stops, np.array(sums), np.array(wts))


def label_smooth(labels, eps: float = DEFAULT_SMOOTHING) -> np.ndarray:
    if not (0.0 <= eps < 1.0):
        raise ValueError(f"eps must lie in [0, 1), got {eps!r}")
    return np.asarray(labels, dtype=float) * (1.0 - eps) + eps / 2.0


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _fit_logistic(features: np.ndarray, targets: np.ndarray, max_iter: int = 500, tol: float = 1e-8) -> np.ndarray:
    """Damped Newton maximisation of the mean Bernoulli log-likelihood.

    ``features`` already contains the intercept column; ``targets`` may be soft.
    """
    n, d = features.shape
    coef = np.zeros(d)

    def nll(c):
        z = features @ c
        # log(1 + e^z) - y z, evaluated stably
        return float(np.mean(np.logaddexp(0.0, z) - targets * z))

    current = nll(coef)
    for _ in range(max_iter):
        mu = _sigmoid(features @ coef)
        grad = features.T @ (mu - targets) / n
        if np.linalg.norm(grad) <= tol:
            return coef
        hess = (features * (mu * (1.0 - mu))[:, None]).T @ features / n
        hess += 1e-12 * np.eye(d)
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        while scale > 1e-10:
            trial = coef - scale * step
            val = nll(trial)
            if val <= current:
                break
            scale *= 0.5
        else:
            break
        coef, current = trial, val
    mu = _sigmoid(features @ coef)
    grad = features.T @ (mu - targets) / n
    if np.linalg.norm(grad) <= tol:
        return coef
    raise ConvergenceError(f"logistic fit stopped with gradient norm {np.linalg.norm(grad):.3g}")


@dataclass(frozen=True)
class SigmoidParams:
    slope: float
    intercept: float


def platt_fit(scores, soft_labels) -> SigmoidParams:
    """Logistic calibration: maximum-likelihood sigmoid on the raw scores."""
    z = np.asarray(scores, dtype=float)
    y = np.asarray(soft_labels, dtype=float)
    if np.unique(z).size < 2:
        raise ValueError("need at least two distinct scores")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("labels must lie in [0, 1]")
    coef = _fit_logistic(np.column_stack([z, np.ones_like(z)]), y)
    return SigmoidParams(float(coef[0]), float(coef[1]))


def platt_predict(params: SigmoidParams, z):
    out = _sigmoid(params.slope * np.asarray(z, dtype=float) + params.intercept)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BetaCalParams:
    """Beta calibration map ``sigmoid(a ln z - b ln(1 - z) + c)``."""

    a: float
    b: float
    c: float


def _clip_scores(z: np.ndarray) -> np.ndarray:
    if np.any(z <= 0) or np.any(z >= 1):
        warnings.warn("beta calibration scores clipped into (0, 1)", RuntimeWarning, stacklevel=3)
        z = np.clip(z, SCORE_CLIP, 1 - SCORE_CLIP)
    return z


def betacal_fit(scores, labels) -> BetaCalParams:
    """Fit with both log features; a negative coefficient is pinned to 0 and the rest re-fitted."""
    z = _clip_scores(np.asarray(scores, dtype=float))
    y = np.asarray(labels, dtype=float)
    feats = np.column_stack([np.log(z), -np.log1p(-z)])
    ones = np.ones_like(z)
    coef = _fit_logistic(np.column_stack([feats, ones]), y)
    a, b, c = coef
    if a < 0 or b < 0:
        keep = 1 if a < 0 else 0
        c1, c0 = _fit_logistic(np.column_stack([feats[:, keep], ones]), y)
        if c1 < 0:
            return BetaCalParams(0.0, 0.0, float(_fit_logistic(ones[:, None], y)[0]))
        a, b = (0.0, c1) if keep == 1 else (c1, 0.0)
        c = c0
    return BetaCalParams(float(a), float(b), float(c))


def betacal_predict(params: BetaCalParams, z):
    z = _clip_scores(np.asarray(z, dtype=float))
    out = _sigmoid(params.a * np.log(z) - params.b * np.log1p(-z) + params.c)
    return float(out) if out.ndim == 0 else out


def _insert_after(scores: np.ndarray) -> np.ndarray:
    # insertion slot for a new element tied with position k: after every equal score
    return np.searchsorted(scores, scores, side="right")


def sva_lower(labels, scores=None) -> LowerBoundMap:
    """Label-0 branch of simplified Venn-Abers for every calibration position.

    For position ``k`` a label-0 element is inserted right after the last
    element whose score equals ``z_k``, isotonic regression is refitted and
    its value at the inserted element is returned.

    Rather than refitting from scratch per position, persistent PAVA stacks of
    every prefix and every suffix are built once; the fit of
    ``prefix + [0] + suffix`` only pools blocks adjacent to the new element.
    """
    y = np.asarray(labels, dtype=float)
    n = y.size
    z = np.arange(n, dtype=float) if scores is None else np.asarray(scores, dtype=float)
    if z.shape != y.shape:
        raise ValueError("scores and labels must align")
    ylist = y.tolist()

    # node = (sum, count, next); prefix_heads[i] is the stack for y[:i] (top = rightmost block)
    prefix_heads = [None] * (n + 1)
    head = None
    for i in range(n):
        s, c = ylist[i], 1.0
        while head is not None and head[0] * c >= s * head[1]:
            s += head[0]
            c += head[1]
            head = head[2]
        head = (s, c, head)
        prefix_heads[i + 1] = head
    # suffix_heads[i] is the stack for y[i:] built right-to-left (top = leftmost block)
    suffix_heads = [None] * (n + 1)
    head = None
    for i in range(n - 1, -1, -1):
        s, c = ylist[i], 1.0
        while head is not None and s * head[1] >= head[0] * c:
            s += head[0]
            c += head[1]
            head = head[2]
        head = (s, c, head)
        suffix_heads[i] = head

    slots = _insert_after(z)
    cache: dict[int, float] = {}
    out = np.empty(n)
    for k in range(n):
        g = int(slots[k])
        if g not in cache:
            cache[g] = _pool_inserted_zero(prefix_heads[g], suffix_heads[g])
        out[k] = cache[g]
    return LowerBoundMap(out, 0, "sva", {})


def _pool_inserted_zero(left, right) -> float:
    s, c = 0.0, 1.0
    while True:
        moved = False
        while left is not None and left[0] * c >= s * left[1]:
            s += left[0]
            c += left[1]
            left = left[2]
        while right is not None and s * right[1] >= right[0] * c:
            s += right[0]
            c += right[1]
            right = right[2]
            moved = True
        if not moved:
            return s / c


def _bins_to_map(fit_starts, fit_stops, ones, sizes, n, q, method, config) -> LowerBoundMap:
    out = np.empty(n)
    for st, sp, t, m in zip(fit_starts, fit_stops, ones, sizes):
        out[st:sp] = cp_lower_bound(int(round(t)), int(m), q)
    return LowerBoundMap(out, 0, method, dict(config, q=q, n_bins=len(fit_starts)))


def isobins_cp(labels, q: float) -> LowerBoundMap:
    """Clopper-Pearson lower bound of each isotonic bin, assigned to all its members."""
    fit = pava_isotonic(labels)
    return _bins_to_map(fit.starts, fit.stops, fit.sums, fit.sizes, len(labels), q, "isobins_cp", {})


def credible_width(ones: float, size: float, level: float = 0.95) -> float:
    """Width of the central credible interval of Beta(1 + ones, 1 + size - ones)."""
    a, b = 1.0 + ones, 1.0 + size - ones
    tail = (1.0 - level) / 2.0
    return beta_quantile(1.0 - tail, a, b) - beta_quantile(tail, a, b)


def rcir_bins(labels, threshold: float = DEFAULT_RCIR_THRESHOLD, level: float = 0.95) -> IsotonicFit:
    """Isotonic bins merged until every credible interval is at most ``threshold`` wide.

    The widest offending bin is merged first, with whichever neighbour gives
    the narrower merged interval; monotonicity of bin means is then restored
    by pooling.
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must lie in (0, 1], got {threshold!r}")
    fit = pava_isotonic(labels)
    starts = fit.starts.tolist()
    stops = fit.stops.tolist()
    ones = fit.sums.tolist()
    widths = [credible_width(t, sp - st, level) for t, st, sp in zip(ones, starts, stops)]
    while len(starts) > 1:
        worst = max(range(len(widths)), key=lambda i: widths[i])
        if widths[worst] <= threshold:
            break
        options = []
        for nb in (worst - 1, worst + 1):
            if 0 <= nb < len(starts):
                lo, hi = min(worst, nb), max(worst, nb)
                w = credible_width(ones[lo] + ones[hi], stops[hi] - starts[lo], level)
                options.append((w, lo))
        w, lo = min(options)
        starts[lo : lo + 2] = [starts[lo]]
        stops[lo : lo + 2] = [stops[lo + 1]]
        ones[lo : lo + 2] = [ones[lo] + ones[lo + 1]]
        widths[lo : lo + 2] = [w]
        # restore strictly increasing means around the merged bin
        i = lo
        while True:
            if i > 0 and ones[i - 1] * (stops[i] - starts[i]) >= ones[i] * (stops[i - 1] - starts[i - 1]):
                i -= 1
            elif i + 1 < len(starts) and ones[i] * (stops[i + 1] - starts[i + 1]) >= ones[i + 1] * (
                stops[i] - starts[i]
            ):
                pass
            else:
                break
            starts[i : i + 2] = [starts[i]]
            stops[i : i + 2] = [stops[i + 1]]
            ones[i : i + 2] = [ones[i] + ones[i + 1]]
            widths[i : i + 2] = [credible_width(ones[i], stops[i] - starts[i], level)]
    st = np.array(starts, dtype=np.int64)
    sp = np.array(stops, dtype=np.int64)
    return IsotonicFit(st, sp, np.array(ones, dtype=float), (sp - st).astype(float))


def rcir_cp(labels, q: float, threshold: float = DEFAULT_RCIR_THRESHOLD) -> LowerBoundMap:
    fit = rcir_bins(labels, threshold)
    return _bins_to_map(fit.starts, fit.stops, fit.sums, fit.sizes, len(labels), q, "rcir_cp", {"threshold": threshold})


def isocal_map(labels, eps: float = DEFAULT_SMOOTHING) -> LowerBoundMap:
    fitted = pava_isotonic(label_smooth(labels, eps)).per_position()
    return LowerBoundMap(np.clip(fitted, 0.0, 1.0), 0, "isocal", {"eps": eps})


def logcal_map(scores, labels, eps: float = DEFAULT_SMOOTHING) -> LowerBoundMap:
    params = platt_fit(scores, label_smooth(labels, eps))
    return LowerBoundMap(
        platt_predict(params, scores), 0, "logcal", {"eps": eps, "slope": params.slope, "intercept": params.intercept}
    )


def betacal_map(scores, labels) -> LowerBoundMap:
    params = betacal_fit(scores, labels)
    return LowerBoundMap(betacal_predict(params, scores), 0, "betacal", {"a": params.a, "b": params.b, "c": params.c})
