"""Classical calibrators and repurposed cautious baselines against independent oracles."""

import itertools
import warnings

import numpy as np
import pytest
import scipy.stats as st
from hypothesis import given
from hypothesis import strategies as hst
from oracles import partition_oracle

from cautiouscal.baselines import (
    BetaCalParams,
    _fit_logistic,
    betacal_fit,
    betacal_map,
    betacal_predict,
    credible_width,
    isobins_cp,
    isocal_map,
    label_smooth,
    logcal_map,
    pava_isotonic,
    platt_fit,
    platt_predict,
    rcir_bins,
    rcir_cp,
    sva_lower,
)
from cautiouscal.stats import ConvergenceError, cp_lower_bound

binary = hst.lists(hst.integers(0, 1), min_size=1, max_size=60)


def minmax_oracle(y, w):
    """Isotonic fit via max over left ends of min over right ends of weighted block means."""
    n = len(y)
    cs = np.concatenate(([0.0], np.cumsum(y * w)))
    cw = np.concatenate(([0.0], np.cumsum(w)))
    return np.array(
        [
            max(min((cs[t + 1] - cs[s]) / (cw[t + 1] - cw[s]) for t in range(i, n)) for s in range(i + 1))
            for i in range(n)
        ]
    )


def naive_sva(labels, scores):
    labels = list(labels)
    out = []
    for k in range(len(labels)):
        pos = int(np.searchsorted(scores, scores[k], side="right"))
        aug = labels[:pos] + [0] + labels[pos:]
        out.append(pava_isotonic(aug).per_position()[pos])
    return np.array(out)


class TestPava:
    @pytest.mark.parametrize(
        "y, expected",
        [((0, 0, 1, 1), (0, 0, 1, 1)), ((1, 0), (0.5, 0.5)), ((0, 1, 0, 1, 1), (0, 0.5, 0.5, 1, 1))],
    )
    def test_examples(self, y, expected):
        np.testing.assert_allclose(pava_isotonic(y).per_position(), expected, atol=1e-15)

    @pytest.mark.parametrize("n", range(1, 11))
    def test_exhaustive_partition_oracle(self, n):
        vecs = np.array(list(itertools.product((0, 1), repeat=n)))
        fits = np.array([pava_isotonic(v).per_position() for v in vecs])
        np.testing.assert_allclose(fits, partition_oracle(vecs), atol=1e-12)

    @given(hst.lists(hst.tuples(hst.floats(0, 1), hst.floats(0.1, 10)), min_size=1, max_size=25))
    def test_weighted_minmax_oracle(self, pairs):
        y, w = map(np.array, zip(*pairs))
        fit = pava_isotonic(y, w)
        np.testing.assert_allclose(fit.per_position(), minmax_oracle(y, w), atol=1e-9)

    @given(binary)
    def test_block_invariants(self, y):
        fit = pava_isotonic(y)
        assert np.all(np.diff(fit.values) > 0)
        assert fit.starts[0] == 0 and fit.stops[-1] == len(y)
        np.testing.assert_array_equal(fit.starts[1:], fit.stops[:-1])
        assert min(y) <= fit.values.min() and fit.values.max() <= max(y)

    @pytest.mark.parametrize("w", [[1, 0], [1, -1]])
    def test_rejects_bad_weights(self, w):
        with pytest.raises(ValueError):
            pava_isotonic([0, 1], w)


class TestLabelSmooth:
    @pytest.mark.parametrize(
        "y, eps, expected",
        [((0, 1), 0.0, (0, 1)), ((0, 1), 0.02, (0.01, 0.99)), ((1, 1, 1), 0.1, (0.95, 0.95, 0.95))],
    )
    def test_examples(self, y, eps, expected):
        np.testing.assert_allclose(label_smooth(y, eps), expected)

    def test_rejects_eps_one(self):
        with pytest.raises(ValueError):
            label_smooth([0, 1], 1.0)


def nll(p, y):
    p = np.clip(p, 1e-300, 1 - 1e-16)
    return -np.sum(y * np.log(p) + (1 - y) * np.log1p(-p))


class TestPlatt:
    def test_antisymmetric(self):
        params = platt_fit([-1.0, 1.0], label_smooth([0, 1], 0.02))
        assert params.intercept == pytest.approx(0.0, abs=1e-8)
        assert platt_predict(params, 0.0) == pytest.approx(0.5, abs=1e-8)

    def test_constant_half(self):
        params = platt_fit([0.1, 0.4, 0.7, 0.9], [0.5] * 4)
        assert params.slope == pytest.approx(0.0, abs=1e-8)
        np.testing.assert_allclose(platt_predict(params, np.linspace(0, 1, 5)), 0.5, atol=1e-8)

    def test_grid_search_oracle(self):
        z = np.array([0.1, 0.35, 0.6, 0.85])
        y = label_smooth([0, 1, 0, 1], 0.01)
        params = platt_fit(z, y)
        slopes = np.linspace(-10, 20, 1201)
        inters = np.linspace(-10, 10, 801)
        S, I = np.meshgrid(slopes, inters, indexing="ij")
        logits = S[..., None] * z + I[..., None]
        p = 1 / (1 + np.exp(-logits))
        loss = -(y * np.log(p) + (1 - y) * np.log1p(-p)).sum(axis=-1)
        i, j = np.unravel_index(np.argmin(loss), loss.shape)
        grid_pred = 1 / (1 + np.exp(-(slopes[i] * z + inters[j])))
        np.testing.assert_allclose(platt_predict(params, z), grid_pred, atol=1e-3)
        assert nll(platt_predict(params, z), y) <= loss.min() + 1e-12

    def test_needs_two_scores(self):
        with pytest.raises(ValueError):
            platt_fit([0.5, 0.5], [0, 1])

    def test_non_convergence_reported(self):
        feats = np.column_stack([np.linspace(0, 1, 20), np.ones(20)])
        with pytest.raises(ConvergenceError):
            _fit_logistic(feats, np.linspace(0.1, 0.9, 20) ** 2, max_iter=1)


class TestBetaCal:
    def test_identity(self):
        z = np.linspace(0.01, 0.99, 50)
        np.testing.assert_allclose(betacal_predict(BetaCalParams(1.0, 1.0, 0.0), z), z, atol=1e-12)

    def test_symmetric(self):
        # invariant under z -> 1 - z, y -> 1 - y; two points would leave the fit unidentified
        params = betacal_fit([0.2, 0.4, 0.6, 0.8], label_smooth([0, 1, 0, 1], 0.02))
        assert params.a == pytest.approx(params.b, abs=1e-8)
        assert betacal_predict(params, 0.5) == pytest.approx(0.5, abs=1e-8)

    def test_grid_search_oracle(self):
        z = np.array([0.1, 0.25, 0.4, 0.55, 0.7, 0.9])
        y = np.array([0, 1, 0, 0, 1, 1])
        params = betacal_fit(z, y)
        assert params.a >= 0 and params.b >= 0
        A, Bc, C = np.meshgrid(np.linspace(0, 4, 81), np.linspace(0, 4, 81), np.linspace(-4, 4, 161), indexing="ij")
        logits = A[..., None] * np.log(z) - Bc[..., None] * np.log1p(-z) + C[..., None]
        p = 1 / (1 + np.exp(-logits))
        loss = -(y * np.log(p) + (1 - y) * np.log1p(-p)).sum(axis=-1)
        idx = np.unravel_index(np.argmin(loss), loss.shape)
        grid_pred = betacal_predict(BetaCalParams(A[idx], Bc[idx], C[idx]), z)
        np.testing.assert_allclose(betacal_predict(params, z), grid_pred, atol=1e-2)
        assert nll(betacal_predict(params, z), y) <= loss.min() + 1e-9

    def test_negative_coefficient_dropped(self):
        z = np.array([0.2, 0.3, 0.4, 0.6, 0.7, 0.8])
        params = betacal_fit(z, [1, 1, 0, 1, 0, 0])
        assert params.a >= 0 and params.b >= 0

    @given(hst.lists(hst.integers(0, 1), min_size=8, max_size=40))
    def test_monotone(self, y):
        z = (np.arange(len(y)) + 1) / (len(y) + 1)
        params = betacal_fit(z, y)
        assert params.a >= 0 and params.b >= 0
        grid = np.linspace(1e-6, 1 - 1e-6, 2001)
        assert np.all(np.diff(betacal_predict(params, grid)) >= -1e-15)

    def test_clipping_warns(self):
        with pytest.warns(RuntimeWarning):
            betacal_fit([0.0, 0.5, 1.0], [0, 1, 1])


class TestSva:
    def test_all_ones(self):
        np.testing.assert_allclose(sva_lower([1, 1, 1]).bounds, [0.5, 2 / 3, 0.75])

    def test_all_zeros(self):
        assert np.all(sva_lower(np.zeros(10)).bounds == 0)

    def test_naive_oracle_random(self):
        g = np.random.default_rng(3)
        y = (g.random(50) < 0.7).astype(int)
        z = np.sort(g.random(50))
        np.testing.assert_allclose(sva_lower(y, z).bounds, naive_sva(y, z), atol=1e-12)

    @given(binary, hst.data())
    def test_naive_oracle_with_ties(self, y, data):
        z = np.sort(data.draw(hst.lists(hst.integers(0, 5), min_size=len(y), max_size=len(y)))).astype(float)
        np.testing.assert_allclose(sva_lower(y, z).bounds, naive_sva(y, z), atol=1e-12)

    @given(binary)
    def test_below_isotonic(self, y):
        assert np.all(sva_lower(y).bounds <= pava_isotonic(y).per_position() + 1e-12)


class TestIsobins:
    def test_single_bin(self):
        np.testing.assert_allclose(isobins_cp([1, 0], 0.99).bounds, [cp_lower_bound(1, 2, 0.99)] * 2)

    def test_zeros(self):
        assert np.all(isobins_cp([0, 0, 0], 0.9).bounds == 0)

    def test_monotone_labels(self):
        out = isobins_cp([0, 0, 1, 1], 0.99).bounds
        np.testing.assert_allclose(out, [0, 0, 0.1, 0.1], atol=1e-12)

    @given(binary)
    def test_strictly_conservative(self, y):
        fit = pava_isotonic(y)
        out = isobins_cp(y, 0.9).bounds
        for st_, sp, val, t in zip(fit.starts, fit.stops, fit.values, fit.sums):
            if t > 0:
                assert np.all(out[st_:sp] < val)
            else:
                assert np.all(out[st_:sp] == 0)


class TestRcir:
    def test_credible_width_matches_scipy(self):
        for t, m in [(0, 1), (3, 10), (950, 1000)]:
            d = st.beta(1 + t, 1 + m - t)
            assert credible_width(t, m) == pytest.approx(d.ppf(0.975) - d.ppf(0.025), abs=1e-9)

    def test_large_bin_unchanged(self):
        fit = rcir_bins(np.ones(10_000, dtype=int))
        assert len(fit.starts) == 1

    def test_two_singletons_merged(self):
        assert credible_width(0, 1) > 0.5 and credible_width(1, 1) > 0.5
        fit = rcir_bins([0, 1], threshold=0.5)
        assert list(fit.starts) == [0] and list(fit.stops) == [2]

    @given(binary)
    def test_threshold_one_is_isobins(self, y):
        np.testing.assert_array_equal(rcir_cp(y, 0.9, 1.0).bounds, isobins_cp(y, 0.9).bounds)

    @given(hst.lists(hst.integers(0, 1), min_size=1, max_size=400), hst.floats(0.05, 0.6))
    def test_final_bins(self, y, thr):
        fit = rcir_bins(y, thr)
        assert np.all(np.diff(fit.values) > 0)
        widths = [credible_width(t, m) for t, m in zip(fit.sums, fit.sizes)]
        assert len(widths) == 1 or max(widths) <= thr
        np.testing.assert_array_equal(fit.starts[1:], fit.stops[:-1])

    def test_coarser_than_isobins(self):
        g = np.random.default_rng(8)
        y = (g.random(3000) < np.linspace(0.9, 1.0, 3000)).astype(int)
        assert len(rcir_bins(y).starts) <= len(pava_isotonic(y).starts)

    @pytest.mark.parametrize("thr", [0.0, 1.5])
    def test_rejects_threshold(self, thr):
        with pytest.raises(ValueError):
            rcir_bins([0, 1], thr)


def test_map_wrappers():
    g = np.random.default_rng(2)
    y = (g.random(500) < 0.8).astype(int)
    z = np.arange(1, 501) / 501
    for lbmap in (
        isocal_map(y),
        logcal_map(z, y),
        betacal_map(z, y),
        sva_lower(y, z),
        isobins_cp(y, 0.99),
        rcir_cp(y, 0.99),
    ):
        assert lbmap.defined_from == 0
        assert np.all((lbmap.bounds >= 0) & (lbmap.bounds <= 1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        betacal_map(z, y)
