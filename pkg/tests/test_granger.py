import datetime as dt

import numpy as np
import pytest

from causeway.errors import InvalidParams, InvalidRank, TooShort, UnknownTarget
from causeway.granger import (
    BipartiteCausalGraph,
    causality,
    compose,
    fit_ar,
    fit_varx,
    masked_nmf,
    nmf_impute,
    score_features,
    tfidf_prune,
)
from conftest import D0, series


def ar1(T, alpha, x=None, beta=0.0, noise=None, lag=1):
    """Synthetic target y_t = alpha*y_{t-1} + beta*x_{t-lag} + noise_t."""
    y = np.zeros(T)
    for t in range(1, T):
        y[t] = alpha * y[t - 1]
        if x is not None and t - lag >= 0:
            y[t] += beta * x[t - lag]
        if noise is not None:
            y[t] += noise[t]
    return y


class TestFitAr:
    def test_noiseless_recovery(self):
        y = np.empty(50)
        y[0] = 1.0
        for t in range(1, 50):
            y[t] = 0.5 * y[t - 1]
        fit = fit_ar(series(y + 2.0), 1)
        np.testing.assert_allclose(fit.alpha, [0.5], atol=1e-8)
        assert fit.residual_variance == pytest.approx(0.0, abs=1e-16)

    def test_white_noise_alpha_near_zero(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=400)
        fit = fit_ar(series(y), 1)
        # stderr of an AR(1) coefficient on white noise ~ 1/sqrt(T)
        assert abs(fit.alpha[0]) < 3.0 / np.sqrt(400)

    def test_constant_series_zero_variance(self):
        fit = fit_ar(series([4.0] * 30), 2)
        assert fit.residual_variance == pytest.approx(0.0, abs=1e-12)
        assert fit.used_ridge

    def test_too_short(self):
        with pytest.raises(TooShort):
            fit_ar(series([1, 2, 3]), 1)


class TestFitVarx:
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=200)
        y = ar1(200, 0.5, x=x, beta=1.0, lag=1)
        fit = fit_varx(series(y, name="y"), [series(x, name="x")], 1, 1)
        np.testing.assert_allclose(fit.alpha, [0.5], atol=1e-8)
        np.testing.assert_allclose(fit.beta, [[1.0]], atol=1e-8)

    def test_zero_feature_matches_ar(self):
        rng = np.random.default_rng(11)
        y = series(rng.normal(size=120), name="y")
        zero = series(np.zeros(120), name="z")
        fv = fit_varx(y, [zero], 2, 2)
        fa = fit_ar(y, 2)
        np.testing.assert_allclose(fv.beta, np.zeros((1, 2)), atol=1e-10)
        assert fv.residual_variance == pytest.approx(fa.residual_variance, rel=1e-9)

    def test_duplicated_feature_ridge_keeps_fit(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=150)
        y = ar1(150, 0.4, x=x, beta=0.8, lag=1)
        ys = series(y, name="y")
        xs = series(x, name="x")
        single = fit_varx(ys, [xs], 1, 1)
        doubled = fit_varx(ys, [xs, series(x, name="x2")], 1, 1)
        assert doubled.used_ridge
        # betas split across the duplicated columns, fitted values unchanged
        assert doubled.beta.sum() == pytest.approx(single.beta.sum(), abs=1e-6)
        assert doubled.residual_variance == pytest.approx(
            single.residual_variance, abs=1e-6
        )

    def test_variance_never_above_ar(self):
        # 100 random datasets: adding regressors cannot hurt in-sample fit
        rng = np.random.default_rng(17)
        for _ in range(100):
            T = int(rng.integers(40, 120))
            y = series(rng.normal(size=T), name="y")
            feats = [series(rng.normal(size=T), name=f"f{i}") for i in range(2)]
            fv = fit_varx(y, feats, 3, 3)
            fa = fit_ar(y, 3)
            assert fv.residual_variance <= fa.residual_variance + 1e-9

    def test_misaligned_raises(self):
        y = series(np.arange(40.0))
        f = series(np.arange(40.0), start=D0 + dt.timedelta(days=1))
        with pytest.raises(InvalidParams):
            fit_varx(y, [f], 1, 1)


class TestCausality:
    def test_leading_copy_dominates_at_its_lag(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=302)
        y = series(base[:300], name="y")
        f = series(base[2:302], name="f")  # f leads y by 2 days
        score = causality(y, f, 3)
        assert score.total > 0.9
        assert score.per_lag[2] == max(score.per_lag.values())
        assert score.pvalues[2] < 0.05

    def test_independent_noise_scores_zero(self):
        rng = np.random.default_rng(6)
        y = series(rng.normal(size=300), name="y")
        f = series(rng.normal(size=300), name="f")
        score = causality(y, f, 3)
        assert score.total < 0.05
        assert all(p >= 0.05 for p in score.pvalues.values())

    def test_self_series_adds_nothing(self):
        rng = np.random.default_rng(8)
        v = ar1(300, 0.6, noise=rng.normal(size=300))
        score = causality(series(v, name="y"), series(v, name="copy"), 3)
        assert score.total == pytest.approx(0.0, abs=1e-6)

    def test_total_is_sum_of_per_lag(self):
        rng = np.random.default_rng(9)
        base = rng.normal(size=205)
        score = causality(series(base[:200], name="y"),
                          series(base[3:203], name="f"), 4)
        assert score.total == pytest.approx(sum(score.per_lag.values()))

    def test_affine_invariance(self):
        rng = np.random.default_rng(10)
        base = rng.normal(size=203)
        y = series(base[:200], name="y")
        f = series(base[2:202], name="f")
        g = series(3.7 * base[2:202] + 11.0, name="g")
        sf = causality(y, f, 3)
        sg = causality(y, g, 3)
        assert sg.total == pytest.approx(sf.total, rel=1e-9)


class TestTfidfPrune:
    def toy(self):
        # 3 features x 2 targets; f_all connects to every target
        w = np.array([[5.0, 4.0], [3.0, 0.0], [0.0, 2.0]])
        m = np.array([[True, True], [True, False], [False, True]])
        return BipartiteCausalGraph(["f_all", "f_a", "f_b"], ["ta", "tb"], w, m)

    def test_promiscuous_feature_loses_all_edges(self):
        pruned = tfidf_prune(self.toy(), keep_frac=1.0)
        np.testing.assert_array_equal(pruned.weights[0], [0.0, 0.0])
        assert pruned.weights[1, 0] > 0
        assert pruned.weights[2, 1] > 0

    def test_keep_frac_one_rescales_only(self):
        w = np.array([[3.0, 0.0], [0.0, 2.0]])
        m = np.array([[True, False], [False, True]])
        g = BipartiteCausalGraph(["fa", "fb"], ["ta", "tb"], w, m)
        pruned = tfidf_prune(g, keep_frac=1.0)
        # all df=1 -> uniform idf log(2): pure positive rescaling
        np.testing.assert_allclose(pruned.weights, w * np.log(2.0))

    def test_matches_bruteforce_on_toy(self):
        g = self.toy()
        keep_frac = 0.5
        pruned = tfidf_prune(g, keep_frac)
        # brute-force recomputation
        nt = 2
        df = {0: 2, 1: 1, 2: 1}
        edges = []
        for i in range(3):
            for j in range(2):
                if g.mask[i, j]:
                    idf = np.log(nt / df[i])
                    edges.append((g.weights[i, j] * idf, i, j))
        dead = [(w, i, j) for w, i, j in edges if w <= 0]
        alive = sorted([(w, i, j) for w, i, j in edges if w > 0])
        n_drop = max(0, int(np.floor((1 - keep_frac) * len(edges))) - len(dead))
        removed = {(i, j) for _, i, j in dead + alive[:n_drop]}
        for w, i, j in edges:
            if (i, j) in removed:
                assert pruned.weights[i, j] == 0.0
            else:
                assert pruned.weights[i, j] == pytest.approx(w)


class TestMaskedNmf:
    def test_rank1_recovery_through_mask(self):
        rng = np.random.default_rng(21)
        u = rng.uniform(0.5, 2.0, size=12)
        v = rng.uniform(0.5, 2.0, size=9)
        X = np.outer(u, v)
        mask = rng.uniform(size=X.shape) > 0.2
        W, H, _ = masked_nmf(X, mask, rank=1, iters=600, seed=0)
        recon = W @ H
        np.testing.assert_allclose(recon[~mask], X[~mask], atol=1e-3)

    def test_zero_matrix_zero_fill(self):
        X = np.zeros((4, 5))
        mask = np.ones_like(X, dtype=bool)
        mask[1, 2] = False
        W, H, _ = masked_nmf(X, mask, rank=2, iters=50, seed=1)
        np.testing.assert_allclose(W @ H, np.zeros_like(X), atol=1e-12)

    def test_objective_monotone(self):
        rng = np.random.default_rng(22)
        for seed in range(20):
            X = rng.uniform(0, 3, size=(8, 6))
            mask = rng.uniform(size=X.shape) > 0.3
            _, _, hist = masked_nmf(X, mask, rank=2, iters=500, seed=seed)
            hist = np.asarray(hist)
            assert (np.diff(hist) <= 1e-10).all()

    def test_invalid_rank(self):
        with pytest.raises(InvalidRank):
            masked_nmf(np.ones((3, 4)), np.ones((3, 4), dtype=bool), rank=4, iters=5)

    def test_impute_preserves_observed(self):
        rng = np.random.default_rng(23)
        w = rng.uniform(0, 2, size=(6, 4))
        m = rng.uniform(size=w.shape) > 0.25
        g = BipartiteCausalGraph(
            [f"f{i}" for i in range(6)], [f"t{j}" for j in range(4)], np.where(m, w, 0.0), m
        )
        out = nmf_impute(g, rank=2, iters=300, seed=3)
        np.testing.assert_array_equal(out.weights[m], g.weights[m])
        assert out.mask.all()
        assert (out.weights >= 0).all()


class TestCompose:
    def graph(self):
        w = np.array([[0.9], [0.4], [0.4], [0.7], [0.1]])
        m = np.ones_like(w, dtype=bool)
        return BipartiteCausalGraph(["e", "b", "a", "c", "d"], ["y"], w, m)

    def test_hand_ranked_top3(self):
        comp = compose(self.graph(), "y", 3)
        assert [n for n, _ in comp.selected] == ["e", "c", "a"]

    def test_ties_break_lexicographically(self):
        comp = compose(self.graph(), "y", 5)
        names = [n for n, _ in comp.selected]
        assert names == ["e", "c", "a", "b", "d"]  # a before b at equal 0.4

    def test_k_larger_than_features(self):
        comp = compose(self.graph(), "y", 99)
        assert len(comp.selected) == 5

    def test_unknown_target(self):
        with pytest.raises(UnknownTarget):
            compose(self.graph(), "nope", 2)

    def test_monotone_rescaling_keeps_ranking(self):
        g = self.graph()
        ranked = [n for n, _ in compose(g, "y", 5).selected]
        g2 = BipartiteCausalGraph(g.features, g.targets, g.weights * 7.5, g.mask)
        assert [n for n, _ in compose(g2, "y", 5).selected] == ranked


class TestScoreFeatures:
    def test_threaded_matches_serial(self):
        rng = np.random.default_rng(31)
        base = rng.normal(size=220)
        y = series(base[:200], name="y")
        feats = {
            "lead2": series(base[2:202], name="lead2"),
            "noise": series(rng.normal(size=200), name="noise"),
            "lead3": series(base[3:203], name="lead3"),
        }
        serial = score_features(y, feats, 3, threads=1)
        threaded = score_features(y, feats, 3, threads=4)
        assert [s.feature for s in serial] == sorted(feats)
        for a, b in zip(serial, threaded):
            assert a.feature == b.feature
            assert a.total == b.total
            assert a.per_lag == b.per_lag
