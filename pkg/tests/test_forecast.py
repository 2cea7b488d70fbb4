import numpy as np
import pytest

from causeway.errors import InsufficientHistory, LengthMismatch, SeriesTooShort
from causeway.forecast import (
    BacktestConfig,
    backtest,
    forecast_varx,
    random_analysis,
    rmse,
    write_random_csv,
    write_random_svg,
)
from causeway.granger import VarxFit, causality
from causeway.timeseries import SpikeParams, generate_spike

from conftest import D0, series


def fit(alpha=(), beta=np.zeros((0, 0)), intercept=0.0):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return VarxFit(
        alpha=alpha,
        beta=beta if beta.size else beta.reshape(0, 0),
        intercept=intercept,
        residual_variance=0.0,
        m=len(alpha),
        n=beta.shape[1] if beta.size else 0,
        nobs=10,
    )


class TestForecastVarx:
    def test_ar1_closed_form_iteration(self):
        f = fit(alpha=[0.5])
        preds = forecast_varx(f, np.array([1.0, 2.0, 8.0]), [], steps=[1, 2])
        assert preds[1] == pytest.approx(4.0)
        assert preds[2] == pytest.approx(2.0)

    def test_zero_coefficients_forecast_zero(self):
        f = fit(alpha=[0.0, 0.0])
        preds = forecast_varx(f, np.arange(10.0), [], steps=[1, 3])
        assert preds[1] == 0.0 and preds[3] == 0.0

    def test_pure_exogenous_holds_last_value(self):
        f = fit(alpha=[0.0], beta=[[1.0]])
        preds = forecast_varx(f, np.array([5.0, 5.0]), [np.array([1.0, 3.0])], steps=[1])
        assert preds[1] == pytest.approx(3.0)

    def test_insufficient_history(self):
        f = fit(alpha=[0.1, 0.2, 0.3])
        with pytest.raises(InsufficientHistory):
            forecast_varx(f, np.array([1.0, 2.0]), [], steps=[1])


class TestRmse:
    def test_exact_match_zero(self):
        assert rmse([1, 2, 3], [1, 2, 3]) == 0.0

    def test_hand_computed(self):
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))

    def test_constant_offset(self):
        rng = np.random.default_rng(0)
        t = rng.normal(size=20)
        assert rmse(t + 2.5, t) == pytest.approx(2.5)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            rmse([1.0], [1.0, 2.0])


def causal_system(seed, T=260):
    rng = np.random.default_rng(seed)
    x = np.abs(rng.normal(size=T)) * 2.0
    y = np.zeros(T)
    for t in range(2, T):
        y[t] = 0.6 * y[t - 1] + 0.8 * x[t - 2] + 0.2 * rng.normal()
    noise = rng.normal(size=T)
    return series(y, name="y"), series(x, name="x"), series(noise, name="r")


class TestBacktest:
    CFG = BacktestConfig(window_days=60, stride_days=10, steps=(1, 3), m=3, n=3)

    def test_true_feature_beats_ar_only(self):
        wins = 0
        for seed in range(5):
            y, x, _ = causal_system(seed)
            report = backtest(y, {"varx_true": [x]}, self.CFG)
            if report.rmse[("varx_true", 1)] <= 0.8 * report.rmse[("ar_only", 1)]:
                wins += 1
        assert wins >= 4

    def test_null_feature_close_to_ar_only(self):
        y, _, noise = causal_system(11)
        report = backtest(y, {"varx_random": [noise]}, self.CFG)
        assert report.rmse[("varx_random", 1)] <= 1.15 * report.rmse[("ar_only", 1)]

    def test_every_cell_present(self):
        y, x, noise = causal_system(2)
        report = backtest(y, {"varx_true": [x], "varx_random": [noise]}, self.CFG)
        for method in ("varx_true", "varx_random", "ar_only", "spike_model"):
            for step in (1, 3):
                assert (method, step) in report.rmse
                assert report.rmse[(method, step)] >= 0.0

    def test_shift_invariance_with_intercept(self):
        y, x, _ = causal_system(5)
        base = backtest(y, {"varx_true": [x]}, self.CFG)
        y2 = series(y.values + 100.0, name="y")
        x2 = series(x.values + 100.0, name="x")
        shifted = backtest(y2, {"varx_true": [x2]}, self.CFG)
        for key, value in base.rmse.items():
            if key[0] == "spike_model":
                continue  # the spike baseline is not shift-equivariant
            assert shifted.rmse[key] == pytest.approx(value, rel=1e-6, abs=1e-8)

    def test_too_short_series(self):
        y = series(np.arange(30.0), name="y")
        with pytest.raises(SeriesTooShort):
            backtest(y, {}, self.CFG)

    def test_report_tsv_shape(self):
        y, x, _ = causal_system(3)
        report = backtest(y, {"varx_true": [x]}, self.CFG)
        lines = report.to_tsv().splitlines()
        assert lines[0] == "method\tstep_1\tstep_3"
        assert len(lines) == 1 + 3


class TestRandomAnalysis:
    def single_peak_target(self, T=120, peak=60, seed=0):
        rng = np.random.default_rng(seed)
        base = generate_spike(
            T, SpikeParams(onset=peak, strength=10.0, rise_days=3, decay_exponent=1.0)
        ).values
        return series(base + 0.001 * rng.normal(size=T), name="y")

    def test_peak_aligned_spike_scores_highest(self):
        lag = 3
        peak = 60
        y = self.single_peak_target()
        totals = {}
        for offset in range(0, lag + 6):
            f = generate_spike(
                120,
                SpikeParams(onset=peak - offset, strength=5.0, rise_days=3,
                            decay_exponent=1.0),
                start_date=D0,
                name=f"f{offset}",
            )
            totals[offset] = causality(y, f, lag).total
        assert max(totals, key=totals.get) == lag
        for offset in range(lag, lag + 5):
            assert totals[offset] >= totals[offset + 1] - 1e-9

    def test_far_spike_scores_near_zero(self):
        y = self.single_peak_target()
        f = generate_spike(120, SpikeParams(onset=10, strength=5.0, rise_days=3,
                                            decay_exponent=1.0),
                           start_date=D0, name="far")
        assert causality(y, f, 3).total < 0.05

    def test_flat_target_scores_zero(self):
        y = series(np.full(90, 0.001), name="flat")
        results = random_analysis(y, n_features=6, window=30, lag=3, seed=0)
        assert all(r.causality == 0.0 for r in results)

    def test_noise_target_rarely_caused(self):
        # the feature->target direction against near-flat noise stays at
        # false-positive level
        rng = np.random.default_rng(1)
        y = series(0.001 * rng.normal(size=90), name="noisy")
        results = random_analysis(y, n_features=6, window=30, lag=3, seed=0)
        fwd = [r for r in results if r.direction == "feature_to_target"]
        assert all(r.causality < 0.05 for r in fwd)

    def test_series_shorter_than_window_rejected(self):
        y = series(np.arange(20.0), name="y")
        with pytest.raises(SeriesTooShort):
            random_analysis(y, n_features=2, window=30, lag=3, seed=0)

    def test_deterministic_and_both_directions(self):
        y = self.single_peak_target()
        a = random_analysis(y, n_features=5, window=30, lag=3, seed=7)
        b = random_analysis(y, n_features=5, window=30, lag=3, seed=7)
        assert a == b
        assert {r.direction for r in a} == {"feature_to_target", "target_to_feature"}
        assert len(a) == 10

    def test_csv_output(self, tmp_path):
        y = self.single_peak_target()
        results = random_analysis(y, n_features=3, window=30, lag=3, seed=0)
        path = tmp_path / "random.csv"
        write_random_csv(results, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "offset,strength,direction,causality"
        assert len(lines) == 1 + len(results)

    def test_svg_output_self_contained(self, tmp_path):
        y = self.single_peak_target()
        results = random_analysis(y, n_features=3, window=30, lag=3, seed=0)
        path = tmp_path / "random.svg"
        write_random_svg(results, path)
        text = path.read_text()
        assert text.startswith("<svg ") and text.rstrip().endswith("</svg>")
        assert text.count("<polyline") == 2  # one line per direction
        # deterministic output
        write_random_svg(results, tmp_path / "again.svg")
        assert (tmp_path / "again.svg").read_text() == text
