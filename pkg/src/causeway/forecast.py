"""Rolling-window forecasting backtest (autoregression vs. VARX with
textual features, plus a parametric-spike baseline) and the random
causality analysis that sanity-checks the scoring function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientHistory, InvalidParams, LengthMismatch, SeriesTooShort
from .granger import VarxFit, causality, fit_ar, fit_varx
from .timeseries import SpikeParams, TimeSeries, generate_spike

__all__ = [
    "BacktestConfig",
    "BacktestReport",
    "RandomCausalityResult",
    "forecast_varx",
    "rmse",
    "backtest",
    "random_analysis",
    "write_random_csv",
    "write_random_svg",
]

AR_ONLY = "ar_only"
SPIKE_MODEL = "spike_model"

SPIKE_RISE_GRID = (1, 2, 3, 5, 7)
SPIKE_DECAY_GRID = (0.25, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class BacktestConfig:
    window_days: int = 30
    stride_days: int = 10
    steps: tuple[int, ...] = (1, 3, 5)
    m: int = 3
    n: int = 3

    def __post_init__(self):
        if self.window_days <= max(self.m, self.n) + 8:
            raise InvalidParams("window must exceed max(m, n) + 8")
        if self.stride_days < 1:
            raise InvalidParams("stride must be >= 1")
        steps = tuple(sorted(set(self.steps)))
        if not steps or steps[0] < 1 or steps[-1] >= self.window_days:
            raise InvalidParams("steps must lie in 1..window-1")
        object.__setattr__(self, "steps", steps)


@dataclass
class BacktestReport:
    methods: list[str]
    steps: tuple[int, ...]
    rmse: dict[tuple[str, int], float]
    n_windows: int

    def to_tsv(self) -> str:
        lines = ["method\t" + "\t".join(f"step_{s}" for s in self.steps)]
        for method in self.methods:
            cells = "\t".join(repr(self.rmse[(method, s)]) for s in self.steps)
            lines.append(f"{method}\t{cells}")
        return "\n".join(lines) + "\n"


def forecast_varx(
    fit: VarxFit,
    history: np.ndarray | TimeSeries,
    feature_histories: Sequence[np.ndarray | TimeSeries],
    steps: Sequence[int],
) -> dict[int, float]:
    """Iterated multi-step forecasts from the end of ``history``.

    Predictions feed back as lagged target values; exogenous features are
    held at their last observation (their future is unknown at forecast
    time, and using true future values would leak).
    """
    y = history.values if isinstance(history, TimeSeries) else np.asarray(history, float)
    feats = [
        f.values if isinstance(f, TimeSeries) else np.asarray(f, float)
        for f in feature_histories
    ]
    if len(feats) != fit.beta.shape[0]:
        raise InvalidParams(f"fit expects {fit.beta.shape[0]} features, got {len(feats)}")
    if y.size < fit.m or any(f.size < fit.n for f in feats):
        raise InsufficientHistory("history shorter than the fitted lag order")
    steps = sorted(set(int(s) for s in steps))
    if steps[0] < 1:
        raise InvalidParams("steps must be >= 1")
    T = y.size
    ext = list(y)
    out: dict[int, float] = {}
    for s in range(1, steps[-1] + 1):
        pred = fit.intercept
        for j in range(1, fit.m + 1):
            pred += fit.alpha[j - 1] * ext[T + s - 1 - j]
        for fi, f in enumerate(feats):
            for i in range(1, fit.n + 1):
                t = T + s - 1 - i
                value = f[t] if t < f.size else f[-1]
                pred += fit.beta[fi, i - 1] * value
        ext.append(pred)
        if s in steps:
            out[s] = float(pred)
    return out


def rmse(pred: Sequence[float], truth: Sequence[float]) -> float:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape or p.size == 0:
        raise LengthMismatch(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def _fit_spike_baseline(window: np.ndarray, horizon: int) -> np.ndarray:
    """Best-RMSE parametric spike (plus base level) on the window, extended
    ``horizon`` days past its end.  A stand-in for a full spike-train model:
    single peak at the window maximum, grid-searched shape."""
    base = float(window.min())
    onset = int(np.argmax(window))
    strength = float(window.max()) - base
    n = window.size
    best = None
    for rise in SPIKE_RISE_GRID:
        for decay in SPIKE_DECAY_GRID:
            curve = generate_spike(
                n + horizon, SpikeParams(onset, strength, rise, decay)
            ).values + base
            err = float(np.mean((curve[:n] - window) ** 2))
            if best is None or err < best[0]:
                best = (err, curve)
    return best[1]


def backtest(
    y: TimeSeries,
    feature_sets: Mapping[str, Sequence[TimeSeries]],
    cfg: BacktestConfig,
) -> BacktestReport:
    """Walk a window over the series; per position fit every method on the
    window, forecast each step, and pool squared errors into per-method
    RMSEs.  Methods differ only in their regressor set; ``ar_only`` and the
    spike baseline are always included.
    """
    max_step = cfg.steps[-1]
    T = len(y)
    if T < cfg.window_days + max_step:
        raise SeriesTooShort(
            f"need >= {cfg.window_days + max_step} observations, got {T}"
        )
    for name, feats in feature_sets.items():
        need = cfg.m + len(feats) * cfg.n + 8
        if cfg.window_days < need:
            raise SeriesTooShort(
                f"window {cfg.window_days} too small for method {name!r}"
                f" ({len(feats)} features need {need})"
            )
        for f in feats:
            if f.start_date != y.start_date or len(f) != T:
                raise InvalidParams(f"feature {f.name!r} not aligned with target")

    methods = sorted(feature_sets) + [AR_ONLY, SPIKE_MODEL]
    sqerr: dict[tuple[str, int], list[float]] = {
        (meth, s): [] for meth in methods for s in cfg.steps
    }
    n_windows = 0
    for w in range(0, T - cfg.window_days - max_step + 1, cfg.stride_days):
        n_windows += 1
        lo, hi = w, w + cfg.window_days
        ywin = y.slice(lo, hi)
        truth = {s: float(y.values[hi + s - 1]) for s in cfg.steps}

        ar = fit_ar(ywin, cfg.m)
        preds = forecast_varx(ar, ywin.values, [], cfg.steps)
        for s in cfg.steps:
            sqerr[(AR_ONLY, s)].append((preds[s] - truth[s]) ** 2)

        curve = _fit_spike_baseline(ywin.values, max_step)
        for s in cfg.steps:
            sqerr[(SPIKE_MODEL, s)].append((curve[cfg.window_days + s - 1] - truth[s]) ** 2)

        for name in sorted(feature_sets):
            fwins = [f.slice(lo, hi) for f in feature_sets[name]]
            fit = fit_varx(ywin, fwins, cfg.m, cfg.n)
            preds = forecast_varx(fit, ywin.values, [fw.values for fw in fwins], cfg.steps)
            for s in cfg.steps:
                sqerr[(name, s)].append((preds[s] - truth[s]) ** 2)
    if n_windows == 0:
        raise SeriesTooShort("no complete window positions")
    report_rmse = {
        key: float(math.sqrt(sum(v) / len(v))) for key, v in sqerr.items()
    }
    return BacktestReport(methods=methods, steps=cfg.steps, rmse=report_rmse, n_windows=n_windows)


@dataclass(frozen=True)
class RandomCausalityResult:
    params: SpikeParams
    direction: str  # feature_to_target | target_to_feature
    causality: float


def random_analysis(
    y: TimeSeries,
    n_features: int,
    window: int = 30,
    lag: int = 3,
    seed: int = 0,
) -> list[RandomCausalityResult]:
    """Score randomly-peaked synthetic features against the target in both
    directions.  Feature i gets a spike of random strength placed inside
    window i (windows tile the series), mimicking short synthetic bursts.
    """
    T = len(y)
    if T <= window:
        raise SeriesTooShort(f"series length {T} must exceed window {window}")
    if n_features < 1:
        raise InvalidParams("n_features must be >= 1")
    rng = np.random.default_rng(seed)
    n_windows = T // window
    out: list[RandomCausalityResult] = []
    for i in range(n_features):
        w = (i % n_windows) * window
        onset = int(w + rng.integers(0, window))
        strength = float(rng.uniform(0.5, 2.0))
        params = SpikeParams(onset=onset, strength=strength, rise_days=2,
                             decay_exponent=1.5)
        rf = generate_spike(T, params, start_date=y.start_date, name=f"rf{i}")
        fwd = causality(y, rf, lag).total
        bwd = causality(rf, y.with_name("target"), lag).total
        out.append(RandomCausalityResult(params, "feature_to_target", fwd))
        out.append(RandomCausalityResult(params, "target_to_feature", bwd))
    return out


def write_random_csv(results: list[RandomCausalityResult], path: str | Path) -> None:
    lines = ["offset,strength,direction,causality"]
    for r in results:
        lines.append(
            f"{r.params.onset},{r.params.strength!r},{r.direction},{r.causality!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_random_svg(results: list[RandomCausalityResult], path: str | Path) -> None:
    """Self-contained SVG: causality vs. spike onset, one polyline per
    direction."""
    width, height, pad = 640, 320, 40
    series: dict[str, list[tuple[int, float]]] = {}
    for r in results:
        series.setdefault(r.direction, []).append((r.params.onset, r.causality))
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [v for pts in series.values() for _, v in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_hi = max(max(ys), 1e-9)
    span_x = max(x_hi - x_lo, 1)

    def sx(x: float) -> float:
        return pad + (x - x_lo) / span_x * (width - 2 * pad)

    def sy(v: float) -> float:
        return height - pad - v / y_hi * (height - 2 * pad)

    colors = {"feature_to_target": "#1f6fb2", "target_to_feature": "#d08a00"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for direction in sorted(series):
        pts = sorted(series[direction])
        poly = " ".join(f"{sx(x):.2f},{sy(v):.2f}" for x, v in pts)
        parts.append(
            f'<polyline points="{poly}" fill="none" stroke="{colors.get(direction, "#444")}" stroke-width="1.5"/>'
        )
    parts.append(
        f'<text x="{pad}" y="{pad - 10}" font-size="12">causality vs spike onset'
        f" (max {y_hi:.4f})</text>"
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
