"""Temporal causality scoring: lag regressions, variance-reduction scores,
feature composition, and bipartite-graph cleanup (idf pruning, masked NMF).

A feature x causes a target y when adding lagged x to y's autoregression
reduces the residual variance.  Per-lag contributions pass an F-test gate
before they count toward the feature's total.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import InvalidParams, InvalidRank, SingularDesign, TooShort, UnknownTarget
from .timeseries import TimeSeries, align, standardize

__all__ = [
    "VarxFit",
    "CausalityScore",
    "BipartiteCausalGraph",
    "Composition",
    "fit_ar",
    "fit_varx",
    "causality",
    "score_features",
    "tfidf_prune",
    "masked_nmf",
    "nmf_impute",
    "compose",
    "write_scores_tsv",
]

# Diagonal regularizer (relative to the mean design diagonal) applied when a
# design matrix is rank deficient; keeps 20k-feature batches from aborting on
# collinear text features.
RIDGE_EPS = 1e-8

# Minimum extra observations beyond the parameter count for any fit.
MIN_EXTRA_OBS = 8

# Per-lag F-test level: a lag must be significant at this level to count
# toward the causality total.
SIGNIFICANCE_LEVEL = 0.05

_TINY = 1e-12


@dataclass(frozen=True)
class VarxFit:
    """OLS fit of y on its own lags (and optionally lagged features)."""

    alpha: np.ndarray            # target lag coefficients, length m
    beta: np.ndarray             # feature lag coefficients, shape (k, n)
    intercept: float
    residual_variance: float
    m: int
    n: int
    nobs: int                    # rows in the effective sample
    used_ridge: bool = False


@dataclass(frozen=True)
class CausalityScore:
    """Per-lag variance reductions of one (feature, target) pair.

    ``per_lag`` holds the gated contributions (zero where the F-test fails),
    so ``total == sum(per_lag.values())`` always.  Raw deltas and p-values
    are kept alongside for reporting.
    """

    feature: str
    target: str
    per_lag: dict[int, float]
    raw_per_lag: dict[int, float]
    pvalues: dict[int, float]
    total: float


@dataclass
class Composition:
    """Top-k causal features selected for one target."""

    target: str
    selected: list[tuple[str, float]]


def _solve_ols(X: np.ndarray, y: np.ndarray, allow_ridge: bool = True) -> tuple[np.ndarray, float, bool]:
    """Least squares with a ridge fallback on rank-deficient designs.

    Returns (coefficients, sse, used_ridge).
    """
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    used_ridge = False
    if rank < X.shape[1]:
        if not allow_ridge:
            raise SingularDesign(f"design is rank deficient ({rank} < {X.shape[1]})")
        gram = X.T @ X
        lam = RIDGE_EPS * max(np.trace(gram) / X.shape[1], 1.0)
        try:
            beta = np.linalg.solve(gram + lam * np.eye(X.shape[1]), X.T @ y)
        except np.linalg.LinAlgError as e:
            raise SingularDesign(f"ridge fallback failed: {e}") from e
        used_ridge = True
    if not np.all(np.isfinite(beta)):
        raise SingularDesign("non-finite coefficients after ridge fallback")
    resid = y - X @ beta
    return beta, float(resid @ resid), used_ridge


def _ar_design(y: np.ndarray, m: int, offset: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(offset, y.size)
    cols = [np.ones(t.size)]
    cols.extend(y[t - j] for j in range(1, m + 1))
    return np.column_stack(cols), y[t]


def fit_ar(y: TimeSeries, m: int) -> VarxFit:
    """Autoregression of order m: y_t on an intercept and y_{t-1..t-m}."""
    if m < 1:
        raise InvalidParams("lag order m must be >= 1")
    T = len(y)
    if T < m + MIN_EXTRA_OBS:
        raise TooShort(f"need at least {m + MIN_EXTRA_OBS} observations, got {T}")
    X, resp = _ar_design(y.values, m, m)
    coef, sse, used_ridge = _solve_ols(X, resp)
    return VarxFit(
        alpha=coef[1:].copy(),
        beta=np.zeros((0, 0)),
        intercept=float(coef[0]),
        residual_variance=sse / (T - m),
        m=m,
        n=0,
        nobs=T - m,
        used_ridge=used_ridge,
    )


def _check_aligned(y: TimeSeries, X: Sequence[TimeSeries]) -> None:
    for f in X:
        if f.start_date != y.start_date or len(f) != len(y):
            raise InvalidParams(
                f"feature {f.name!r} is not aligned with target {y.name!r}; call align() first"
            )


def fit_varx(y: TimeSeries, X: Sequence[TimeSeries], m: int, n: int) -> VarxFit:
    """Joint OLS of y_t on its own m lags plus n lags of every feature.

    The effective sample starts at max(m, n) and the residual variance is
    SSE over that row count, so it is directly comparable with (and never
    above) the same-sample autoregression's.
    """
    if m < 1 or n < 1:
        raise InvalidParams("lag orders m and n must be >= 1")
    _check_aligned(y, X)
    k = len(X)
    T = len(y)
    if T < m + k * n + MIN_EXTRA_OBS:
        raise TooShort(f"need at least {m + k * n + MIN_EXTRA_OBS} observations, got {T}")
    offset = max(m, n)
    t = np.arange(offset, T)
    cols = [np.ones(t.size)]
    cols.extend(y.values[t - j] for j in range(1, m + 1))
    for f in X:
        cols.extend(f.values[t - i] for i in range(1, n + 1))
    design = np.column_stack(cols)
    coef, sse, used_ridge = _solve_ols(design, y.values[t])
    return VarxFit(
        alpha=coef[1 : m + 1].copy(),
        beta=coef[m + 1 :].reshape(k, n).copy(),
        intercept=float(coef[0]),
        residual_variance=sse / (T - offset),
        m=m,
        n=n,
        nobs=T - offset,
        used_ridge=used_ridge,
    )


def causality(y: TimeSeries, f: TimeSeries, max_lag: int) -> CausalityScore:
    """Granger causality of f on y: per-lag normalized variance reduction.

    Both series are standardized first, so the score is invariant to affine
    rescaling of either input.  For each lag l the restricted model (AR on
    y's own max_lag lags) is compared against the same model plus f_{t-l},
    both fit on the identical row sample; the reduction counts toward the
    total only when its F-test is significant at SIGNIFICANCE_LEVEL.
    """
    if max_lag < 1:
        raise InvalidParams("max_lag must be >= 1")
    if f.start_date != y.start_date or len(f) != len(y):
        raise InvalidParams("series must be aligned; call align() first")
    T = len(y)
    m = max_lag
    # The unrestricted model has m+2 parameters on T-m rows; keep the
    # F-test denominator dof comfortably positive.
    if T < 2 * m + 2 + MIN_EXTRA_OBS:
        raise TooShort(f"need at least {2 * m + 2 + MIN_EXTRA_OBS} observations, got {T}")
    ys = standardize(y).values
    fs = standardize(f).values

    X_r, resp = _ar_design(ys, m, m)
    rows = resp.size
    _, sse_r, _ = _solve_ols(X_r, resp)

    per_lag: dict[int, float] = {}
    raw: dict[int, float] = {}
    pvalues: dict[int, float] = {}
    df_denom = rows - (m + 2)
    for lag in range(1, max_lag + 1):
        t = np.arange(m, T)
        X_u = np.column_stack([X_r, fs[t - lag]])
        _, sse_u, _ = _solve_ols(X_u, resp)
        if sse_r <= _TINY:
            # Restricted model already perfect; nothing left to explain.
            delta, p = 0.0, 1.0
        else:
            delta = max(0.0, (sse_r - sse_u) / sse_r)
            if sse_u <= _TINY:
                p = 0.0
            else:
                fstat = max(0.0, sse_r - sse_u) / (sse_u / df_denom)
                p = float(stats.f.sf(fstat, 1, df_denom))
        raw[lag] = delta
        pvalues[lag] = p
        per_lag[lag] = delta if p < SIGNIFICANCE_LEVEL else 0.0
    return CausalityScore(
        feature=f.name,
        target=y.name,
        per_lag=per_lag,
        raw_per_lag=raw,
        pvalues=pvalues,
        total=sum(per_lag.values()),
    )


def score_features(
    y: TimeSeries,
    features: Mapping[str, TimeSeries],
    max_lag: int,
    threads: int = 1,
) -> list[CausalityScore]:
    """Score every feature against one target, aligning each pair to its
    common date range first; deterministic order by name."""
    names = sorted(features)

    def one(name: str) -> CausalityScore:
        ya, fa = align(y, features[name].with_name(name))
        return causality(ya, fa, max_lag)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = dict(zip(names, ex.map(one, names)))
    else:
        results = {name: one(name) for name in names}
    return [results[name] for name in names]


@dataclass
class BipartiteCausalGraph:
    """Dense feature x target score matrix with an observed-entry mask."""

    features: list[str]
    targets: list[str]
    weights: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.weights.shape != (len(self.features), len(self.targets)):
            raise InvalidParams("weights shape must be |features| x |targets|")
        if self.mask.shape != self.weights.shape:
            raise InvalidParams("mask shape must match weights")

    @classmethod
    def from_scores(cls, scores: Iterable[CausalityScore]) -> "BipartiteCausalGraph":
        scores = list(scores)
        features = sorted({s.feature for s in scores})
        targets = sorted({s.target for s in scores})
        fi = {f: i for i, f in enumerate(features)}
        ti = {t: i for i, t in enumerate(targets)}
        w = np.zeros((len(features), len(targets)))
        m = np.zeros_like(w, dtype=bool)
        for s in scores:
            w[fi[s.feature], ti[s.target]] = s.total
            m[fi[s.feature], ti[s.target]] = True
        return cls(features, targets, w, m)

    def copy(self) -> "BipartiteCausalGraph":
        return BipartiteCausalGraph(
            list(self.features), list(self.targets), self.weights.copy(), self.mask.copy()
        )


def tfidf_prune(g: BipartiteCausalGraph, keep_frac: float, df_threshold: float = 0.0) -> BipartiteCausalGraph:
    """Down-weight promiscuous features and drop the weakest edges.

    Each observed edge is reweighted by log(|targets| / df) where df is the
    number of targets its feature connects to above ``df_threshold``; a
    feature linked to every target gets idf 0 and loses all its edges (the
    stop-word analogue).  Of the remaining edges the lowest (1 - keep_frac)
    fraction is removed.  Removed edges keep their observed flag with
    weight 0.

    A single-target graph passes through unchanged: with one target every
    feature trivially connects to all targets and idf carries no signal.
    """
    if not (0.0 < keep_frac <= 1.0):
        raise InvalidParams("keep_frac must be in (0, 1]")
    if len(g.targets) < 2:
        return g.copy()
    out = g.copy()
    nt = len(g.targets)
    df = ((g.weights > df_threshold) & g.mask).sum(axis=1)
    idf = np.where(df > 0, np.log(nt / np.maximum(df, 1)), 0.0)
    reweighted = out.weights * idf[:, None]

    edges = [
        (float(reweighted[i, j]), g.features[i], g.targets[j], i, j)
        for i in range(len(g.features))
        for j in range(nt)
        if g.mask[i, j]
    ]
    dead = [e for e in edges if e[0] <= 0.0]
    alive = sorted((e for e in edges if e[0] > 0.0), key=lambda e: (e[0], e[1], e[2]))
    n_drop = int(math.floor((1.0 - keep_frac) * len(edges)))
    n_drop = max(0, n_drop - len(dead))
    for _, _, _, i, j in dead + alive[:n_drop]:
        reweighted[i, j] = 0.0
    out.weights = np.where(out.mask, reweighted, 0.0)
    return out


def masked_nmf(
    X: np.ndarray,
    mask: np.ndarray,
    rank: int,
    iters: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Multiplicative-update NMF restricted to observed entries.

    Returns (W, H, objective history); the masked squared error
    0.5 * sum(mask * (X - WH)^2) is non-increasing per iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    M = np.asarray(mask, dtype=np.float64)
    nr, nc = X.shape
    if not (1 <= rank <= min(nr, nc)):
        raise InvalidRank(f"rank must be in [1, {min(nr, nc)}], got {rank}")
    if np.any(X[mask] < 0):
        raise InvalidParams("observed weights must be non-negative")
    rng = np.random.default_rng(seed)
    observed = X * M
    scale = math.sqrt(max(observed.sum() / max(M.sum(), 1.0), 0.0) / rank)
    scale = max(scale, 1e-8)
    W = rng.uniform(1e-8, scale, size=(nr, rank))
    H = rng.uniform(1e-8, scale, size=(rank, nc))

    history: list[float] = []
    for _ in range(iters):
        WH = W @ H
        W *= (observed @ H.T) / ((M * WH) @ H.T + _TINY)
        WH = W @ H
        H *= (W.T @ observed) / (W.T @ (M * WH) + _TINY)
        diff = M * (X - W @ H)
        history.append(0.5 * float((diff * diff).sum()))
    return W, H, history


def nmf_impute(g: BipartiteCausalGraph, rank: int, iters: int, seed: int = 0) -> BipartiteCausalGraph:
    """Fill missing score-matrix entries with a low-rank reconstruction.

    Observed entries are preserved exactly; the returned graph is fully
    observed.
    """
    W, H, _ = masked_nmf(g.weights, g.mask, rank, iters, seed)
    filled = g.weights.copy()
    recon = W @ H
    filled[~g.mask] = recon[~g.mask]
    return BipartiteCausalGraph(
        list(g.features), list(g.targets), filled, np.ones_like(g.mask, dtype=bool)
    )


def compose(g: BipartiteCausalGraph, target: str, k: int) -> Composition:
    """Top-k features for a target by score, ties broken by feature name."""
    if k < 1:
        raise InvalidParams("k must be >= 1")
    try:
        j = g.targets.index(target)
    except ValueError:
        raise UnknownTarget(f"target {target!r} not in graph") from None
    ranked = sorted(
        ((name, float(g.weights[i, j])) for i, name in enumerate(g.features)),
        key=lambda it: (-it[1], it[0]),
    )
    return Composition(target=target, selected=ranked[:k])


def write_scores_tsv(scores: Iterable[CausalityScore], path: str | Path) -> None:
    """One row per (feature, lag): feature, target, lag, raw delta, p, total."""
    lines = ["feature\ttarget\tlag\tdelta_var\tpvalue\ttotal"]
    for s in scores:
        for lag in sorted(s.per_lag):
            lines.append(
                f"{s.feature}\t{s.target}\t{lag}\t{s.raw_per_lag[lag]!r}"
                f"\t{s.pvalues[lag]!r}\t{s.total!r}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
