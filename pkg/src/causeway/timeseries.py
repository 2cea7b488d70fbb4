"""Daily-resolution time series: alignment, lag views, standardization,
and the parametric spike generator used by the random causality analysis.

A series is a dense run of daily values anchored at a start date; index i
always means ``start_date + i`` days.  Values are immutable after
construction so series can be shared freely across threads.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParams, IoError, NoOverlap, TooShort

__all__ = [
    "TimeSeries",
    "LagView",
    "SpikeParams",
    "align",
    "generate_spike",
    "standardize",
    "load_csv",
    "save_csv",
]

_DAY = dt.timedelta(days=1)


@dataclass(frozen=True)
class TimeSeries:
    """Gap-free daily series anchored at ``start_date``."""

    start_date: dt.date
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidParams(f"series {self.name!r} must be a non-empty 1-d array")
        if not np.all(np.isfinite(arr)):
            raise InvalidParams(f"series {self.name!r} contains non-finite values")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    @property
    def end_date(self) -> dt.date:
        """Date of the last observation (inclusive)."""
        return self.start_date + (len(self) - 1) * _DAY

    def date_of(self, index: int) -> dt.date:
        return self.start_date + index * _DAY

    def index_of(self, date: dt.date) -> int:
        return (date - self.start_date).days

    def slice(self, start: int, stop: int, name: str | None = None) -> "TimeSeries":
        if not (0 <= start < stop <= len(self)):
            raise InvalidParams(f"slice [{start}:{stop}) out of range for length {len(self)}")
        return TimeSeries(
            start_date=self.date_of(start),
            values=self.values[start:stop],
            name=self.name if name is None else name,
        )

    def with_name(self, name: str) -> "TimeSeries":
        return TimeSeries(self.start_date, self.values, name)


@dataclass(frozen=True)
class LagView:
    """A (lag, order) window onto a series: rows t use values t-lag-1 .. t-lag-order."""

    series: TimeSeries
    lag: int
    order: int

    def __post_init__(self):
        if self.lag < 0 or self.order < 1:
            raise InvalidParams("lag must be >= 0 and order >= 1")
        if self.lag + self.order >= len(self.series):
            raise InvalidParams(
                f"lag {self.lag} + order {self.order} must be < series length {len(self.series)}"
            )

    def matrix(self, offset: int) -> np.ndarray:
        """Lagged design columns for rows t = offset..T-1.

        Column j (j = 0..order-1) holds value at t - lag - 1 - j, so the
        most recent admissible observation comes first.
        """
        v = self.series.values
        t = np.arange(offset, v.size)
        cols = [v[t - self.lag - 1 - j] for j in range(self.order)]
        return np.column_stack(cols)

    @property
    def min_offset(self) -> int:
        return self.lag + self.order


@dataclass(frozen=True)
class SpikeParams:
    """Linear-rise / power-law-decay peak: a minimal parametric spike."""

    onset: int
    strength: float
    rise_days: int = 1
    decay_exponent: float = 1.0

    def __post_init__(self):
        if self.strength < 0:
            raise InvalidParams("strength must be >= 0")
        if self.decay_exponent <= 0:
            raise InvalidParams("decay_exponent must be > 0")
        if self.rise_days < 1:
            raise InvalidParams("rise_days must be >= 1")


def align(a: TimeSeries, b: TimeSeries) -> tuple[TimeSeries, TimeSeries]:
    """Restrict both series to their common date range.

    Raises NoOverlap unless the intersection covers at least 2 days.
    """
    start = max(a.start_date, b.start_date)
    end = min(a.end_date, b.end_date)
    n = (end - start).days + 1
    if n < 2:
        raise NoOverlap(
            f"series {a.name!r} ({a.start_date}..{a.end_date}) and {b.name!r} "
            f"({b.start_date}..{b.end_date}) overlap by {max(n, 0)} days"
        )
    ia = a.index_of(start)
    ib = b.index_of(start)
    return a.slice(ia, ia + n), b.slice(ib, ib + n)


def generate_spike(
    length: int,
    params: SpikeParams,
    seed: int = 0,
    start_date: dt.date = dt.date(2000, 1, 1),
    name: str = "spike",
) -> TimeSeries:
    """Synthesize a single-peak series: zero, linear rise to ``strength`` at
    ``onset``, then decay as strength * (t - onset + 1) ** -decay_exponent.

    The shape is fully determined by ``params``; ``seed`` is accepted for
    interface uniformity with the random-analysis driver and unused here.
    """
    del seed
    if not (0 <= params.onset < length):
        raise InvalidParams(f"onset {params.onset} outside series of length {length}")
    v = np.zeros(length, dtype=np.float64)
    onset, s = params.onset, params.strength
    for d in range(1, params.rise_days + 1):
        i = onset - d
        if i < 0:
            break
        v[i] = s * (1.0 - d / params.rise_days)
    t = np.arange(onset, length)
    v[onset:] = s * (t - onset + 1.0) ** (-params.decay_exponent)
    return TimeSeries(start_date, v, name)


def standardize(s: TimeSeries) -> TimeSeries:
    """Center and scale to sample std 1.  Constant series map to all-zeros
    so batch pipelines over thousands of features never abort mid-run.
    """
    if len(s) < 2:
        raise TooShort(f"series {s.name!r} has length {len(s)} < 2")
    v = s.values
    centered = v - v.mean()
    # Second pass kills the cancellation residue on near-constant series
    # with large offsets; without it idempotence only holds to ~|mean|*eps/std.
    centered -= centered.mean()
    sd = centered.std(ddof=1)
    if sd == 0.0:
        out = np.zeros_like(v)
    else:
        out = centered / sd
    return TimeSeries(s.start_date, out, s.name)


def load_csv(path: str | Path, name: str | None = None) -> TimeSeries:
    """Load a `date,value` CSV (ISO-8601 dates, one row per day).

    Gaps and duplicate days are rejected outright.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    rows = list(csv.reader(raw.splitlines()))
    if not rows or [c.strip() for c in rows[0][:2]] != ["date", "value"]:
        raise IoError(f"{path}: expected header 'date,value'")
    dates: list[dt.date] = []
    values: list[float] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            dates.append(dt.date.fromisoformat(row[0].strip()))
            values.append(float(row[1]))
        except (ValueError, IndexError) as e:
            raise IoError(f"{path}:{lineno}: bad row {row!r}") from e
    if not dates:
        raise IoError(f"{path}: no data rows")
    for prev, cur in zip(dates, dates[1:]):
        if (cur - prev).days != 1:
            raise IoError(f"{path}: gap or disorder between {prev} and {cur}")
    return TimeSeries(dates[0], np.asarray(values), name if name is not None else path.stem)


def save_csv(s: TimeSeries, path: str | Path) -> None:
    path = Path(path)
    lines = ["date,value"]
    for i, v in enumerate(s.values):
        lines.append(f"{s.date_of(i).isoformat()},{float(v)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
