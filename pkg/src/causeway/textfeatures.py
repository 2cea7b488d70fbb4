"""Textual feature extraction: n-gram / topic / sentiment day-by-day series
from a date-stamped corpus, plus the temporal-dynamics statistics used to
keep only spiking features.

Counting is document-level: a day's value is the number of documents that
day containing the n-gram (or any topic word) at least once.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import EmptyCorpus, InvalidParams, IoError, TooShort
from .timeseries import TimeSeries, save_csv

__all__ = [
    "Document",
    "DynamicsStats",
    "DynamicsPolicy",
    "FeatureSeries",
    "TopicSpec",
    "SentimentLexicon",
    "tokenize",
    "count_ngrams",
    "dynamics",
    "filter_features",
    "topic_series",
    "sentiment_series",
    "build_feature_set",
    "load_corpus",
    "load_topics",
    "load_lexicon",
    "write_feature_dir",
]

SOURCES = ("tweet", "news", "blog")

# A strict local maximum counts as a peak only if it reaches this fraction
# of the series maximum.
PEAK_FRAC = 0.1


@dataclass(frozen=True)
class Document:
    date: dt.date
    text: str
    source: str = "tweet"

    def __post_init__(self):
        if not self.text.strip():
            raise InvalidParams("document text is empty")
        if self.source not in SOURCES:
            raise InvalidParams(f"unknown source {self.source!r}")


@dataclass(frozen=True)
class DynamicsStats:
    entropy: float
    mean: float
    std: float
    max_slope: float
    n_peaks: int


@dataclass(frozen=True)
class DynamicsPolicy:
    """Retention thresholds; the defaults are vacuous (keep everything)."""

    entropy_lo: float = 0.0
    entropy_hi: float = 1.0
    mean_lo: float = 0.0
    std_lo: float = 0.0
    peaks_lo: int = 0
    slope_lo: float = 0.0

    def keeps(self, s: DynamicsStats) -> bool:
        return (
            self.entropy_lo <= s.entropy <= self.entropy_hi
            and s.mean >= self.mean_lo
            and s.std >= self.std_lo
            and s.n_peaks >= self.peaks_lo
            and s.max_slope >= self.slope_lo
        )


@dataclass(frozen=True)
class FeatureSeries:
    name: str
    kind: str  # word | topic | sentiment
    series: TimeSeries
    stats: DynamicsStats


@dataclass(frozen=True)
class TopicSpec:
    topic_id: str
    top_words: tuple[str, ...]

    def __post_init__(self):
        words = tuple(dict.fromkeys(w.lower() for w in self.top_words if w.strip()))
        if not words:
            raise InvalidParams(f"topic {self.topic_id!r} has no words")
        if len(words) > 10:
            raise InvalidParams(f"topic {self.topic_id!r} has more than 10 words")
        object.__setattr__(self, "top_words", words)


@dataclass(frozen=True)
class SentimentLexicon:
    positive: frozenset[str]
    negative: frozenset[str]

    def __post_init__(self):
        pos = frozenset(w.lower() for w in self.positive)
        neg = frozenset(w.lower() for w in self.negative)
        if pos & neg:
            raise InvalidParams(f"lexicon overlap: {sorted(pos & neg)[:5]}")
        if not pos and not neg:
            raise InvalidParams("lexicon is empty")
        object.__setattr__(self, "positive", pos)
        object.__setattr__(self, "negative", neg)


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on non-alphanumeric runs ('#' and '@' kept
    so hashtags and handles survive as single tokens)."""
    out: list[str] = []
    cur: list[str] = []
    for ch in text.lower():
        if ch.isalnum() or ch in "#@":
            cur.append(ch)
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


def _ngram_set(tokens: list[str], n_max: int) -> set[str]:
    grams = set(tokens)
    if n_max >= 2:
        grams.update(f"{a}_{b}" for a, b in zip(tokens, tokens[1:]))
    return grams


def _date_range(docs: list[Document]) -> tuple[dt.date, int]:
    start = min(d.date for d in docs)
    end = max(d.date for d in docs)
    return start, (end - start).days + 1


def count_ngrams(
    corpus: Iterable[Document], n_max: int = 2, min_freq: int = 5
) -> dict[str, TimeSeries]:
    """Day-by-day document counts per n-gram over the corpus date range.

    N-grams whose total count is below ``min_freq`` are dropped.
    """
    if n_max not in (1, 2):
        raise InvalidParams("n_max must be 1 or 2")
    if min_freq < 1:
        raise InvalidParams("min_freq must be >= 1")
    docs = list(corpus)
    if not docs:
        raise EmptyCorpus("no documents")
    start, n_days = _date_range(docs)
    counts: dict[str, dict[int, int]] = {}
    for doc in docs:
        day = (doc.date - start).days
        for gram in _ngram_set(tokenize(doc.text), n_max):
            per_day = counts.setdefault(gram, {})
            per_day[day] = per_day.get(day, 0) + 1
    out: dict[str, TimeSeries] = {}
    for gram in sorted(counts):
        per_day = counts[gram]
        if sum(per_day.values()) < min_freq:
            continue
        v = np.zeros(n_days)
        for day, c in per_day.items():
            v[day] = c
        out[gram] = TimeSeries(start, v, gram)
    return out


def dynamics(series: TimeSeries) -> DynamicsStats:
    """Temporal-dynamics summary: normalized entropy, sample mean/std,
    peak count, and steepest trough-to-peak slope.

    Entropy treats |v_i| / sum|v| as a distribution over days (identical to
    the plain formula for non-negative series, and defined for sentiment);
    the all-zero series has entropy 0.
    """
    if len(series) < 3:
        raise TooShort(f"need >= 3 observations, got {len(series)}")
    v = series.values
    mag = np.abs(v)
    total = mag.sum()
    if total == 0.0:
        entropy = 0.0
    else:
        p = mag / total
        p = p[p > 0]  # denormal magnitudes can underflow to 0 after division
        entropy = float(-(p * np.log(p)).sum() / math.log(len(series)))
    peaks = _peak_indices(v)
    return DynamicsStats(
        entropy=entropy,
        mean=float(v.mean()),
        std=float(v.std(ddof=1)),
        max_slope=_max_slope(v, peaks),
        n_peaks=len(peaks),
    )


def _peak_indices(v: np.ndarray) -> list[int]:
    mx = v.max()
    floor = PEAK_FRAC * mx
    return [
        i
        for i in range(1, v.size - 1)
        if v[i] > v[i - 1] and v[i] > v[i + 1] and v[i] >= floor
    ]


def _max_slope(v: np.ndarray, peaks: list[int]) -> float:
    best = 0.0
    prev_peak = 0
    for p in peaks:
        segment = v[prev_peak:p]
        # Nearest-to-peak argmin: ties resolve to the latest index, giving
        # the steepest (and deterministic) rise.
        rel = int(segment.size - 1 - np.argmin(segment[::-1]))
        trough = prev_peak + rel
        best = max(best, (float(v[p]) - float(v[trough])) / (p - trough))
        prev_peak = p
    return best


def filter_features(
    features: Mapping[str, FeatureSeries], policy: DynamicsPolicy
) -> dict[str, FeatureSeries]:
    """Keep features whose dynamics pass the policy; idempotent."""
    return {name: fs for name, fs in sorted(features.items()) if policy.keeps(fs.stats)}


def topic_series(
    corpus: Iterable[Document], topics: list[TopicSpec]
) -> dict[str, TimeSeries]:
    """Per-topic day-by-day count of documents containing >= 1 topic word."""
    if not topics:
        raise InvalidParams("topics must be non-empty")
    docs = list(corpus)
    if not docs:
        raise EmptyCorpus("no documents")
    start, n_days = _date_range(docs)
    out = {t.topic_id: np.zeros(n_days) for t in topics}
    for doc in docs:
        day = (doc.date - start).days
        grams = _ngram_set(tokenize(doc.text), 2)
        for t in topics:
            if any(w in grams for w in t.top_words):
                out[t.topic_id][day] += 1
    return {tid: TimeSeries(start, v, tid) for tid, v in sorted(out.items())}


def sentiment_series(
    corpus: Iterable[Document], topics: list[TopicSpec], lex: SentimentLexicon
) -> dict[str, TimeSeries]:
    """Per-topic daily sentiment: (positive - negative token hits) over the
    documents matching the topic, normalized by the matching-document count.
    Days without matching documents score 0.
    """
    docs = list(corpus)
    if not docs:
        raise EmptyCorpus("no documents")
    start, n_days = _date_range(docs)
    net = {t.topic_id: np.zeros(n_days) for t in topics}
    matched = {t.topic_id: np.zeros(n_days) for t in topics}
    for doc in docs:
        day = (doc.date - start).days
        tokens = tokenize(doc.text)
        grams = _ngram_set(tokens, 2)
        pos = sum(1 for tok in tokens if tok in lex.positive)
        neg = sum(1 for tok in tokens if tok in lex.negative)
        for t in topics:
            if any(w in grams for w in t.top_words):
                net[t.topic_id][day] += pos - neg
                matched[t.topic_id][day] += 1
    out: dict[str, TimeSeries] = {}
    for tid in sorted(net):
        v = net[tid] / np.maximum(matched[tid], 1.0)
        out[tid] = TimeSeries(start, v, tid)
    return out


def build_feature_set(
    corpus: Iterable[Document],
    topics: list[TopicSpec] | None = None,
    lexicon: SentimentLexicon | None = None,
    n_max: int = 2,
    min_freq: int = 5,
    policy: DynamicsPolicy | None = None,
) -> dict[str, FeatureSeries]:
    """Assemble word (+ topic + sentiment) features with dynamics stats,
    filtered by the policy when one is given.
    """
    docs = list(corpus)
    features: dict[str, FeatureSeries] = {}

    def add(name: str, kind: str, series: TimeSeries):
        features[name] = FeatureSeries(name, kind, series, dynamics(series))

    for gram, series in count_ngrams(docs, n_max, min_freq).items():
        add(gram, "word", series)
    if topics:
        for tid, series in topic_series(docs, topics).items():
            add(f"topic:{tid}", "topic", series)
        if lexicon is not None:
            for tid, series in sentiment_series(docs, topics, lexicon).items():
                add(f"senti:{tid}", "sentiment", series)
    if policy is not None:
        features = filter_features(features, policy)
    return dict(sorted(features.items()))


def load_corpus(path: str | Path) -> Iterator[Document]:
    """Stream a JSON-lines corpus of {date, source, text} records.

    Structurally bad records raise; records whose text is empty after
    trimming are skipped so corpus-scale runs never abort mid-batch.
    """
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                date = dt.date.fromisoformat(rec["date"])
                source = rec.get("source", "tweet")
                text = rec["text"]
            except (ValueError, KeyError, TypeError) as e:
                raise IoError(f"{path}:{lineno}: bad corpus record: {e}") from e
            if not str(text).strip():
                continue
            yield Document(date=date, text=str(text), source=source)


def load_topics(path: str | Path) -> list[TopicSpec]:
    """Read `topic_id<TAB>word1,word2,...` lines; words beyond the first
    ten are ignored."""
    path = Path(path)
    topics: list[TopicSpec] = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise IoError(f"{path}:{lineno}: expected topic_id<TAB>words")
        words = [w.strip() for w in parts[1].split(",") if w.strip()][:10]
        topics.append(TopicSpec(parts[0].strip(), tuple(words)))
    if not topics:
        raise IoError(f"{path}: no topics")
    return topics


def load_lexicon(pos_path: str | Path, neg_path: str | Path) -> SentimentLexicon:
    def words(p: str | Path) -> frozenset[str]:
        try:
            text = Path(p).read_text(encoding="utf-8")
        except OSError as e:
            raise IoError(f"cannot read {p}: {e}") from e
        return frozenset(w.strip().lower() for w in text.split() if w.strip())

    return SentimentLexicon(positive=words(pos_path), negative=words(neg_path))


def _safe_filename(name: str) -> str:
    return "".join(ch if (ch.isalnum() or ch in "_.-") else "-" for ch in name)


def write_feature_dir(features: Mapping[str, FeatureSeries], outdir: str | Path) -> None:
    """Per-feature CSVs plus a stats.tsv index."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["name\tkind\tfile\tentropy\tmean\tstd\tmax_slope\tn_peaks"]
    for i, name in enumerate(sorted(features)):
        fs = features[name]
        fname = f"{i:05d}__{_safe_filename(name)}.csv"
        save_csv(fs.series, outdir / fname)
        s = fs.stats
        lines.append(
            f"{name}\t{fs.kind}\t{fname}\t{s.entropy!r}\t{s.mean!r}\t{s.std!r}"
            f"\t{s.max_slope!r}\t{s.n_peaks}"
        )
    (outdir / "stats.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
