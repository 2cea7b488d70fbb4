"""Generate the bundled toy fixture: a small corpus, a target series the
corpus demonstrably drives, knowledge-base side files, and a ready config.

The target follows y_t = 0.5 y_{t-1} + 0.9 x_{t-2} + noise where x is the
daily document count of the phrase "tax cuts", so `score` finds tax_cuts
as the top causal feature and the explain commands can chain it back to
the target through the extracted tuples.

Usage: python3 -m causeway.demo OUTDIR [--seed N]
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
from pathlib import Path

import numpy as np

from .timeseries import TimeSeries, save_csv

START = dt.date(2013, 1, 1)
N_DAYS = 120

FILLER = [
    "markets open quietly and traders watch the boards",
    "analysts expect a calm session for acme",
    "weather stays mild across the coast",
    "local news covers the city council meeting",
    "commuters report longer delays downtown",
]

CAUSAL_SENTENCES = [
    "the party causes budget cuts",
    "budget cuts lead to tax cuts",
    "tax cuts cause acme",
    "rain causes floods",
    "floods force evacuation",
    "strong earnings lead to market gains",
    "scandals cause investor panic",
]

MENTION_TEMPLATES = [
    "senate debate heats up as tax cuts dominate the agenda",
    "congress moves the tax cuts bill forward tonight",
    "investors parse every detail of the tax cuts proposal",
    "late night hosts keep mocking the tax cuts plan",
]


def make_demo_data(outdir: str | Path, seed: int = 0) -> Path:
    """Write the fixture files under ``outdir`` and return the config path."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    # Bursty mention counts for "tax cuts": a handful of multi-day spikes.
    mentions = np.zeros(N_DAYS, dtype=int)
    for burst_start in range(6, N_DAYS - 6, 17):
        height = int(rng.integers(2, 6))
        for k in range(3):
            mentions[burst_start + k] = max(mentions[burst_start + k], height - k)

    y = np.zeros(N_DAYS)
    for t in range(N_DAYS):
        prev = y[t - 1] if t > 0 else 0.0
        x = mentions[t - 2] if t >= 2 else 0
        y[t] = 0.5 * prev + 0.9 * x + 0.05 * rng.normal()
    save_csv(TimeSeries(START, y + 20.0, "acme"), out / "target.csv")

    records = []
    for d in range(N_DAYS):
        date = (START + dt.timedelta(days=d)).isoformat()

        def rec(text: str, source: str = "news"):
            records.append({"date": date, "source": source, "text": text})

        rec(FILLER[d % len(FILLER)])
        rec(FILLER[(d + 2) % len(FILLER)], source="blog")
        for j in range(mentions[d]):
            rec(MENTION_TEMPLATES[(d + j) % len(MENTION_TEMPLATES)], "tweet")
        if d % 4 == 0:
            rec("fans cheer the game tonight, what a win for the city", "tweet")
        if mentions[d] > 2:
            rec("markets rally and traders feel happy about the gain", "tweet")
        if d % 9 == 0:
            rec("a sad day for the budget, heavy loss reported", "news")
        rec(CAUSAL_SENTENCES[d % len(CAUSAL_SENTENCES)] + ".", "news")
    with (out / "corpus.jsonl").open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")

    (out / "topics.tsv").write_text(
        "economy\ttax,budget,market,gain\nsports\tgame,fans,win\n", encoding="utf-8"
    )
    (out / "positive.txt").write_text("happy\ngain\nwin\nrally\n", encoding="utf-8")
    (out / "negative.txt").write_text("sad\nloss\npanic\n", encoding="utf-8")
    (out / "aliases.tsv").write_text(
        "acme\tacme,acme corp\nbudget cuts\tbudget cuts,cuts\n", encoding="utf-8"
    )
    (out / "kb_edges.tsv").write_text(
        "acme corp\tacme holdings\nacme holdings\tacme industries\n", encoding="utf-8"
    )

    config = f"""# causeway demo pipeline
seed = {seed}
out_dir = out
threads = 1

# tuples/eval_tuples/graph/model paths default to files under out_dir
paths.corpus = corpus.jsonl
paths.target = target.csv
paths.topics = topics.tsv
paths.lexicon_pos = positive.txt
paths.lexicon_neg = negative.txt
paths.aliases = aliases.tsv
paths.kb_edges = kb_edges.tsv

features.n_max = 2
features.min_freq = 5

granger.m = 3
granger.n = 3
granger.max_lag = 3
granger.k = 10

graph.max_degree = 100
graph.min_weight = 1.0

reasoning.target = acme
reasoning.d_max = 3
reasoning.epsilon = 0.05
reasoning.k = 3

train.direction = backward
train.epochs = 60
train.batch_size = 4
train.learning_rate = 0.02
train.hidden_size = 24
train.embed_size = 16
train.vocab_budget = 200

backtest.window_days = 30
backtest.stride_days = 10
backtest.steps = 1,3,5
backtest.features_per_method = 2

random.n_features = 8
random.window = 30
random.lag = 3
"""
    config_path = out / "config.txt"
    config_path.write_text(config, encoding="utf-8")
    return config_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("outdir")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    path = make_demo_data(args.outdir, args.seed)
    print(f"demo fixture written; config at {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
