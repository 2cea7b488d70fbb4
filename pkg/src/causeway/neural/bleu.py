"""BLEU scoring for short generated phrases.

Graph phrases are usually under four tokens, so orders >= 2 use add-one
smoothing ((matches+1)/(total+1)); unigram precision stays raw so disjoint
candidate/reference pairs score exactly 0.  Scores are on the 0..100 scale.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from ..errors import InvalidParams
from .model import BeamResult

__all__ = ["bleu", "bleu_at_k"]


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str], reference: Sequence[str], max_ngram: int = 4) -> float:
    """Smoothed sentence BLEU in [0, 100].

    Geometric mean of clipped n-gram precisions up to ``max_ngram`` with a
    brevity penalty; orders with no candidate n-grams contribute the
    smoothed value (0+1)/(0+1) = 1.
    """
    if max_ngram < 1:
        raise InvalidParams("max_ngram must be >= 1")
    if not reference:
        raise InvalidParams("reference must be non-empty")
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_ngram + 1):
        cand = _ngram_counts(candidate, n)
        ref = _ngram_counts(reference, n)
        total = sum(cand.values())
        matches = sum(min(c, ref[g]) for g, c in cand.items())
        if n == 1:
            if matches == 0:
                return 0.0
            p = matches / total
        else:
            p = (matches + 1.0) / (total + 1.0)
        log_sum += math.log(p)
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(log_sum / max_ngram)


def bleu_at_k(
    predictions: BeamResult, reference: Sequence[str], max_ngram: int = 4
) -> tuple[float, float]:
    """(BLEU of the top hypothesis, mean BLEU over all k hypotheses)."""
    if not predictions.hypotheses:
        return 0.0, 0.0
    scores = [bleu(list(toks), reference, max_ngram) for toks, _ in predictions.hypotheses]
    return scores[0], sum(scores) / len(scores)
