"""Neural backward chain generation: iteratively predict predecessor
phrases with the backward-direction model until one has high enough
Granger confidence with the target."""

from __future__ import annotations

import math
from typing import Callable

from ..errors import InvalidParams, NoChainFound
from ..graph import CausalTuple
from ..symbolic import CausalityOracle, ExplanationChain, ReasoningConfig
from ..timeseries import TimeSeries
from .model import Seq2SeqModel, beam_decode

__all__ = ["neural_backward_chain"]


def neural_backward_chain(
    model_back: Seq2SeqModel,
    target: str,
    y: TimeSeries,
    oracle: CausalityOracle,
    cfg: ReasoningConfig,
    beam_k: int = 5,
    hypothesis_filter: Callable[[tuple[str, ...]], bool] | None = None,
) -> ExplanationChain:
    """Decode predecessors of the target until the Granger gate passes.

    At each depth every relation is decoded with beam ``beam_k``; the best
    scoreable candidate passing ``cfg.epsilon`` ends the chain, otherwise
    the best candidate overall extends it.  Stops at gate success, depth
    ``cfg.d_max``, or an all-end-of-sequence beam.
    """
    del y  # the oracle closes over the target series
    if model_back.direction != "backward":
        raise InvalidParams("chain generation needs a backward-direction model")
    cur = target
    visited = {target}
    hops: list[CausalTuple] = []
    hop_scores: list[float] = []
    for _ in range(cfg.d_max):
        candidates: list[tuple[float, str, str]] = []
        for relation in model_back.vocab.id2rel:
            result = beam_decode(
                model_back,
                cur.split("_"),
                relation,
                beam_k,
                hypothesis_filter=hypothesis_filter,
            )
            for tokens, logp in result.hypotheses:
                if not tokens:
                    continue
                phrase = "_".join(tokens)
                if phrase in visited or len(tokens) > cfg.max_name_tokens:
                    continue
                candidates.append((logp, phrase, relation))
        if not candidates:
            break
        candidates.sort(key=lambda it: (-it[0], it[1], it[2]))
        chosen = None
        gated = False
        for logp, phrase, relation in candidates:
            if oracle.has_series(phrase) and oracle.total(phrase) >= cfg.epsilon:
                chosen = (logp, phrase, relation)
                gated = True
                break
        if chosen is None:
            chosen = candidates[0]
        logp, phrase, relation = chosen
        hops.insert(0, CausalTuple(phrase, relation, "neural", cur, max(math.exp(logp), 1e-12)))
        hop_scores.insert(0, logp)
        visited.add(phrase)
        cur = phrase
        if gated:
            break
    if not hops:
        raise NoChainFound(f"no predecessor chain found for {target!r}")
    return ExplanationChain(hops, hop_scores, sum(hop_scores))
