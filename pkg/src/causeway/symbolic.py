"""Backward causal inference over the cause-effect graph: breadth-first
search from the target over reversed edges, pruned by a Granger-confidence
gate, then top-k path assembly into explanation chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import InvalidParams, NoPathFound, TargetNotInGraph
from .granger import causality
from .graph import AliasTable, CausalTuple, CauseEffectGraph
from .timeseries import TimeSeries, align

__all__ = [
    "ReasoningConfig",
    "FrontierNode",
    "ExplanationChain",
    "CausalityOracle",
    "resolve_target",
    "backward_infer",
    "assemble_chains",
    "format_chain",
    "write_chains_tsv",
    "write_chains_dot",
]


@dataclass(frozen=True)
class ReasoningConfig:
    """Search-space restrictions for backward inference.

    ``max_frontier`` bounds the per-depth frontier (heaviest incoming edge
    first); note the truncation can break the "raising epsilon never grows
    a frontier" guarantee, which holds exactly only with the cap disabled
    (set it large for property checks).
    """

    d_max: int = 3
    epsilon: float = 0.0
    max_frontier: int = 200
    max_name_tokens: int = 8
    min_edge_weight: float = 0.0
    kb_hop_penalty: float = 0.0

    def __post_init__(self):
        if self.d_max < 0:
            raise InvalidParams("d_max must be >= 0")
        if self.epsilon < 0:
            raise InvalidParams("epsilon must be >= 0")
        if self.max_frontier < 1:
            raise InvalidParams("max_frontier must be >= 1")


@dataclass(frozen=True)
class FrontierNode:
    phrase: str
    granger_total: float
    scored: bool  # False when no series exists for the phrase


@dataclass
class ExplanationChain:
    """Linkage-valid sequence of hops from a source phrase to the target."""

    hops: list[CausalTuple]
    hop_scores: list[float]
    total_score: float

    def __post_init__(self):
        if not self.hops:
            raise InvalidParams("chain must have at least one hop")
        if len(self.hops) != len(self.hop_scores):
            raise InvalidParams("one score per hop required")
        for a, b in zip(self.hops, self.hops[1:]):
            if a.effect != b.cause:
                raise InvalidParams(f"broken linkage: {a.effect!r} -> {b.cause!r}")

    @property
    def source(self) -> str:
        return self.hops[0].cause

    @property
    def target(self) -> str:
        return self.hops[-1].effect

    @property
    def phrases(self) -> list[str]:
        return [h.cause for h in self.hops] + [self.hops[-1].effect]


class CausalityOracle:
    """Granger totals of graph phrases against a fixed target series.

    Phrases without a series cannot be scored; ``total`` returns 0 for them
    and ``has_series`` distinguishes the two cases.  Scores are cached.
    """

    def __init__(self, y: TimeSeries, series: Mapping[str, TimeSeries], max_lag: int = 3):
        self.y = y
        self.series = dict(series)
        self.max_lag = max_lag
        self._cache: dict[str, float] = {}

    def has_series(self, phrase: str) -> bool:
        return phrase in self.series

    def total(self, phrase: str) -> float:
        if phrase not in self.series:
            return 0.0
        if phrase not in self._cache:
            ya, fa = align(self.y, self.series[phrase])
            self._cache[phrase] = causality(ya, fa, self.max_lag).total
        return self._cache[phrase]


def resolve_target(
    g: CauseEffectGraph, phrase: str, aliases: AliasTable | None = None
) -> str:
    """Map a target phrase onto a graph node by exact match, then alias."""
    from .graph import normalize_phrase

    node = normalize_phrase(phrase)
    if node in g:
        return node
    if aliases is not None:
        for entity in sorted(aliases.names):
            pool = {normalize_phrase(entity)} | {
                normalize_phrase(n) for n in aliases.names[entity]
            }
            if node in pool:
                for cand in sorted(pool):
                    if cand in g:
                        return cand
    raise TargetNotInGraph(f"target {phrase!r} not linkable to any graph node")


def backward_infer(
    g: CauseEffectGraph,
    target: str,
    y: TimeSeries,
    oracle: CausalityOracle,
    cfg: ReasoningConfig,
) -> list[list[FrontierNode]]:
    """Depth-layered backward search from the target.

    Depth 0 is the target itself; each step expands backward neighbors of
    the frontier, drops nodes failing the name-length / edge-weight
    restrictions, and keeps a node only if its Granger total against the
    target reaches ``cfg.epsilon`` (nodes without a series are kept
    unscored).  Stops at an empty frontier or depth ``d_max``.
    """
    del y  # the oracle already closes over the target series
    if target not in g:
        raise TargetNotInGraph(f"target {target!r} not in graph")
    frontiers = [[FrontierNode(target, oracle.total(target), oracle.has_series(target))]]
    visited = {target}
    for _ in range(cfg.d_max):
        best_weight: dict[str, float] = {}
        for node in frontiers[-1]:
            idx = g.index[node.phrase]
            for cause_id, _, _, w in g.backward[idx]:
                cause = g.phrases[cause_id]
                if cause in visited:
                    continue
                if w < cfg.min_edge_weight:
                    continue
                if cause.count("_") + 1 > cfg.max_name_tokens:
                    continue
                if w > best_weight.get(cause, -1.0):
                    best_weight[cause] = w
        retained: list[tuple[float, FrontierNode]] = []
        for cause in best_weight:
            scored = oracle.has_series(cause)
            total = oracle.total(cause)
            if scored and total < cfg.epsilon:
                continue
            retained.append((best_weight[cause], FrontierNode(cause, total, scored)))
        retained.sort(key=lambda it: (-it[0], it[1].phrase))
        frontier = [node for _, node in retained[: cfg.max_frontier]]
        if not frontier:
            break
        visited.update(n.phrase for n in frontier)
        frontiers.append(frontier)
    return frontiers


def _best_edge(
    g: CauseEffectGraph, u: int, v: int, min_weight: float
) -> tuple[int, int, float] | None:
    """Heaviest admissible edge u -> v (relation/frame ids); parallel edges
    never multiply paths."""
    best = None
    for dst, r, fr, w in g.forward[u]:
        if dst != v or w < min_weight:
            continue
        key = (-w, g.relations[r], g.frames[fr])
        if best is None or key < best[0]:
            best = (key, r, fr, w)
    if best is None:
        return None
    return best[1], best[2], best[3]


def assemble_chains(
    frontiers: list[list[FrontierNode]],
    g: CauseEffectGraph,
    source: str,
    target: str,
    k: int,
    cfg: ReasoningConfig = ReasoningConfig(),
    max_expansions: int = 200_000,
) -> list[ExplanationChain]:
    """Top-k simple forward paths source -> target through retained nodes.

    Paths may use up to ``cfg.d_max`` hops (pass the same cfg given to
    backward_infer); they can be longer than a node's BFS depth since the
    layering records shortest backward distances only.  A path scores the
    sum over hops of log(1 + weight) (minus the KB-hop penalty on
    ``related_to`` edges) plus the Granger total of every node except the
    target.  Ties prefer shorter, then lexicographically smaller, paths.
    """
    if k < 1:
        raise InvalidParams("k must be >= 1")
    retained: dict[str, FrontierNode] = {}
    for layer in frontiers:
        for node in layer:
            retained.setdefault(node.phrase, node)
    if source not in retained or target not in retained:
        raise NoPathFound(f"no retained path from {source!r} to {target!r}")
    max_hops = max(1, cfg.d_max)

    paths: list[tuple[float, int, tuple[str, ...]]] = []
    budget = [max_expansions]

    def dfs(node: str, path: list[str], score: float):
        if budget[0] <= 0:
            return
        budget[0] -= 1
        if node == target:
            paths.append((score, len(path) - 1, tuple(path)))
            return
        if len(path) - 1 >= max_hops:
            return
        u = g.index[node]
        seen = set(path)
        for v_id, _, _, w in g.forward[u]:
            v = g.phrases[v_id]
            if v in seen or v not in retained:
                continue
            edge = _best_edge(g, u, v_id, cfg.min_edge_weight)
            if edge is None:
                continue
            _, fr_id, ew = edge
            hop = math.log1p(ew)
            if g.frames[fr_id] in ("kb_kb", "kb_cross"):
                hop -= cfg.kb_hop_penalty
            node_score = retained[node].granger_total if retained[node].scored else 0.0
            dfs(v, path + [v], score + hop + node_score)

    dfs(source, [source], 0.0)
    if not paths:
        raise NoPathFound(f"no path from {source!r} to {target!r} within {max_hops} hops")
    paths.sort(key=lambda it: (-it[0], it[1], it[2]))

    chains: list[ExplanationChain] = []
    for score, _, phrases in paths[:k]:
        hops: list[CausalTuple] = []
        hop_scores: list[float] = []
        for a, b in zip(phrases, phrases[1:]):
            u, v = g.index[a], g.index[b]
            r_id, fr_id, w = _best_edge(g, u, v, cfg.min_edge_weight)
            hops.append(
                CausalTuple(a, g.relations[r_id], g.frames[fr_id], b, w)
            )
            hop = math.log1p(w)
            if g.frames[fr_id] in ("kb_kb", "kb_cross"):
                hop -= cfg.kb_hop_penalty
            node = retained[a]
            hop += node.granger_total if node.scored else 0.0
            hop_scores.append(hop)
        chains.append(ExplanationChain(hops, hop_scores, sum(hop_scores)))
    return chains


def format_chain(chain: ExplanationChain) -> str:
    parts = [chain.hops[0].cause]
    for hop in chain.hops:
        parts.append(f"--{hop.relation}--> {hop.effect}")
    return " ".join(parts)


def write_chains_tsv(chains: list[ExplanationChain], path: str | Path) -> None:
    lines = ["chain\thop\tcause\trelation\tframe\teffect\tweight\thop_score\ttotal_score"]
    for ci, chain in enumerate(chains):
        for hi, (hop, score) in enumerate(zip(chain.hops, chain.hop_scores)):
            lines.append(
                f"{ci}\t{hi}\t{hop.cause}\t{hop.relation}\t{hop.frame}\t{hop.effect}"
                f"\t{hop.weight!r}\t{score!r}\t{chain.total_score!r}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_chains_dot(chains: list[ExplanationChain], path: str | Path) -> None:
    """Render the union of chain edges as a DOT digraph."""
    seen: set[tuple[str, str, str]] = set()
    lines = ["digraph chains {", "  rankdir=LR;"]
    for chain in chains:
        for hop in chain.hops:
            key = (hop.cause, hop.relation, hop.effect)
            if key in seen:
                continue
            seen.add(key)
            lines.append(
                f'  "{hop.cause}" -> "{hop.effect}" [label="{hop.relation}"];'
            )
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
