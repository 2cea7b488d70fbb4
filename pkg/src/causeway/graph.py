"""Cause-effect graph: build from causal tuples, filter noise, expand with
knowledge-base aliases, traverse, and persist bit-exactly.

Nodes are interned lowercase phrases (tokens joined by ``_``); every
forward edge (cause -> effect) has an exact backward twin so cause-side
search is a plain adjacency walk.
"""

from __future__ import annotations

import hashlib
import io
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import CorruptFile, EmptyGraph, InvalidParams, IoError, UnknownNode
from .textfeatures import Document, tokenize

__all__ = [
    "CausalTuple",
    "GraphFilter",
    "CauseEffectGraph",
    "AliasTable",
    "KbEdge",
    "Pattern",
    "DEFAULT_PATTERNS",
    "extract_tuples",
    "build",
    "expand_kb",
    "neighbors",
    "save",
    "load",
    "load_tuples",
    "save_tuples",
    "load_aliases",
    "load_kb_edges",
    "load_patterns",
]

KB_RELATION = "related_to"

_SENTENCE_SPLIT = re.compile(r"[.!?;\n]+")


def normalize_phrase(phrase: str) -> str:
    """Canonical node form: lowercase tokens joined by underscores."""
    return "_".join(tokenize(phrase.replace("_", " ")))


@dataclass(frozen=True)
class CausalTuple:
    cause: str
    relation: str
    frame: str
    effect: str
    weight: float = 1.0
    provenance: str = ""

    def __post_init__(self):
        if not self.cause or not self.effect:
            raise InvalidParams("cause and effect phrases must be non-empty")
        if self.cause == self.effect:
            raise InvalidParams(f"self-loop tuple {self.cause!r}")
        if self.weight <= 0:
            raise InvalidParams("weight must be > 0")


@dataclass(frozen=True)
class GraphFilter:
    """Noise filters applied at build time; the paper names the filter
    kinds but not their values, so these defaults live in config."""

    max_degree: int = 1000
    min_tokens: int = 1
    max_tokens: int = 8
    min_weight: float = 1.0


@dataclass(frozen=True)
class Pattern:
    lexemes: tuple[str, ...]  # token sequence, e.g. ("lead", "to")
    frame: str


DEFAULT_PATTERNS: tuple[Pattern, ...] = tuple(
    Pattern(tuple(lex.split()), frame)
    for lex, frame in [
        ("cause", "Causation"),
        ("causes", "Causation"),
        ("caused", "Causation"),
        ("causing", "Causation"),
        ("force", "Causation"),
        ("forces", "Causation"),
        ("forced", "Causation"),
        ("make", "Causation"),
        ("makes", "Causation"),
        ("made", "Causation"),
        ("lead to", "Causation"),
        ("leads to", "Causation"),
        ("led to", "Causation"),
        ("result in", "Causation"),
        ("results in", "Causation"),
        ("resulted in", "Causation"),
        ("promotes", "Cause_change_of_position_on_a_scale"),
        ("improve", "Cause_to_make_progress"),
        ("improves", "Cause_to_make_progress"),
        ("developing", "Cause_to_make_progress"),
        ("attracts", "Cause_motion"),
        ("draws", "Cause_motion"),
        ("heats", "Cause_temperature_change"),
    ]
)


class CauseEffectGraph:
    """Immutable directed multigraph over interned phrases.

    ``forward[u]`` lists (dst, rel_id, frame_id, weight) for edges u -> dst;
    ``backward`` is the exact transpose.  Node/relation/frame ids are dense
    and assigned in sorted order, so equal edge sets build equal graphs.
    """

    def __init__(self, edges: dict[tuple[str, str, str, str], float]):
        if not edges:
            raise EmptyGraph("graph has no edges")
        phrases = sorted({c for c, _, _, _ in edges} | {e for _, _, _, e in edges})
        relations = sorted({r for _, r, _, _ in edges})
        frames = sorted({fr for _, _, fr, _ in edges})
        self.phrases: list[str] = phrases
        self.relations: list[str] = relations
        self.frames: list[str] = frames
        self.index: dict[str, int] = {p: i for i, p in enumerate(phrases)}
        rid = {r: i for i, r in enumerate(relations)}
        fid = {f: i for i, f in enumerate(frames)}
        n = len(phrases)
        self.forward: list[list[tuple[int, int, int, float]]] = [[] for _ in range(n)]
        self.backward: list[list[tuple[int, int, int, float]]] = [[] for _ in range(n)]
        for (c, r, fr, e) in sorted(edges):
            w = edges[(c, r, fr, e)]
            u, v = self.index[c], self.index[e]
            self.forward[u].append((v, rid[r], fid[fr], w))
            self.backward[v].append((u, rid[r], fid[fr], w))
        self.n_edges = len(edges)

    def __contains__(self, phrase: str) -> bool:
        return phrase in self.index

    @property
    def n_nodes(self) -> int:
        return len(self.phrases)

    def degree(self, phrase: str) -> int:
        i = self.index[phrase]
        return len(self.forward[i]) + len(self.backward[i])

    def edge_tuples(self) -> Iterator[CausalTuple]:
        """All edges as causal tuples (cause -> effect direction)."""
        for u, adj in enumerate(self.forward):
            for v, r, fr, w in adj:
                yield CausalTuple(
                    cause=self.phrases[u],
                    relation=self.relations[r],
                    frame=self.frames[fr],
                    effect=self.phrases[v],
                    weight=w,
                )

    def serialize(self) -> bytes:
        buf = io.BytesIO()
        buf.write(b"CWGR")
        buf.write(struct.pack("<H", 1))
        buf.write(
            struct.pack(
                "<IIIQ", self.n_nodes, len(self.relations), len(self.frames), self.n_edges
            )
        )
        for table in (self.phrases, self.relations, self.frames):
            for s in table:
                raw = s.encode("utf-8")
                buf.write(struct.pack("<I", len(raw)))
                buf.write(raw)
        indptr = [0]
        for adj in self.forward:
            indptr.append(indptr[-1] + len(adj))
        buf.write(struct.pack(f"<{len(indptr)}Q", *indptr))
        for adj in self.forward:
            for v, r, fr, w in adj:
                buf.write(struct.pack("<IIId", v, r, fr, w))
        payload = buf.getvalue()
        return payload + hashlib.sha256(payload).digest()

    def digest(self) -> str:
        return hashlib.sha256(self.serialize()).hexdigest()


def extract_tuples(
    corpus: Iterable[Document],
    patterns: Sequence[Pattern] = DEFAULT_PATTERNS,
    max_phrase_len: int = 8,
) -> Iterator[CausalTuple]:
    """Pattern extraction of `<cause> <causative-verb> <effect>` sentences.

    The relation lexeme is the matched surface form; cause keeps its last
    ``max_phrase_len`` tokens and effect its first.  Exact duplicates are
    merged with summed weights; degenerate matches (empty span, cause ==
    effect) are skipped so corpus runs never abort.
    """
    if not patterns:
        raise InvalidParams("patterns must be non-empty")
    by_first: dict[str, list[Pattern]] = {}
    for p in patterns:
        by_first.setdefault(p.lexemes[0], []).append(p)
    for first in by_first:
        by_first[first].sort(key=lambda p: -len(p.lexemes))

    merged: dict[tuple[str, str, str, str], float] = {}
    for doc in corpus:
        for sentence in _SENTENCE_SPLIT.split(doc.text):
            tokens = tokenize(sentence)
            hit = None
            for i, tok in enumerate(tokens):
                for p in by_first.get(tok, ()):
                    if tuple(tokens[i : i + len(p.lexemes)]) == p.lexemes:
                        hit = (i, p)
                        break
                if hit:
                    break
            if not hit:
                continue
            i, p = hit
            cause_toks = tokens[:i][-max_phrase_len:]
            effect_toks = tokens[i + len(p.lexemes) :][:max_phrase_len]
            if not cause_toks or not effect_toks:
                continue
            cause = "_".join(cause_toks)
            effect = "_".join(effect_toks)
            if cause == effect:
                continue
            key = (cause, " ".join(p.lexemes), p.frame, effect)
            merged[key] = merged.get(key, 0.0) + 1.0
    for (c, r, fr, e) in sorted(merged):
        yield CausalTuple(c, r, fr, e, merged[(c, r, fr, e)])


def build(tuples: Iterable[CausalTuple], filt: GraphFilter = GraphFilter()) -> CauseEffectGraph:
    """Merge tuples into a graph and strip noise.

    Duplicate edges merge with summed weights; phrases outside the token
    bounds, underweight edges, and nodes above ``max_degree`` (stop-word
    hubs) are removed.  The result is independent of input order.
    """
    merged: dict[tuple[str, str, str, str], float] = {}
    for t in tuples:
        cause = normalize_phrase(t.cause)
        effect = normalize_phrase(t.effect)
        if not cause or not effect or cause == effect:
            continue
        if not (filt.min_tokens <= cause.count("_") + 1 <= filt.max_tokens):
            continue
        if not (filt.min_tokens <= effect.count("_") + 1 <= filt.max_tokens):
            continue
        key = (cause, t.relation, t.frame, effect)
        merged[key] = merged.get(key, 0.0) + t.weight

    merged = {k: w for k, w in merged.items() if w >= filt.min_weight}
    degree: dict[str, int] = {}
    for (c, _, _, e) in merged:
        degree[c] = degree.get(c, 0) + 1
        degree[e] = degree.get(e, 0) + 1
    hubs = {p for p, d in degree.items() if d > filt.max_degree}
    surviving = {
        k: w for k, w in merged.items() if k[0] not in hubs and k[3] not in hubs
    }
    if not surviving:
        raise EmptyGraph("no edges survive the filters")
    return CauseEffectGraph(surviving)


@dataclass(frozen=True)
class AliasTable:
    names: dict[str, tuple[str, ...]]  # canonical entity -> lexical names


@dataclass(frozen=True)
class KbEdge:
    src: str
    dst: str
    kind: str = "kb_kb"


def expand_kb(
    g: CauseEffectGraph, aliases: AliasTable, kb_edges: Iterable[KbEdge]
) -> CauseEffectGraph:
    """Add entity-entity edges and exact-lexical-match cross links.

    Cross links go in both directions (lexical identity is symmetric);
    entity-entity edges keep the file's direction.  All carry relation
    ``related_to`` with weight 1; the edge kind lives in the frame field.
    """
    edges = {(t.cause, t.relation, t.frame, t.effect): t.weight for t in g.edge_tuples()}

    def put(c: str, e: str, frame: str):
        if c and e and c != e:
            key = (c, KB_RELATION, frame, e)
            edges.setdefault(key, 1.0)

    for kb in kb_edges:
        put(normalize_phrase(kb.src), normalize_phrase(kb.dst), "kb_kb")
    for entity in sorted(aliases.names):
        canon = normalize_phrase(entity)
        for name in aliases.names[entity]:
            node = normalize_phrase(name)
            if node in g and node != canon:
                put(canon, node, "kb_cross")
                put(node, canon, "kb_cross")
    return CauseEffectGraph(edges)


def neighbors(
    g: CauseEffectGraph, node: str, direction: str
) -> list[tuple[str, str, str, float]]:
    """Adjacent (phrase, relation, frame, weight) rows, heaviest first.

    ``backward`` lists the causes of ``node``; ``forward`` its effects.
    Ties order lexicographically by phrase, then relation.
    """
    if direction not in ("forward", "backward"):
        raise InvalidParams(f"direction must be forward or backward, got {direction!r}")
    if node not in g.index:
        raise UnknownNode(f"node {node!r} not in graph")
    adj = (g.forward if direction == "forward" else g.backward)[g.index[node]]
    rows = [
        (g.phrases[v], g.relations[r], g.frames[fr], w) for v, r, fr, w in adj
    ]
    rows.sort(key=lambda row: (-row[3], row[0], row[1], row[2]))
    return rows


def save(g: CauseEffectGraph, path: str | Path) -> None:
    try:
        Path(path).write_bytes(g.serialize())
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load(path: str | Path) -> CauseEffectGraph:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if len(blob) < 32 + 22:
        raise CorruptFile(f"{path}: truncated")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptFile(f"{path}: digest mismatch")
    buf = io.BytesIO(payload)

    def take(fmt: str):
        size = struct.calcsize(fmt)
        raw = buf.read(size)
        if len(raw) != size:
            raise CorruptFile(f"{path}: truncated record")
        return struct.unpack(fmt, raw)

    if buf.read(4) != b"CWGR":
        raise CorruptFile(f"{path}: bad magic")
    (version,) = take("<H")
    if version != 1:
        raise CorruptFile(f"{path}: unsupported version {version}")
    n_nodes, n_rel, n_frames, n_edges = take("<IIIQ")
    if n_edges == 0:
        raise EmptyGraph(f"{path}: graph file has no edges")

    def read_table(count: int) -> list[str]:
        out = []
        for _ in range(count):
            (length,) = take("<I")
            raw = buf.read(length)
            if len(raw) != length:
                raise CorruptFile(f"{path}: truncated string")
            out.append(raw.decode("utf-8"))
        return out

    phrases = read_table(n_nodes)
    relations = read_table(n_rel)
    frames = read_table(n_frames)
    indptr = take(f"<{n_nodes + 1}Q")
    if indptr[-1] != n_edges:
        raise CorruptFile(f"{path}: inconsistent edge count")
    edges: dict[tuple[str, str, str, str], float] = {}
    for u in range(n_nodes):
        for _ in range(indptr[u + 1] - indptr[u]):
            v, r, fr, w = take("<IIId")
            if v >= n_nodes or r >= n_rel or fr >= n_frames:
                raise CorruptFile(f"{path}: index out of range")
            edges[(phrases[u], relations[r], frames[fr], phrases[v])] = w
    if buf.read(1):
        raise CorruptFile(f"{path}: trailing bytes")
    return CauseEffectGraph(edges)


def load_tuples(path: str | Path) -> Iterator[CausalTuple]:
    """Read `cause<TAB>relation<TAB>frame<TAB>effect<TAB>weight` rows."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise IoError(f"{path}:{lineno}: expected 5 tab-separated fields")
        try:
            weight = float(parts[4])
        except ValueError as e:
            raise IoError(f"{path}:{lineno}: bad weight {parts[4]!r}") from e
        cause = normalize_phrase(parts[0])
        effect = normalize_phrase(parts[3])
        if not cause or not effect or cause == effect or weight <= 0:
            continue
        yield CausalTuple(cause, parts[1].strip(), parts[2].strip(), effect, weight, str(path))


def save_tuples(tuples: Iterable[CausalTuple], path: str | Path) -> None:
    lines = [
        f"{t.cause}\t{t.relation}\t{t.frame}\t{t.effect}\t{t.weight!r}"
        for t in tuples
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_aliases(path: str | Path) -> AliasTable:
    """Read `entity<TAB>name1,name2,...` rows."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    names: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise IoError(f"{path}:{lineno}: expected entity<TAB>names")
        entity = parts[0].strip().lower()
        al = tuple(sorted({n.strip().lower() for n in parts[1].split(",") if n.strip()}))
        if not entity or not al:
            raise IoError(f"{path}:{lineno}: empty entity or alias set")
        names[entity] = al
    return AliasTable(names)


def load_kb_edges(path: str | Path) -> Iterator[KbEdge]:
    """Read `src<TAB>dst` rows."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise IoError(f"{path}:{lineno}: expected src<TAB>dst")
        yield KbEdge(parts[0].strip().lower(), parts[1].strip().lower())


def load_patterns(path: str | Path) -> list[Pattern]:
    """Read `lexeme<TAB>frame` rows (lexeme may be multi-word)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    out: list[Pattern] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise IoError(f"{path}:{lineno}: expected lexeme<TAB>frame")
        lexemes = tuple(tokenize(parts[0]))
        if not lexemes:
            raise IoError(f"{path}:{lineno}: empty lexeme")
        out.append(Pattern(lexemes, parts[1].strip()))
    if not out:
        raise IoError(f"{path}: no patterns")
    return out
