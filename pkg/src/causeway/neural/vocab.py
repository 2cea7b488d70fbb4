"""Token/relation vocabulary and training-pair extraction from the
cause-effect graph."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyGraph, InvalidParams, UnknownRelation
from ..graph import CauseEffectGraph

__all__ = ["Vocab", "Example", "make_dataset"]

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


@dataclass(frozen=True)
class Vocab:
    id2token: tuple[str, ...]
    id2rel: tuple[str, ...]

    def __post_init__(self):
        if self.id2token[: len(SPECIALS)] != SPECIALS:
            raise InvalidParams("vocabulary must start with the special tokens")
        if not self.id2rel:
            raise InvalidParams("relation set must be non-empty")
        object.__setattr__(self, "token2id", {t: i for i, t in enumerate(self.id2token)})
        object.__setattr__(self, "rel2id", {r: i for i, r in enumerate(self.id2rel)})

    @property
    def size(self) -> int:
        return len(self.id2token)

    @property
    def n_relations(self) -> int:
        return len(self.id2rel)

    def encode(self, tokens: list[str]) -> np.ndarray:
        return np.array(
            [self.token2id.get(t, UNK_ID) for t in tokens], dtype=np.int64
        )

    def decode(self, ids) -> list[str]:
        return [self.id2token[int(i)] for i in ids]

    def relation_id(self, relation: str) -> int:
        try:
            return self.rel2id[relation]
        except KeyError:
            raise UnknownRelation(f"relation {relation!r} not in vocabulary") from None


@dataclass(frozen=True)
class Example:
    src: np.ndarray       # source token ids
    rel: int              # relation id
    dst_in: np.ndarray    # BOS + target ids (decoder input)
    dst_out: np.ndarray   # target ids + EOS (decoder output)
    src_tokens: tuple[str, ...]
    dst_tokens: tuple[str, ...]
    relation: str


def make_dataset(
    g: CauseEffectGraph, direction: str, vocab_budget: int
) -> tuple[Vocab, list[Example]]:
    """Turn every graph edge into a (source phrase, relation, target phrase)
    training pair; forward maps cause -> effect, backward swaps.

    The vocabulary keeps the ``vocab_budget`` most frequent tokens (ties
    alphabetical); everything else becomes UNK.
    """
    if direction not in ("forward", "backward"):
        raise InvalidParams(f"direction must be forward or backward, got {direction!r}")
    if vocab_budget < 1:
        raise InvalidParams("vocab_budget must be >= 1")
    pairs: list[tuple[tuple[str, ...], str, tuple[str, ...]]] = []
    counts: Counter[str] = Counter()
    for t in g.edge_tuples():
        cause = tuple(t.cause.split("_"))
        effect = tuple(t.effect.split("_"))
        src, dst = (cause, effect) if direction == "forward" else (effect, cause)
        pairs.append((src, t.relation, dst))
        counts.update(src)
        counts.update(dst)
    if not pairs:
        raise EmptyGraph("graph has no edges to train on")
    kept = sorted(counts.items(), key=lambda it: (-it[1], it[0]))[:vocab_budget]
    vocab = Vocab(
        id2token=SPECIALS + tuple(tok for tok, _ in kept),
        id2rel=tuple(g.relations),
    )
    examples = []
    for src, rel, dst in sorted(pairs):
        src_ids = vocab.encode(list(src))
        dst_ids = vocab.encode(list(dst))
        examples.append(
            Example(
                src=src_ids,
                rel=vocab.relation_id(rel),
                dst_in=np.concatenate(([BOS_ID], dst_ids)).astype(np.int64),
                dst_out=np.concatenate((dst_ids, [EOS_ID])).astype(np.int64),
                src_tokens=src,
                dst_tokens=dst,
                relation=rel,
            )
        )
    return vocab, examples
