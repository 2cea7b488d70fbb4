"""Model assembly on top of the kernel backends: parameter init and
pretrained-embedding loading, deterministic Adam training with teacher
forcing, greedy and beam decoding, and versioned binary persistence.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..errors import (
    ConfigInvalid,
    CorruptFile,
    DivergedLoss,
    InvalidParams,
    IoError,
    UnknownRelation,
)
from .backend import get_backend
from .params import PARAM_FIELDS, ModelDims, init_params, zero_grads
from .vocab import BOS_ID, EOS_ID, PAD_ID, Example, Vocab

__all__ = [
    "TrainConfig",
    "Seq2SeqModel",
    "BeamResult",
    "train",
    "beam_decode",
    "attention",
    "load_word_vectors",
    "known_ngram_filter",
    "save_model",
    "load_model",
]

ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class TrainConfig:
    direction: str = "forward"
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 0.01
    seed: int = 0
    hidden_size: int = 64
    embed_size: int = 64
    attention_size: int = 0  # 0 means: same as hidden_size
    max_phrase_len: int = 12
    vocab_budget: int = 5000
    use_relation_attention: bool = True
    embeddings_path: str | None = None
    backend: str = "auto"

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ConfigInvalid(f"bad direction {self.direction!r}")
        for name in ("epochs", "batch_size", "hidden_size", "embed_size",
                     "max_phrase_len", "vocab_budget"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be >= 1")
        if self.learning_rate < 0:
            raise ConfigInvalid("learning_rate must be >= 0")

    @property
    def attention(self) -> int:
        return self.attention_size or self.hidden_size


@dataclass(frozen=True)
class BeamResult:
    """Beam hypotheses, best first; each is (tokens, total log-probability)."""

    hypotheses: tuple[tuple[tuple[str, ...], float], ...]

    def best(self) -> tuple[str, ...]:
        return self.hypotheses[0][0] if self.hypotheses else ()


class Seq2SeqModel:
    """Encoder-decoder with relation-specific attention over phrase tokens."""

    def __init__(self, vocab: Vocab, config: TrainConfig, params: dict[str, np.ndarray]):
        self.vocab = vocab
        self.config = config
        self.params = params
        self.history: list[float] = []  # per-epoch mean token cross-entropy
        self._backend = get_backend(config.backend)

    @classmethod
    def init(cls, vocab: Vocab, config: TrainConfig) -> "Seq2SeqModel":
        dims = ModelDims(
            vocab=vocab.size,
            relations=vocab.n_relations if config.use_relation_attention else 1,
            embed=config.embed_size,
            hidden=config.hidden_size,
            attention=config.attention,
        )
        rng = np.random.default_rng(config.seed)
        params = init_params(dims, rng)
        if config.embeddings_path:
            vectors = load_word_vectors(config.embeddings_path, config.embed_size)
            for tok, vec in vectors.items():
                tid = vocab.token2id.get(tok)
                if tid is not None:
                    params["emb"][tid] = vec
        return cls(vocab, config, params)

    @property
    def backend_name(self) -> str:
        return self._backend.NAME

    @property
    def direction(self) -> str:
        return self.config.direction

    def param_tuple(self) -> tuple:
        return tuple(self.params[n] for n in PARAM_FIELDS)

    def relation_row(self, relation: str | int) -> int:
        if isinstance(relation, int):
            if not (0 <= relation < self.vocab.n_relations):
                raise UnknownRelation(f"relation id {relation} out of range")
            rid = relation
        else:
            rid = self.vocab.relation_id(relation)
        return rid if self.config.use_relation_attention else 0

    def batch_loss(self, examples: Sequence[Example]) -> float:
        P = self.param_tuple()
        return sum(
            self._backend.example_loss_grad(P, None, ex.src, self.relation_row(ex.rel),
                                            ex.dst_in, ex.dst_out)
            for ex in examples
        )

    def greedy_decode(self, src_tokens: Sequence[str], relation: str | int,
                      max_len: int | None = None) -> tuple[str, ...]:
        row = self.relation_row(relation)
        src = self.vocab.encode(list(src_tokens))
        if src.size == 0:
            raise InvalidParams("source phrase is empty")
        P = self.param_tuple()
        Henc = self._backend.encode(P, src)
        s = Henc[-1].copy()
        prev = BOS_ID
        out: list[int] = []
        limit = max_len if max_len is not None else self.config.max_phrase_len
        for _ in range(limit):
            lp, s = self._backend.decode_step(P, Henc, s, prev, row)
            lp = lp.copy()
            lp[PAD_ID] = -np.inf
            lp[BOS_ID] = -np.inf
            tok = int(np.argmax(lp))
            if tok == EOS_ID:
                break
            out.append(tok)
            prev = tok
        return tuple(self.vocab.decode(out))

    def digest(self) -> str:
        return hashlib.sha256(_serialize(self)).hexdigest()


def train(data: tuple[Vocab, list[Example]], cfg: TrainConfig) -> Seq2SeqModel:
    """Teacher-forced cross-entropy training with deterministic Adam.

    Batch gradients are sums over examples (order within a batch cannot
    change them); the epoch shuffle, init, and updates all derive from
    ``cfg.seed``, so identical configs reproduce identical parameters.
    """
    vocab, examples = data
    if not examples:
        raise InvalidParams("training data is empty")
    model = Seq2SeqModel.init(vocab, cfg)
    backend = model._backend
    P = model.param_tuple()
    adam_m = zero_grads(model.params)
    adam_v = zero_grads(model.params)
    step = 0
    rng = np.random.default_rng(cfg.seed + 1)
    n_tokens = sum(len(ex.dst_out) for ex in examples)
    rows = [model.relation_row(ex.rel) for ex in examples]

    for _ in range(cfg.epochs):
        order = rng.permutation(len(examples))
        # Summed in example order at epoch end so the recorded loss is
        # independent of the shuffle.
        example_losses = np.zeros(len(examples))
        for start in range(0, len(examples), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads = zero_grads(model.params)
            G = tuple(grads[n] for n in PARAM_FIELDS)
            for idx in batch:
                ex = examples[idx]
                example_losses[idx] = backend.example_loss_grad(
                    P, G, ex.src, rows[idx], ex.dst_in, ex.dst_out
                )
            step += 1
            scale = 1.0 / len(batch)
            corr1 = 1.0 - ADAM_BETA1 ** step
            corr2 = 1.0 - ADAM_BETA2 ** step
            for name in PARAM_FIELDS:
                g = grads[name] * scale
                m = adam_m[name]
                v = adam_v[name]
                m *= ADAM_BETA1
                m += (1.0 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * g * g
                model.params[name] -= cfg.learning_rate * (m / corr1) / (
                    np.sqrt(v / corr2) + ADAM_EPS
                )
        epoch_loss = float(example_losses.sum())
        if not np.isfinite(epoch_loss):
            raise DivergedLoss(f"non-finite loss at epoch {len(model.history)}")
        model.history.append(epoch_loss / n_tokens)
    return model


def beam_decode(
    model: Seq2SeqModel,
    src_tokens: Sequence[str],
    relation: str | int,
    k: int,
    max_len: int | None = None,
    hypothesis_filter: Callable[[tuple[str, ...]], bool] | None = None,
) -> BeamResult:
    """Length-bounded beam search over decoder distributions.

    Hypotheses shorter than ``max_len`` include their end-of-sequence
    probability; ones cut at ``max_len`` do not.  Scores are raw total
    log-probabilities (no length normalization), ties break on the token
    sequence, and k=1 reproduces greedy decoding exactly.
    """
    if k < 1:
        raise InvalidParams("k must be >= 1")
    row = model.relation_row(relation)
    src = model.vocab.encode(list(src_tokens))
    if src.size == 0:
        raise InvalidParams("source phrase is empty")
    limit = max_len if max_len is not None else model.config.max_phrase_len
    P = model.param_tuple()
    backend = model._backend
    Henc = backend.encode(P, src)

    # (logp, token ids, prev token, state)
    live: list[tuple[float, tuple[int, ...], int, np.ndarray]] = [
        (0.0, (), BOS_ID, Henc[-1].copy())
    ]
    finished: list[tuple[float, tuple[int, ...]]] = []
    for _ in range(limit):
        cands: list[tuple[float, tuple[int, ...], int, np.ndarray]] = []
        for logp, toks, prev, s in live:
            lp, s_new = backend.decode_step(P, Henc, s, prev, row)
            for tok in range(lp.size):
                if tok in (PAD_ID, BOS_ID):
                    continue
                cands.append((logp + float(lp[tok]), toks + (tok,), tok, s_new))
        pool = [(lp_, toks, None, None) for lp_, toks in finished] + cands
        pool.sort(key=lambda it: (-it[0], it[1]))
        pool = pool[:k]
        finished = []
        live = []
        for logp, toks, tok, s in pool:
            if tok is None or toks[-1] == EOS_ID:
                finished.append((logp, toks))
            else:
                live.append((logp, toks, tok, s))
        if not live:
            break
    finished.extend((logp, toks) for logp, toks, _, _ in live)
    finished.sort(key=lambda it: (-it[0], it[1]))

    hyps: list[tuple[tuple[str, ...], float]] = []
    for logp, toks in finished:
        surface = tuple(
            model.vocab.id2token[t] for t in toks if t != EOS_ID
        )
        if hypothesis_filter is not None and not hypothesis_filter(surface):
            continue
        hyps.append((surface, logp))
    return BeamResult(hypotheses=tuple(hyps[:k]))


def attention(
    model: Seq2SeqModel,
    encoder_states: np.ndarray,
    s_prev: np.ndarray,
    relation: str | int,
) -> tuple[np.ndarray, np.ndarray]:
    """Attention weights and context for one decoder step.

    Weights are a softmax over source positions; changing the relation
    changes them through the relation-specific hidden-layer term.
    """
    row = model.relation_row(relation)
    p = model.params
    pre = encoder_states @ p["att_Wh"].T + (p["att_Ws"] @ s_prev + p["att_rel"][row])
    logits = np.tanh(pre) @ p["att_v"]
    e = np.exp(logits - logits.max())
    weights = e / e.sum()
    return weights, weights @ encoder_states


def load_word_vectors(path: str | Path, dim: int) -> dict[str, np.ndarray]:
    """Text-format word vectors: `word v1 v2 ... vdim` per line; an
    optional `count dim` header line is skipped."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
            continue
        if len(parts) != dim + 1:
            raise IoError(
                f"{path}:{lineno}: expected {dim} components, got {len(parts) - 1}"
            )
        try:
            out[parts[0]] = np.array([float(v) for v in parts[1:]])
        except ValueError as e:
            raise IoError(f"{path}:{lineno}: bad vector") from e
    return out


def known_ngram_filter(examples: Sequence[Example]) -> Callable[[tuple[str, ...]], bool]:
    """Optional hypothesis filter: accept only phrases whose token bigrams
    all occur somewhere in the training phrases.  Off by default."""
    seen: set[tuple[str, str]] = set()
    for ex in examples:
        for phrase in (ex.src_tokens, ex.dst_tokens):
            seen.update(zip(phrase, phrase[1:]))

    def accept(tokens: tuple[str, ...]) -> bool:
        return all(pair in seen for pair in zip(tokens, tokens[1:]))

    return accept


def _serialize(model: Seq2SeqModel) -> bytes:
    buf = io.BytesIO()
    buf.write(b"CWNM")
    buf.write(struct.pack("<H", 1))
    header = json.dumps(
        {
            "direction": model.config.direction,
            "hidden_size": model.config.hidden_size,
            "embed_size": model.config.embed_size,
            "attention_size": model.config.attention,
            "max_phrase_len": model.config.max_phrase_len,
            "use_relation_attention": model.config.use_relation_attention,
            "seed": model.config.seed,
        },
        sort_keys=True,
    ).encode("utf-8")
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    for table in (model.vocab.id2token, model.vocab.id2rel):
        buf.write(struct.pack("<I", len(table)))
        for s in table:
            raw = s.encode("utf-8")
            buf.write(struct.pack("<I", len(raw)))
            buf.write(raw)
    for name in PARAM_FIELDS:
        arr = np.ascontiguousarray(model.params[name], dtype=np.float64)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def save_model(model: Seq2SeqModel, path: str | Path) -> None:
    payload = _serialize(model)
    try:
        Path(path).write_bytes(payload + hashlib.sha256(payload).digest())
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load_model(path: str | Path, backend: str = "auto") -> Seq2SeqModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if len(blob) < 42:
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

    if buf.read(4) != b"CWNM":
        raise CorruptFile(f"{path}: bad magic")
    (version,) = take("<H")
    if version != 1:
        raise CorruptFile(f"{path}: unsupported version {version}")
    (hlen,) = take("<I")
    header = json.loads(buf.read(hlen).decode("utf-8"))

    def read_table() -> tuple[str, ...]:
        (count,) = take("<I")
        out = []
        for _ in range(count):
            (length,) = take("<I")
            raw = buf.read(length)
            if len(raw) != length:
                raise CorruptFile(f"{path}: truncated string")
            out.append(raw.decode("utf-8"))
        return tuple(out)

    tokens = read_table()
    relations = read_table()
    vocab = Vocab(id2token=tokens, id2rel=relations)
    params: dict[str, np.ndarray] = {}
    for name in PARAM_FIELDS:
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        n_items = int(np.prod(shape)) if shape else 1
        raw = buf.read(8 * n_items)
        if len(raw) != 8 * n_items:
            raise CorruptFile(f"{path}: truncated parameter {name}")
        params[name] = np.frombuffer(raw, dtype=np.float64).reshape(shape).copy()
    if buf.read(1):
        raise CorruptFile(f"{path}: trailing bytes")
    cfg = TrainConfig(
        direction=header["direction"],
        hidden_size=header["hidden_size"],
        embed_size=header["embed_size"],
        attention_size=header["attention_size"],
        max_phrase_len=header["max_phrase_len"],
        use_relation_attention=header["use_relation_attention"],
        seed=header["seed"],
        backend=backend,
    )
    return Seq2SeqModel(vocab, cfg, params)
