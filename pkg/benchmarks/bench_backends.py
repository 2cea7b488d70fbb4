"""Benchmark the compiled kernel backend against the numpy fallback on the
sequence-model hot paths: teacher-forced training and beam decoding.

Usage: python3 benchmarks/bench_backends.py [--epochs N] [--pairs N]
"""

import argparse
import time

import numpy as np

from causeway.graph import CausalTuple, build
from causeway.neural.backend import available_backends
from causeway.neural.model import TrainConfig, beam_decode, train
from causeway.neural.vocab import make_dataset


def synthetic_graph(n_pairs: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    vocab = [f"w{i:03d}" for i in range(300)]
    rels = ["caus", "forc", "lead to", "make"]
    tuples = {}
    while len(tuples) < n_pairs:
        cause = "_".join(rng.choice(vocab, size=int(rng.integers(1, 5)), replace=False))
        effect = "_".join(rng.choice(vocab, size=int(rng.integers(1, 4)), replace=False))
        rel = rels[int(rng.integers(0, len(rels)))]
        if cause != effect:
            tuples[(cause, rel, effect)] = CausalTuple(cause, rel, "F", effect, 1.0)
    return build(tuples.values())


def bench(backend: str, graph, epochs: int) -> dict[str, float]:
    data = make_dataset(graph, "forward", vocab_budget=400)
    cfg = TrainConfig(
        direction="forward", epochs=epochs, batch_size=16, learning_rate=0.01,
        seed=0, hidden_size=64, embed_size=64, max_phrase_len=8,
        vocab_budget=400, backend=backend,
    )
    t0 = time.perf_counter()
    model = train(data, cfg)
    train_s = time.perf_counter() - t0

    examples = data[1][:100]
    t0 = time.perf_counter()
    for ex in examples:
        beam_decode(model, ex.src_tokens, ex.relation, k=5)
    decode_s = time.perf_counter() - t0
    return {
        "train_s": train_s,
        "examples_per_s": epochs * len(data[1]) / train_s,
        "decode_s": decode_s,
        "decodes_per_s": len(examples) / decode_s,
        "final_loss": model.history[-1],
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--pairs", type=int, default=300)
    args = parser.parse_args()

    graph = synthetic_graph(args.pairs)
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    print(f"dataset: {args.pairs} pairs, {args.epochs} epochs, hidden 64\n")
    rows = {}
    for name in backends:
        rows[name] = bench(name, graph, args.epochs)
        r = rows[name]
        print(
            f"{name:>8}: train {r['train_s']:7.2f}s ({r['examples_per_s']:8.1f} ex/s)"
            f"   beam-5 decode {r['decode_s']:6.2f}s ({r['decodes_per_s']:7.1f}/s)"
            f"   final loss {r['final_loss']:.6f}"
        )
    if len(rows) == 2:
        a, b = rows["python"], rows["cython"]
        print(
            f"\nspeedup (cython vs python): train x{a['train_s'] / b['train_s']:.1f},"
            f" decode x{a['decode_s'] / b['decode_s']:.1f}"
        )
        drift = abs(a["final_loss"] - b["final_loss"]) / max(a["final_loss"], 1e-12)
        print(f"relative final-loss drift between backends: {drift:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
