"""Subcommand CLI orchestrating the pipeline from a single config file.

Every subcommand reads only declared inputs, writes only under the output
directory, prints a one-line summary on success, and exits nonzero with a
machine-parsable ``causeway-error`` line on failure.  Reruns with the same
config and seed produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import granger, graph as graphmod, symbolic, textfeatures as tf
from .config import PipelineConfig, load_config
from .errors import (
    CausewayError,
    ConfigInvalid,
    CorruptFile,
    DivergedLoss,
    EmptyCorpus,
    EmptyGraph,
    InsufficientHistory,
    InvalidParams,
    InvalidRank,
    IoError,
    LengthMismatch,
    NoChainFound,
    NoOverlap,
    NoPathFound,
    SeriesTooShort,
    SingularDesign,
    TargetNotInGraph,
    TooShort,
    UnknownNode,
    UnknownRelation,
    UnknownTarget,
)
from .forecast import (
    BacktestConfig,
    backtest,
    random_analysis,
    write_random_csv,
    write_random_svg,
)
from .neural import bleu as bleumod
from .neural.chain import neural_backward_chain
from .neural.model import TrainConfig, beam_decode, load_model, save_model, train
from .neural.vocab import make_dataset
from .timeseries import TimeSeries, load_csv

SUBCOMMANDS = (
    "extract",
    "score",
    "graph-build",
    "graph-expand",
    "explain-symbolic",
    "train-reasoner",
    "explain-neural",
    "forecast",
    "random-analysis",
    "eval-bleu",
)

# Distinct exit codes per error family (documented in the README).
EXIT_CODES: dict[type, int] = {
    ConfigInvalid: 2,
    NoOverlap: 3,
    TooShort: 3,
    InvalidParams: 3,
    EmptyCorpus: 3,
    SeriesTooShort: 3,
    LengthMismatch: 3,
    InsufficientHistory: 3,
    InvalidRank: 3,
    EmptyGraph: 4,
    UnknownNode: 4,
    UnknownTarget: 4,
    TargetNotInGraph: 4,
    NoPathFound: 4,
    NoChainFound: 4,
    SingularDesign: 5,
    DivergedLoss: 5,
    UnknownRelation: 5,
    IoError: 6,
    CorruptFile: 6,
}


def _exit_code(err: CausewayError) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(err, cls):
            return code
    return 1


def _out_dir(cfg: PipelineConfig) -> Path:
    out = cfg.get_path("out_dir", "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _policy(cfg: PipelineConfig) -> tf.DynamicsPolicy:
    return tf.DynamicsPolicy(
        entropy_lo=cfg.get_float("features.entropy_lo", 0.0),
        entropy_hi=cfg.get_float("features.entropy_hi", 1.0),
        mean_lo=cfg.get_float("features.mean_lo", 0.0),
        std_lo=cfg.get_float("features.std_lo", 0.0),
        peaks_lo=cfg.get_int("features.peaks_lo", 0),
        slope_lo=cfg.get_float("features.slope_lo", 0.0),
    )


def _graph_filter(cfg: PipelineConfig) -> graphmod.GraphFilter:
    return graphmod.GraphFilter(
        max_degree=cfg.get_int("graph.max_degree", 1000),
        min_tokens=cfg.get_int("graph.min_tokens", 1),
        max_tokens=cfg.get_int("graph.max_tokens", 8),
        min_weight=cfg.get_float("graph.min_weight", 1.0),
    )


def _reasoning_config(cfg: PipelineConfig) -> symbolic.ReasoningConfig:
    return symbolic.ReasoningConfig(
        d_max=cfg.get_int("reasoning.d_max", 3),
        epsilon=cfg.get_float("reasoning.epsilon", 0.0),
        max_frontier=cfg.get_int("reasoning.max_frontier", 200),
        max_name_tokens=cfg.get_int("reasoning.max_name_tokens", 8),
        min_edge_weight=cfg.get_float("reasoning.min_edge_weight", 0.0),
        kb_hop_penalty=cfg.get_float("reasoning.kb_hop_penalty", 0.0),
    )


def _train_config(cfg: PipelineConfig) -> TrainConfig:
    embeddings = None
    if cfg.has("paths.embeddings"):
        embeddings = str(cfg.require_file("paths.embeddings"))
    return TrainConfig(
        direction=cfg.get_str("train.direction", "backward"),
        epochs=cfg.get_int("train.epochs", 200),
        batch_size=cfg.get_int("train.batch_size", 16),
        learning_rate=cfg.get_float("train.learning_rate", 0.01),
        seed=cfg.get_int("seed"),
        hidden_size=cfg.get_int("train.hidden_size", 64),
        embed_size=cfg.get_int("train.embed_size", 64),
        attention_size=cfg.get_int("train.attention_size", 0),
        max_phrase_len=cfg.get_int("train.max_phrase_len", 12),
        vocab_budget=cfg.get_int("train.vocab_budget", 5000),
        use_relation_attention=cfg.get_bool("train.use_relation_attention", True),
        embeddings_path=embeddings,
        backend=cfg.get_str("train.backend", "auto"),
    )


def read_feature_dir(dirpath: Path) -> tuple[dict[str, TimeSeries], dict[str, str]]:
    """Load the per-feature CSVs written by `score`; returns (series by
    name, kind by name)."""
    stats = dirpath / "stats.tsv"
    if not stats.exists():
        raise IoError(f"feature directory {dirpath} has no stats.tsv")
    series: dict[str, TimeSeries] = {}
    kinds: dict[str, str] = {}
    lines = stats.read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) < 3:
            raise IoError(f"{stats}: bad row {line!r}")
        name, kind, fname = parts[0], parts[1], parts[2]
        series[name] = load_csv(dirpath / fname, name=name)
        kinds[name] = kind
    return series, kinds


def _load_target(cfg: PipelineConfig) -> TimeSeries:
    return load_csv(cfg.require_file("paths.target"))


def _oracle(cfg: PipelineConfig, y: TimeSeries) -> symbolic.CausalityOracle:
    series, _ = read_feature_dir(cfg.get_path("paths.features_dir", str(_out_dir(cfg) / "features")))
    return symbolic.CausalityOracle(y, series, max_lag=cfg.get_int("granger.max_lag", 3))


def cmd_extract(cfg: PipelineConfig) -> str:
    corpus = tf.load_corpus(cfg.require_file("paths.corpus"))
    patterns = graphmod.DEFAULT_PATTERNS
    if cfg.has("paths.patterns"):
        patterns = graphmod.load_patterns(cfg.require_file("paths.patterns"))
    tuples = list(
        graphmod.extract_tuples(
            corpus, patterns, max_phrase_len=cfg.get_int("graph.max_tokens", 8)
        )
    )
    out = _out_dir(cfg) / "tuples.tsv"
    graphmod.save_tuples(tuples, out)
    return f"extract: {len(tuples)} tuples -> {out}"


def cmd_score(cfg: PipelineConfig, threads: int) -> str:
    corpus = list(tf.load_corpus(cfg.require_file("paths.corpus")))
    y = _load_target(cfg)
    topics = None
    lexicon = None
    if cfg.has("paths.topics"):
        topics = tf.load_topics(cfg.require_file("paths.topics"))
        if cfg.has("paths.lexicon_pos") and cfg.has("paths.lexicon_neg"):
            lexicon = tf.load_lexicon(
                cfg.require_file("paths.lexicon_pos"), cfg.require_file("paths.lexicon_neg")
            )
    features = tf.build_feature_set(
        corpus,
        topics=topics,
        lexicon=lexicon,
        n_max=cfg.get_int("features.n_max", 2),
        min_freq=cfg.get_int("features.min_freq", 5),
        policy=_policy(cfg),
    )
    out = _out_dir(cfg)
    tf.write_feature_dir(features, out / "features")
    series = {name: fs.series for name, fs in features.items()}
    scores = granger.score_features(
        y, series, cfg.get_int("granger.max_lag", 3), threads=threads
    )
    granger.write_scores_tsv(scores, out / "scores.tsv")

    bip = granger.BipartiteCausalGraph.from_scores(scores)
    bip = granger.tfidf_prune(bip, cfg.get_float("granger.keep_frac", 1.0))
    if not bip.mask.all():
        bip = granger.nmf_impute(
            bip,
            rank=cfg.get_int("granger.nmf_rank", 2),
            iters=cfg.get_int("granger.nmf_iters", 200),
            seed=cfg.get_int("seed"),
        )
    comp = granger.compose(bip, y.name, cfg.get_int("granger.k", 10))
    payload = {"target": comp.target, "selected": [[n, s] for n, s in comp.selected]}
    (out / "composition.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    top = comp.selected[0][0] if comp.selected else "-"
    return (
        f"score: {len(features)} features against {y.name!r}; top feature {top};"
        f" -> {out / 'scores.tsv'}"
    )


def cmd_graph_build(cfg: PipelineConfig) -> str:
    default_tuples = str(_out_dir(cfg) / "tuples.tsv")
    tuples = graphmod.load_tuples(cfg.require_file("paths.tuples", default_tuples))
    g = graphmod.build(tuples, _graph_filter(cfg))
    out = _out_dir(cfg) / "cgraph.bin"
    graphmod.save(g, out)
    return f"graph-build: {g.n_nodes} nodes, {g.n_edges} edges, digest {g.digest()[:16]} -> {out}"


def cmd_graph_expand(cfg: PipelineConfig) -> str:
    g = graphmod.load(cfg.get_path("paths.graph", str(_out_dir(cfg) / "cgraph.bin")))
    aliases = graphmod.load_aliases(cfg.require_file("paths.aliases"))
    kb = graphmod.load_kb_edges(cfg.require_file("paths.kb_edges"))
    expanded = graphmod.expand_kb(g, aliases, kb)
    out = _out_dir(cfg) / "cgraph_expanded.bin"
    graphmod.save(expanded, out)
    return (
        f"graph-expand: {expanded.n_nodes} nodes, {expanded.n_edges} edges"
        f" (+{expanded.n_edges - g.n_edges}) -> {out}"
    )


def _resolve_graph(cfg: PipelineConfig) -> graphmod.CauseEffectGraph:
    default = _out_dir(cfg) / "cgraph_expanded.bin"
    if not cfg.has("paths.graph") and not default.exists():
        default = _out_dir(cfg) / "cgraph.bin"
    return graphmod.load(cfg.get_path("paths.graph", str(default)))


def cmd_explain_symbolic(cfg: PipelineConfig) -> str:
    g = _resolve_graph(cfg)
    y = _load_target(cfg)
    oracle = _oracle(cfg, y)
    rcfg = _reasoning_config(cfg)
    aliases = None
    if cfg.has("paths.aliases"):
        aliases = graphmod.load_aliases(cfg.require_file("paths.aliases"))
    target = symbolic.resolve_target(g, cfg.get_str("reasoning.target"), aliases)
    frontiers = symbolic.backward_infer(g, target, y, oracle, rcfg)
    if cfg.has("reasoning.source"):
        source = symbolic.resolve_target(g, cfg.get_str("reasoning.source"), aliases)
    else:
        scored = [n for layer in frontiers[1:] for n in layer if n.scored]
        if not scored:
            raise NoPathFound("no Granger-scored frontier node; set reasoning.source")
        source = max(scored, key=lambda n: (n.granger_total, n.phrase)).phrase
    chains = symbolic.assemble_chains(
        frontiers, g, source, target, cfg.get_int("reasoning.k", 3), rcfg
    )
    out = _out_dir(cfg)
    (out / "chains.txt").write_text(
        "\n".join(symbolic.format_chain(c) for c in chains) + "\n", encoding="utf-8"
    )
    symbolic.write_chains_tsv(chains, out / "chains.tsv")
    symbolic.write_chains_dot(chains, out / "chains.dot")
    return (
        f"explain-symbolic: {len(chains)} chains {source!r} -> {target!r},"
        f" best score {chains[0].total_score:.4f} -> {out / 'chains.tsv'}"
    )


def cmd_train_reasoner(cfg: PipelineConfig) -> str:
    g = _resolve_graph(cfg)
    tcfg = _train_config(cfg)
    data = make_dataset(g, tcfg.direction, tcfg.vocab_budget)
    model = train(data, tcfg)
    out = _out_dir(cfg)
    save_model(model, out / "reasoner.bin")
    log_lines = ["epoch\tloss"]
    log_lines.extend(f"{i}\t{loss!r}" for i, loss in enumerate(model.history))
    (out / "train_log.tsv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return (
        f"train-reasoner: {len(data[1])} examples, {tcfg.epochs} epochs,"
        f" final loss {model.history[-1]:.6f}, digest {model.digest()[:16]}"
        f" -> {out / 'reasoner.bin'}"
    )


def cmd_explain_neural(cfg: PipelineConfig) -> str:
    model = load_model(
        cfg.get_path("paths.model", str(_out_dir(cfg) / "reasoner.bin")),
        backend=cfg.get_str("train.backend", "auto"),
    )
    y = _load_target(cfg)
    oracle = _oracle(cfg, y)
    rcfg = _reasoning_config(cfg)
    target = graphmod.normalize_phrase(cfg.get_str("reasoning.target"))
    chain = neural_backward_chain(
        model, target, y, oracle, rcfg, beam_k=cfg.get_int("reasoning.beam_k", 5)
    )
    out = _out_dir(cfg)
    (out / "neural_chain.txt").write_text(
        symbolic.format_chain(chain) + "\n", encoding="utf-8"
    )
    symbolic.write_chains_tsv([chain], out / "neural_chain.tsv")
    return (
        f"explain-neural: {len(chain.hops)}-hop chain {chain.source!r} ->"
        f" {chain.target!r} -> {out / 'neural_chain.tsv'}"
    )


def _scores_by_feature(path: Path) -> dict[str, float]:
    totals: dict[str, float] = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != 6:
            raise IoError(f"{path}: bad row {line!r}")
        totals[parts[0]] = float(parts[5])
    return totals


def cmd_forecast(cfg: PipelineConfig) -> str:
    y = _load_target(cfg)
    out = _out_dir(cfg)
    series, kinds = read_feature_dir(
        cfg.get_path("paths.features_dir", str(out / "features"))
    )
    totals = _scores_by_feature(cfg.get_path("paths.scores", str(out / "scores.tsv")))
    per_method = cfg.get_int("backtest.features_per_method", 3)

    def top(names: list[str]) -> list[TimeSeries]:
        ranked = sorted(names, key=lambda n: (-totals.get(n, 0.0), n))[:per_method]
        return [series[name] for name in ranked]

    kind_names = {kind: [n for n in sorted(series) if kinds[n] == kind]
                  for kind in ("word", "topic", "sentiment")}
    sets: dict[str, list[TimeSeries]] = {}
    if kind_names["word"]:
        sets["varx_words"] = top(kind_names["word"])
    if kind_names["topic"]:
        sets["varx_topics"] = top(kind_names["topic"])
    if kind_names["sentiment"]:
        sets["varx_senti"] = top(kind_names["sentiment"])
    sets["varx_composition"] = top(sorted(series))
    rng = np.random.default_rng(cfg.get_int("seed"))
    sets["varx_random"] = [
        TimeSeries(y.start_date, rng.normal(size=len(y)), f"random{i}")
        for i in range(per_method)
    ]

    # Crop target and all features to the common date range.
    start = max([y.start_date] + [f.start_date for fs in sets.values() for f in fs])
    end = min([y.end_date] + [f.end_date for fs in sets.values() for f in fs])
    if (end - start).days + 1 < 2:
        raise NoOverlap("target and features share no date range")
    y_c = y.slice(y.index_of(start), y.index_of(end) + 1)
    sets = {
        meth: [f.slice(f.index_of(start), f.index_of(end) + 1) for f in fs]
        for meth, fs in sets.items()
    }
    bcfg = BacktestConfig(
        window_days=cfg.get_int("backtest.window_days", 30),
        stride_days=cfg.get_int("backtest.stride_days", 10),
        steps=cfg.get_int_list("backtest.steps", (1, 3, 5)),
        m=cfg.get_int("granger.m", 3),
        n=cfg.get_int("granger.n", 3),
    )
    report = backtest(y_c, sets, bcfg)
    (out / "forecast.tsv").write_text(report.to_tsv(), encoding="utf-8")
    s0 = report.steps[0]
    return (
        f"forecast: {report.n_windows} windows; step-{s0} RMSE"
        f" composition={report.rmse[('varx_composition', s0)]:.4f}"
        f" ar_only={report.rmse[('ar_only', s0)]:.4f} -> {out / 'forecast.tsv'}"
    )


def cmd_random_analysis(cfg: PipelineConfig) -> str:
    y = _load_target(cfg)
    results = random_analysis(
        y,
        n_features=cfg.get_int("random.n_features", 20),
        window=cfg.get_int("random.window", 30),
        lag=cfg.get_int("random.lag", 3),
        seed=cfg.get_int("seed"),
    )
    out = _out_dir(cfg)
    write_random_csv(results, out / "random.csv")
    extra = ""
    if cfg.get_bool("random.svg", False):
        write_random_svg(results, out / "random.svg")
        extra = " (+ random.svg)"
    best = max(r.causality for r in results)
    return f"random-analysis: {len(results)} scores, max causality {best:.4f} -> {out / 'random.csv'}{extra}"


def cmd_eval_bleu(cfg: PipelineConfig) -> str:
    model = load_model(
        cfg.get_path("paths.model", str(_out_dir(cfg) / "reasoner.bin")),
        backend=cfg.get_str("train.backend", "auto"),
    )
    default_tuples = str(_out_dir(cfg) / "tuples.tsv")
    tuples = list(graphmod.load_tuples(cfg.require_file("paths.eval_tuples", default_tuples)))
    if not tuples:
        raise InvalidParams("no evaluation tuples")
    k = cfg.get_int("eval.beam_k", 5)
    max_ngram = cfg.get_int("eval.max_ngram", 4)
    rows = ["cause\trelation\teffect\tb_at_1\tb_at_k_avg"]
    b1_sum = bka_sum = 0.0
    n = 0
    for t in tuples:
        if model.direction == "forward":
            src, ref = t.cause, t.effect
        else:
            src, ref = t.effect, t.cause
        try:
            result = beam_decode(model, src.split("_"), t.relation, k)
        except UnknownRelation:
            continue
        b1, bka = bleumod.bleu_at_k(result, ref.split("_"), max_ngram)
        rows.append(f"{t.cause}\t{t.relation}\t{t.effect}\t{b1!r}\t{bka!r}")
        b1_sum += b1
        bka_sum += bka
        n += 1
    if n == 0:
        raise InvalidParams("no evaluation tuples with known relations")
    rows.append(f"__mean__\t-\t-\t{b1_sum / n!r}\t{bka_sum / n!r}")
    out = _out_dir(cfg) / "bleu.tsv"
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return f"eval-bleu: {n} pairs, B@1 {b1_sum / n:.2f}, B@{k}A {bka_sum / n:.2f} -> {out}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causeway",
        description="Temporal causality detection and causal explanation chains.",
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out-dir", default=None, help="override output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
    return parser


def run(subcommand: str, cfg: PipelineConfig, threads: int = 1) -> str:
    if subcommand == "extract":
        return cmd_extract(cfg)
    if subcommand == "score":
        return cmd_score(cfg, threads)
    if subcommand == "graph-build":
        return cmd_graph_build(cfg)
    if subcommand == "graph-expand":
        return cmd_graph_expand(cfg)
    if subcommand == "explain-symbolic":
        return cmd_explain_symbolic(cfg)
    if subcommand == "train-reasoner":
        return cmd_train_reasoner(cfg)
    if subcommand == "explain-neural":
        return cmd_explain_neural(cfg)
    if subcommand == "forecast":
        return cmd_forecast(cfg)
    if subcommand == "random-analysis":
        return cmd_random_analysis(cfg)
    if subcommand == "eval-bleu":
        return cmd_eval_bleu(cfg)
    raise ConfigInvalid(f"unknown subcommand {subcommand!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.subcommand:
        parser.print_usage(sys.stderr)
        return EXIT_CODES[ConfigInvalid]
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.override("seed", str(args.seed))
        if args.out_dir is not None:
            cfg.override("out_dir", str(Path(args.out_dir).resolve()))
        if not cfg.has("seed"):
            raise ConfigInvalid("config must set a seed (or pass --seed)")
        threads = args.threads if args.threads is not None else cfg.get_int("threads", 1)
        if threads < 1:
            raise ConfigInvalid("threads must be >= 1")
        summary = run(args.subcommand, cfg, threads)
    except CausewayError as err:
        code = _exit_code(err)
        print(f"causeway-error code={err.code} exit={code} msg={err}", file=sys.stderr)
        return code
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
