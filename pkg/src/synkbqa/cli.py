"""Command-line entry point: edge pretraining, training, evaluation,
per-question explanation dumps, and one-off answering.

Exit codes: 0 success, 2 usage/input error, 3 no trainable questions,
4 checkpoint/flags mismatch. The SYNKBQA_LOG environment variable sets the
diagnostic level (debug/info/warning).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import edgevec, kb, matcher, qgraph
from .deptree import DepTree, answer_word, depth, parse_conllu_by_id, sdp
from .edgevec import build_edge_vocab, save_embeddings, train_skipgram, training_pairs
from .embeddings import WordEmbeddings
from .encoders import anonymize, focus_token_index
from .kb import TripleStore, Value, load_triples
from .matcher import (Model, PreparedQuestion, TrainConfig, TrainingDataError,
                      encode_question, evaluate, load_checkpoint,
                      prepare_question, save_checkpoint, split_subpaths,
                      total_score, train)
from .qgraph import (EntityConstraint, LabeledCandidate, OrdinalConstraint,
                     QueryGraph, TimeConstraint, TypeConstraint)

log = logging.getLogger("synkbqa")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_TRAINING = 3
EXIT_CONFIG_MISMATCH = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


@dataclass
class DatasetRecord:
    qid: str
    text: str
    sent_id: str
    gold: set[str]


def load_dataset(path) -> list[DatasetRecord]:
    """TSV: qid <TAB> question text <TAB> sent_id <TAB> gold answers
    joined by `|` (empty gold column allowed)."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise CliError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(cols)}")
            gold = {g for g in cols[3].split("|") if g}
            records.append(DatasetRecord(cols[0], cols[1], cols[2], gold))
    return records


# ---------------------------------------------------------------------------
# candidate cache (JSON, keyed by question id)

def _value_to_json(v: Value):
    return {"kind": v.kind, "payload": list(v.payload)}


def _value_from_json(d) -> Value:
    return Value(d["kind"], tuple(d["payload"]))


def _constraint_to_json(c):
    if isinstance(c, EntityConstraint):
        return {"kind": "entity", "node": c.node, "hop": list(c.hop), "entity": c.entity}
    if isinstance(c, TypeConstraint):
        return {"kind": "type", "label": c.label}
    if isinstance(c, TimeConstraint):
        return {"kind": "time", "node": c.node, "predicate": c.predicate,
                "op": c.op, "value": _value_to_json(c.value)}
    if isinstance(c, OrdinalConstraint):
        return {"kind": "ordinal", "node": c.node, "key_predicate": c.key_predicate,
                "direction": c.direction, "rank": c.rank}
    raise TypeError(f"unknown constraint {c!r}")


def _constraint_from_json(d):
    kind = d["kind"]
    if kind == "entity":
        return EntityConstraint(d["node"], (d["hop"][0], bool(d["hop"][1])), d["entity"])
    if kind == "type":
        return TypeConstraint(d["label"])
    if kind == "time":
        return TimeConstraint(d["node"], d["predicate"], d["op"], _value_from_json(d["value"]))
    if kind == "ordinal":
        return OrdinalConstraint(d["node"], d["key_predicate"], d["direction"], d["rank"])
    raise ValueError(f"unknown constraint kind {kind!r}")


def _candidate_to_json(c: LabeledCandidate):
    g = c.graph
    return {"entity": g.entity, "hops": [list(h) for h in g.hops],
            "constraints": [_constraint_to_json(x) for x in g.constraints],
            "entity_score": g.entity_score,
            "f1": c.f1, "polarity": c.polarity, "answers": list(c.answers)}


def _candidate_from_json(d) -> LabeledCandidate:
    graph = QueryGraph(d["entity"],
                       tuple((h[0], bool(h[1])) for h in d["hops"]),
                       tuple(_constraint_from_json(x) for x in d["constraints"]),
                       d["entity_score"])
    return LabeledCandidate(graph, d["f1"], d["polarity"], tuple(d["answers"]))


def prepare_records(records: list[DatasetRecord], trees: dict[str, DepTree],
                    store: TripleStore, word_emb: WordEmbeddings,
                    cfg: TrainConfig, cache_path=None) -> list[PreparedQuestion]:
    """Prepare every record, reusing (and extending) the JSON candidate
    cache when a path is given."""
    cache: dict[str, list] = {}
    if cache_path and os.path.exists(cache_path):
        with open(cache_path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        if payload.get("threshold") == cfg.f1_threshold:
            cache = payload.get("questions", {})
        else:
            log.info("ignoring candidate cache with mismatched threshold")
    prepared = []
    dirty = False
    for rec in records:
        if rec.sent_id not in trees:
            raise CliError(f"dataset question {rec.qid!r} references unknown sent_id {rec.sent_id!r}")
        tree = trees[rec.sent_id]
        if rec.qid in cache:
            labeled = [_candidate_from_json(d) for d in cache[rec.qid]]
            tokens = tree.forms()
            links = qgraph.make_focus_links(tokens, store, word_emb)
            q = PreparedQuestion(rec.qid, rec.text, tree, tokens,
                                 anonymize(tokens, links), links, labeled,
                                 qgraph.make_training_pairs(labeled, cfg.n_negatives))
        else:
            q = prepare_question(rec.qid, rec.text, tree, rec.gold, store, word_emb, cfg)
            cache[rec.qid] = [_candidate_to_json(c) for c in q.labeled]
            dirty = True
        prepared.append(q)
    if cache_path and dirty:
        with open(cache_path, "w", encoding="utf-8") as f:
            json.dump({"threshold": cfg.f1_threshold, "questions": cache}, f, sort_keys=True)
    return prepared


# ---------------------------------------------------------------------------
# shared loading helpers

def _require(args, *names):
    for name in names:
        value = getattr(args, name.replace("-", "_"), None)
        if value is None:
            raise CliError(f"missing required flag --{name}")
        if name != "flags" and not os.path.exists(str(value)):
            raise CliError(f"--{name}: no such file {value!r}")


def _parse_flags(spec: str | None) -> tuple[str, ...]:
    if not spec:
        return ()
    flags = tuple(f for f in spec.split(",") if f)
    for f in flags:
        if f not in matcher.VALID_FLAGS:
            raise CliError(f"--flags: unknown flag {f!r} (valid: {','.join(matcher.VALID_FLAGS)})")
    return flags


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        flags=_parse_flags(args.flags),
        pos_dim=args.pos_dim,
        max_depth=args.max_depth,
        tree_hidden=args.tree_hidden,
        dropout=args.dropout,
        margin=args.margin,
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        n_negatives=args.negatives,
        seed=args.seed,
    )


def _load_corpus(args):
    store = load_triples(args.triples)
    word_emb = WordEmbeddings.load(args.word_emb)
    with open(args.conllu, "r", encoding="utf-8") as f:
        trees, errors = parse_conllu_by_id(f.read())
    for e in errors:
        log.warning("parse: %s", e)
    return store, word_emb, trees


def _load_edge_emb(args, cfg: TrainConfig):
    if "treegru" not in cfg.flags:
        return None
    if not args.edge_emb:
        raise CliError("--flags treegru requires --edge-emb")
    if not os.path.exists(args.edge_emb):
        raise CliError(f"--edge-emb: no such file {args.edge_emb!r}")
    return edgevec.load_embeddings(args.edge_emb)


# ---------------------------------------------------------------------------
# commands

def cmd_pretrain_edges(args) -> int:
    _require(args, "conllu")
    if args.out is None:
        raise CliError("missing required flag --out")
    with open(args.conllu, "r", encoding="utf-8") as f:
        trees, errors = parse_conllu_by_id(f.read())
    for e in errors:
        log.warning("parse: %s", e)
    corpus = list(trees.values())
    if not corpus:
        raise CliError("--conllu: no valid sentences")
    vocab = build_edge_vocab(corpus, min_count=args.min_count)
    pairs = training_pairs(corpus, vocab)
    emb, losses = train_skipgram(pairs, vocab, d=args.edge_dim, epochs=args.epochs,
                                 lr=args.lr, seed=args.seed)
    save_embeddings(args.out, emb)
    print(f"edge vocab size\t{len(vocab)}")
    print(f"final mean loss\t{losses[-1]:.6f}")
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args, "triples", "dataset", "conllu", "word-emb")
    if args.out is None:
        raise CliError("missing required flag --out")
    cfg = _train_config(args)
    store, word_emb, trees = _load_corpus(args)
    edge_emb = _load_edge_emb(args, cfg)
    records = load_dataset(args.dataset)
    cache = args.cache or (args.dataset + ".cands.json")
    prepared = prepare_records(records, trees, store, word_emb, cfg, cache)
    try:
        model, history = train(prepared, cfg, word_emb, edge_emb,
                               log_fn=lambda e, l: print(f"epoch\t{e}\t{l:.6f}"))
    except TrainingDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("qid\tcandidates\tpositives", file=sys.stderr)
        for q in prepared:
            pos = sum(1 for c in q.labeled if c.polarity == "positive")
            print(f"{q.qid}\t{len(q.labeled)}\t{pos}", file=sys.stderr)
        return EXIT_NO_TRAINING
    save_checkpoint(model, args.out)
    print(f"checkpoint\t{args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "triples", "dataset", "conllu", "word-emb", "checkpoint")
    model = load_checkpoint(args.checkpoint)
    if args.flags is not None and _parse_flags(args.flags) != model.cfg.flags:
        print(f"error: checkpoint flags {','.join(model.cfg.flags) or '(none)'} "
              f"do not match requested flags {args.flags or '(none)'}", file=sys.stderr)
        return EXIT_CONFIG_MISMATCH
    store, word_emb, trees = _load_corpus(args)
    records = load_dataset(args.dataset)
    cache = args.cache or (args.dataset + ".cands.json")
    prepared = prepare_records(records, trees, store, word_emb, model.cfg, cache)
    report = evaluate(model, prepared)
    tsv = "\n".join("\t".join(r) for r in report.rows()) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(tsv)
    print(report.render_table())
    return EXIT_OK


def cmd_explain(args) -> int:
    _require(args, "triples", "dataset", "conllu", "word-emb")
    store, word_emb, trees = _load_corpus(args)
    records = load_dataset(args.dataset)
    rec = next((r for r in records if r.qid == args.qid), None)
    if rec is None:
        raise CliError(f"unknown question id {args.qid!r}")
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    cfg = model.cfg if model else _train_config(args)
    q = prepare_question(rec.qid, rec.text, trees[rec.sent_id], rec.gold,
                         store, word_emb, cfg)
    print(f"question\t{rec.text}")
    print(f"tokens\t{' '.join(q.tokens)}")
    print(f"anonymized\t{' '.join(q.anon_tokens)}")
    aw = answer_word(q.tree)
    print(f"answer word\t{q.tree.form(aw)} (token {aw})")
    print(f"depths\t{' '.join(str(depth(q.tree, i)) for i in range(1, len(q.tree) + 1))}")
    for link in q.links.all_links():
        print(f"link\t{type(link).__name__}\t{link}")
        path = sdp(q.tree, aw, focus_token_index(q.tree, link.span))
        print(f"sdp\t{path.render()}")
    if not q.labeled:
        print("no candidates")
        return EXIT_OK
    scored = list(q.labeled)
    if model is not None:
        qv = encode_question(model, q)
        scores = [float(total_score(model, qv, c).data) for c in scored]
    else:
        scores = [c.f1 for c in scored]
    order = sorted(range(len(scored)), key=lambda i: -scores[i])[:5]
    for i in order:
        c = scored[i]
        print(f"candidate\t{c.graph.canonical()}\tsubpaths={';'.join(split_subpaths(c.graph))}"
              f"\tscore={scores[i]:.6f}\tf1={c.f1:.4f}")
    return EXIT_OK


def cmd_answer(args) -> int:
    _require(args, "triples", "conllu", "word-emb", "checkpoint")
    if not args.text:
        raise CliError("missing required flag --text")
    model = load_checkpoint(args.checkpoint)
    store, word_emb, trees = _load_corpus(args)
    tree = next((t for t in trees.values()
                 if " ".join(t.forms()) == args.text), None)
    if tree is None:
        raise CliError("--text: no sentence in --conllu matches the question text")
    q = prepare_question("q", args.text, tree, set(), store, word_emb, model.cfg)
    candidates = qgraph.generate_candidates(q.tokens, q.links, store)
    executable = []
    for g in candidates:
        try:
            answers = kb.execute(store, g)
        except kb.KbError as exc:
            log.warning("skipping candidate %s: %s", g.canonical(), exc)
            continue
        if not answers:
            continue
        executable.append(LabeledCandidate(g, 0.0, "negative",
                                           tuple(sorted(v.render() for v in answers))))
    if not executable:
        print("warning: no candidates", file=sys.stderr)
        return EXIT_OK
    qv = encode_question(model, q)
    scores = [float(total_score(model, qv, c).data) for c in executable]
    best = executable[int(np.argmax(scores))]
    for a in best.answers:
        print(a)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synkbqa",
                                     description="syntax-aware KBQA pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat `key = value` config file; flags override")
        p.add_argument("--triples")
        p.add_argument("--dataset")
        p.add_argument("--conllu")
        p.add_argument("--word-emb")
        p.add_argument("--edge-emb")
        p.add_argument("--checkpoint")
        p.add_argument("--flags", default=None, help="comma-joined subset of sdp,tpf,treegru")
        p.add_argument("--epochs", type=int, default=5)
        p.add_argument("--batch", type=int, default=32)
        p.add_argument("--margin", type=float, default=0.5)
        p.add_argument("--dropout", type=float, default=0.1)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--negatives", type=int, default=20)
        p.add_argument("--pos-dim", type=int, default=50)
        p.add_argument("--max-depth", type=int, default=15)
        p.add_argument("--tree-hidden", type=int, default=100)
        p.add_argument("--min-count", type=int, default=2)
        p.add_argument("--edge-dim", type=int, default=300)
        p.add_argument("--cache", help="candidate cache path (default: <dataset>.cands.json)")
        p.add_argument("--out")

    for name, fn in (("pretrain-edges", cmd_pretrain_edges), ("train", cmd_train),
                     ("eval", cmd_eval), ("explain", cmd_explain), ("answer", cmd_answer)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn)
        if name == "explain":
            p.add_argument("--qid", required=True)
        if name == "answer":
            p.add_argument("--text")
    return parser


def _load_config_file(path) -> dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected `key = value`")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config_file(args, parser_defaults):
    """Config-file values fill in any option left at its parser default."""
    if not args.config:
        return args
    if not os.path.exists(args.config):
        raise CliError(f"--config: no such file {args.config!r}")
    for key, val in _load_config_file(args.config).items():
        if not hasattr(args, key):
            raise CliError(f"--config: unknown key {key!r}")
        current = getattr(args, key)
        default = parser_defaults.get(key)
        if current is None or current == default:
            cast = type(default) if default is not None else str
            setattr(args, key, cast(val) if cast in (int, float) else val)
    return args


_PARSER_DEFAULTS = {
    "epochs": 5, "batch": 32, "margin": 0.5, "dropout": 0.1, "lr": 1e-3,
    "seed": 0, "negatives": 20, "pos_dim": 50, "max_depth": 15,
    "tree_hidden": 100, "min_count": 2, "edge_dim": 300,
}


def main(argv=None) -> int:
    level = os.environ.get("SYNKBQA_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, _PARSER_DEFAULTS)
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
