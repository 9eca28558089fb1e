"""Semantic matching and training: query graphs become maxpooled sub-path
vectors, (question, graph) pairs are scored by cosine plus weighted
auxiliary features, and the whole model trains with a margin ranking loss.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import encoders, qgraph
from .autodiff import Adam, Tensor
from .deptree import DepTree, WH_WORDS
from .edgevec import EdgeEmbeddings
from .embeddings import WordEmbeddings
from .kb import TripleStore
from .qgraph import (EntityConstraint, FocusLinks, LabeledCandidate,
                     OrdinalConstraint, QueryGraph, TimeConstraint,
                     TypeConstraint, _CMP_NAME, _ORD_NAME, render_hop)

log = logging.getLogger("synkbqa")

VALID_FLAGS = ("sdp", "tpf", "treegru")
UNK = "<unk>"
FEATURE_NAMES = ("semantic", "entity_link", "constraint_count", "path_length", "answer_size")


class TrainingDataError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    flags: tuple[str, ...] = ()
    pos_dim: int = 50
    max_depth: int = 15
    tree_hidden: int = 100
    dropout: float = 0.1
    margin: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 5
    n_negatives: int = 20
    f1_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for f in self.flags:
            if f not in VALID_FLAGS:
                raise ValueError(f"unknown syntax flag {f!r}")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


def split_subpaths(graph: QueryGraph) -> list[str]:
    """One relation string per focus: the main path, then for each
    constraint the predicate chain from the answer node to that focus.
    Two-hop chains join predicates with `..`; virtual predicates render as
    cmp_eq/cmp_lt/cmp_gt and ord_asc/ord_desc."""
    subs = ["..".join(render_hop(h) for h in graph.hops)]
    answer = len(graph.hops)

    def back_chain(node: int) -> list[str]:
        return [render_hop((graph.hops[k][0], not graph.hops[k][1]))
                for k in range(answer - 1, node - 1, -1)]

    for c in graph.constraints:
        if isinstance(c, TypeConstraint):
            subs.append(c.label)
        elif isinstance(c, EntityConstraint):
            subs.append("..".join(back_chain(c.node) + [render_hop(c.hop)]))
        elif isinstance(c, TimeConstraint):
            subs.append("..".join(back_chain(c.node) + [c.predicate, _CMP_NAME[c.op]]))
        elif isinstance(c, OrdinalConstraint):
            subs.append("..".join(back_chain(c.node) + [c.key_predicate, _ORD_NAME[c.direction]]))
    return subs


def relation_words(relation: str) -> list[str]:
    out: list[str] = []
    for chunk in relation.split(".."):
        out += [w for w in chunk.lower().split("_") if w]
    return out


class Model:
    """All trainable tables and recurrent parameters, keyed by name."""

    def __init__(self, cfg: TrainConfig, word_emb: WordEmbeddings,
                 relations: list[str], labels: list[str],
                 edge_emb: EdgeEmbeddings | None = None):
        if word_emb.dim % 2 != 0:
            raise ValueError("word embedding dimension must be even (output width is 2H = d)")
        if "treegru" in cfg.flags and edge_emb is None:
            raise ValueError("treegru flag requires edge embeddings")
        self.cfg = cfg
        self.dim = word_emb.dim
        self.hidden = word_emb.dim // 2
        self.word_tokens = list(word_emb.tokens)
        self._word_ids = {t: i for i, t in enumerate(self.word_tokens)}
        self.relations = list(relations)
        if UNK not in self.relations:
            self.relations.append(UNK)
        self._rel_ids = {r: i for i, r in enumerate(self.relations)}
        self.labels = list(labels)
        if UNK not in self.labels:
            self.labels.append(UNK)
        self._label_ids = {l: i for i, l in enumerate(self.labels)}
        self.edge_emb = edge_emb

        rng = np.random.default_rng(cfg.seed)
        d, h = self.dim, self.hidden
        self.params: dict[str, Tensor] = {}
        self.params["E_w"] = Tensor(word_emb.matrix.copy())
        self.params["E_sp"] = ad.xavier_init((len(self.relations), d), rng)
        self.params["feat_w"] = Tensor(np.array([1.0, 1.0, 0.0, 0.0, 0.0]))
        self.base = encoders.BiGRUParams.create(d, h, rng)
        self.params.update(self.base.named("base"))
        self.sdp_gru = self.tpf_gru = self.tg_gru = None
        self.tree_up = self.tree_down = None
        if "sdp" in cfg.flags:
            self.params["E_lab"] = ad.xavier_init((len(self.labels), d), rng)
            self.sdp_gru = encoders.BiGRUParams.create(d, h, rng)
            self.params.update(self.sdp_gru.named("sdp"))
        if "tpf" in cfg.flags:
            self.params["E_pos"] = ad.xavier_init((cfg.max_depth + 2, cfg.pos_dim), rng)
            self.tpf_gru = encoders.BiGRUParams.create(d + cfg.pos_dim, h, rng)
            self.params.update(self.tpf_gru.named("tpf"))
        if "treegru" in cfg.flags:
            de, ht = edge_emb.dim, cfg.tree_hidden
            self.params["E_e"] = Tensor(edge_emb.vectors.copy())
            self.params["root_edge"] = ad.xavier_init((de,), rng)
            self.tree_up = encoders.TreePassParams.create(de, ht, rng)
            self.tree_down = encoders.TreePassParams.create(de, ht, rng)
            self.params.update(self.tree_up.named("tree_up"))
            self.params.update(self.tree_down.named("tree_down"))
            self.tg_gru = encoders.BiGRUParams.create(d + 2 * ht, h, rng)
            self.params.update(self.tg_gru.named("tg"))

    def word_id(self, form: str) -> int:
        i = self._word_ids.get(form)
        if i is None:
            i = self._word_ids.get(form.lower())
        return self._word_ids[UNK] if i is None else i

    def word_vec(self, form: str) -> Tensor:
        return ad.lookup_row(self.params["E_w"], self.word_id(form))

    def label_vec(self, deprel: str) -> Tensor:
        i = self._label_ids.get(deprel, self._label_ids[UNK])
        return ad.lookup_row(self.params["E_lab"], i)

    def relation_id(self, relation: str) -> int:
        return self._rel_ids.get(relation, self._rel_ids[UNK])


@dataclass
class PreparedQuestion:
    qid: str
    text: str
    tree: DepTree
    tokens: list[str]
    anon_tokens: list[str]
    links: FocusLinks
    labeled: list[LabeledCandidate]
    pairs: list[tuple[int, int]] = field(default_factory=list)


def prepare_question(qid: str, text: str, tree: DepTree, gold: set[str],
                     store: TripleStore, word_emb: WordEmbeddings,
                     cfg: TrainConfig) -> PreparedQuestion:
    """Link foci, generate and label candidates, and build training pairs."""
    tokens = tree.forms()
    links = qgraph.make_focus_links(tokens, store, word_emb)
    candidates = qgraph.generate_candidates(tokens, links, store)
    labeled = qgraph.label_candidates(candidates, store, gold, cfg.f1_threshold) if gold else []
    pairs = qgraph.make_training_pairs(labeled, cfg.n_negatives)
    return PreparedQuestion(qid, text, tree, tokens,
                            encoders.anonymize(tokens, links), links, labeled, pairs)


def sdp_focus_spans(links: FocusLinks) -> list:
    """Focus spans encoded as dependency paths: all entity, time and ordinal
    links plus the single best type link."""
    spans = [l.span for l in links.entities] + [l.span for l in links.times]
    spans += [l.span for l in links.ordinals]
    if links.types:
        best = max(links.types, key=lambda t: (t.score, -t.span[0]))
        spans.append(best.span)
    return spans


def encode_question(model: Model, q: PreparedQuestion,
                    drop: encoders.DropoutCtx = encoders.EVAL_DROPOUT) -> Tensor:
    base_inputs = [drop.apply(model.word_vec(tok)) for tok in q.anon_tokens]
    qvec = encoders.bigru_encode(base_inputs, model.base)
    extras = []
    if "sdp" in model.cfg.flags:
        extras.append(encoders.encode_sdp(q.tree, sdp_focus_spans(q.links),
                                          model.word_vec, model.label_vec, model.sdp_gru))
    if "tpf" in model.cfg.flags:
        word_vecs = [model.word_vec(f) for f in q.tree.forms()]
        extras.append(encoders.encode_tpf(q.tree, word_vecs, model.params["E_pos"],
                                          model.cfg.max_depth, model.tpf_gru, drop))
    if "treegru" in model.cfg.flags:
        word_vecs = [model.word_vec(f) for f in q.tree.forms()]
        edge_vecs = {}
        for i in range(1, len(q.tree) + 1):
            if i == q.tree.root:
                edge_vecs[i] = model.params["root_edge"]
            else:
                edge_vecs[i] = ad.lookup_row(model.params["E_e"],
                                             model.edge_emb.lookup(q.tree.edge(i)))
        extras.append(encoders.encode_treegru(q.tree, word_vecs, edge_vecs,
                                              model.tree_up, model.tree_down,
                                              model.tg_gru, drop))
    return encoders.combine(qvec, extras)


def encode_subpath(model: Model, relation: str) -> Tensor:
    """Id-level row plus the mean of the relation's word vectors."""
    sp_id = ad.lookup_row(model.params["E_sp"], model.relation_id(relation))
    words = relation_words(relation)
    if not words:
        return sp_id
    sp_w = ad.mean_n([ad.lookup_row(model.params["E_w"], model.word_id(w)) for w in words])
    return ad.add(sp_id, sp_w)


def encode_graph(model: Model, graph: QueryGraph) -> Tensor:
    return ad.maxpool_n([encode_subpath(model, r) for r in split_subpaths(graph)])


def semantic_score(q_repr: Tensor, graph_repr: Tensor) -> Tensor:
    return ad.cosine(q_repr, graph_repr)


def total_score(model: Model, q_repr: Tensor, cand: LabeledCandidate) -> Tensor:
    """Weighted sum of the semantic score and the auxiliary features."""
    s_rm = semantic_score(q_repr, encode_graph(model, cand.graph))
    feats = ad.stack_scalars([
        s_rm,
        ad.constant(cand.graph.entity_score),
        ad.constant(len(cand.graph.constraints) / 4.0),
        ad.constant(float(len(cand.graph.hops) - 1)),
        ad.constant(math.log10(1.0 + len(cand.answers))),
    ])
    score = ad.dot(model.params["feat_w"], feats)
    if not np.isfinite(score.data):
        raise ValueError("non-finite candidate score")
    return score


def hinge_loss(s_pos: Tensor, s_neg: Tensor, margin: float) -> Tensor:
    """max{0, margin - s_pos + s_neg}."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    return ad.relu(ad.add(ad.sub(ad.constant(float(margin)), s_pos), s_neg))


def train(prepared: list[PreparedQuestion], cfg: TrainConfig,
          word_emb: WordEmbeddings, edge_emb: EdgeEmbeddings | None = None,
          log_fn=None) -> tuple[Model, list[float]]:
    """Margin-ranking training over (question, positive, negative) pairs.

    Pairs shuffle per epoch grouped by question (so each batch reuses the
    question encodings it touches), then stream through fixed-size batches
    with one Adam step per batch. Deterministic for a fixed config.
    """
    trainable = [q for q in prepared if q.pairs]
    skipped = len(prepared) - len(trainable)
    if skipped:
        log.info("skipping %d questions without usable training pairs", skipped)
    if not trainable:
        raise TrainingDataError("no questions with both positive and negative candidates")

    relations = sorted({r for q in trainable for c in q.labeled
                        for r in split_subpaths(c.graph)})
    labels = sorted({t.deprel for q in prepared for t in q.tree.tokens})
    model = Model(cfg, word_emb, relations, labels, edge_emb)
    adam = Adam(model.params, lr=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 1])
    history: list[float] = []
    for epoch in range(cfg.epochs):
        items: list[tuple[PreparedQuestion, int, int]] = []
        for qi in rng.permutation(len(trainable)):
            q = trainable[qi]
            for pi in rng.permutation(len(q.pairs)):
                items.append((q, *q.pairs[pi]))
        total = 0.0
        for start in range(0, len(items), cfg.batch_size):
            batch = items[start:start + cfg.batch_size]
            tape = ad.Tape()
            for p in model.params.values():
                tape.watch(p)
            drop = encoders.DropoutCtx(cfg.dropout, rng, True)
            qcache: dict[str, Tensor] = {}
            losses = []
            for q, ipos, ineg in batch:
                if q.qid not in qcache:
                    qcache[q.qid] = encode_question(model, q, drop)
                qv = qcache[q.qid]
                s_pos = total_score(model, qv, q.labeled[ipos])
                s_neg = total_score(model, qv, q.labeled[ineg])
                losses.append(hinge_loss(s_pos, s_neg, cfg.margin))
            batch_loss = ad.scale(ad.add_n(losses), 1.0 / len(losses))
            if not np.isfinite(batch_loss.data):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}")
            tape.backward(batch_loss)
            adam.step()
            total += float(batch_loss.data) * len(losses)
        mean = total / len(items)
        history.append(mean)
        if log_fn:
            log_fn(epoch, mean)
    return model, history


@dataclass
class QuestionResult:
    qid: str
    f1: float
    n_candidates: int
    chosen: LabeledCandidate | None
    wh: str
    length_bucket: str


@dataclass
class EvalReport:
    results: list[QuestionResult]

    @property
    def mean_f1(self) -> float:
        return sum(r.f1 for r in self.results) / len(self.results) if self.results else 0.0

    def bucket_means(self, key) -> dict[str, tuple[float, int]]:
        groups: dict[str, list[float]] = {}
        for r in self.results:
            groups.setdefault(key(r), []).append(r.f1)
        return {k: (sum(v) / len(v), len(v)) for k, v in sorted(groups.items())}

    def rows(self) -> list[tuple[str, str, str]]:
        """TSV rows: metric, bucket, value."""
        out = [("f1", "overall", "%.6f" % self.mean_f1),
               ("count", "overall", str(len(self.results)))]
        for wh, (m, n) in self.bucket_means(lambda r: f"wh:{r.wh}").items():
            out.append(("f1", wh, "%.6f" % m))
            out.append(("count", wh, str(n)))
        for bucket in ("SHORT", "MID", "LONG"):
            hits = [r.f1 for r in self.results if r.length_bucket == bucket]
            out.append(("f1", f"len:{bucket}", "%.6f" % (sum(hits) / len(hits)) if hits else "0.000000"))
            out.append(("count", f"len:{bucket}", str(len(hits))))
        return out

    def render_table(self) -> str:
        lines = [f"{'bucket':<16}{'f1':>10}{'count':>8}"]
        seen = {}
        for metric, bucket, value in self.rows():
            seen.setdefault(bucket, {})[metric] = value
        for bucket, vals in seen.items():
            lines.append(f"{bucket:<16}{vals.get('f1', '-'):>10}{vals.get('count', '-'):>8}")
        return "\n".join(lines)


def length_bucket(n_tokens: int) -> str:
    if n_tokens <= 4:
        return "SHORT"
    if n_tokens <= 7:
        return "MID"
    return "LONG"


def wh_bucket(tokens: list[str]) -> str:
    first = tokens[0].lower() if tokens else ""
    return first if first in WH_WORDS else "other"


def evaluate(model: Model, prepared: list[PreparedQuestion]) -> EvalReport:
    """Argmax-score candidate per question, scored by its labeled F1.
    Questions without candidates count as F1 = 0."""
    results = []
    for q in prepared:
        chosen = None
        f1 = 0.0
        if q.labeled:
            qv = encode_question(model, q)
            scores = [float(total_score(model, qv, c).data) for c in q.labeled]
            best = int(np.argmax(scores))
            chosen = q.labeled[best]
            f1 = chosen.f1
        results.append(QuestionResult(q.qid, f1, len(q.labeled), chosen,
                                      wh_bucket(q.tokens), length_bucket(len(q.tokens))))
    return EvalReport(results)


def save_checkpoint(model: Model, path) -> None:
    """Named-matrix checkpoint plus a `<path>.manifest` with the config and
    the vocabularies needed to rebuild the model."""
    ad.save_matrices(path, {k: t.data for k, t in model.params.items()})
    cfg = model.cfg
    lines = [
        f"flags = {','.join(cfg.flags)}",
        f"dim = {model.dim}",
        f"pos_dim = {cfg.pos_dim}",
        f"max_depth = {cfg.max_depth}",
        f"tree_hidden = {cfg.tree_hidden}",
        f"dropout = {cfg.dropout}",
        f"margin = {cfg.margin}",
        f"seed = {cfg.seed}",
        f"words = {' '.join(model.word_tokens)}",
        f"relations = {' '.join(model.relations)}",
        f"labels = {' '.join(model.labels)}",
    ]
    if model.edge_emb is not None:
        lines.append(f"edges = {' '.join(model.edge_emb.keys)}")
        lines.append(f"edge_dim = {model.edge_emb.dim}")
    with open(str(path) + ".manifest", "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> Model:
    manifest: dict[str, str] = {}
    with open(str(path) + ".manifest", "r", encoding="utf-8") as f:
        for line in f:
            if "=" in line:
                k, v = line.split("=", 1)
                manifest[k.strip()] = v.strip()
    flags = tuple(f for f in manifest.get("flags", "").split(",") if f)
    cfg = TrainConfig(flags=flags,
                      pos_dim=int(manifest["pos_dim"]),
                      max_depth=int(manifest["max_depth"]),
                      tree_hidden=int(manifest["tree_hidden"]),
                      dropout=float(manifest["dropout"]),
                      margin=float(manifest["margin"]),
                      seed=int(manifest["seed"]))
    named = ad.load_matrices(path)
    words = manifest["words"].split()
    word_emb = WordEmbeddings(words, named["E_w"])
    edge_emb = None
    if "edges" in manifest:
        keys = manifest["edges"].split()
        edge_emb = EdgeEmbeddings(keys, named["E_e"], int(manifest["edge_dim"]))
    relations = manifest["relations"].split()
    labels = manifest["labels"].split()
    model = Model(cfg, word_emb, relations, labels, edge_emb)
    for name, tensor in model.params.items():
        if name not in named:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        tensor.data = named[name].reshape(tensor.data.shape)
    return model
