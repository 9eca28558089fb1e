"""Question-to-query-graph candidate generation: focus linking over the
store's aliases/types, main-path search, constraint attachment, and
F1-threshold labeling of candidates for training.
"""
from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from . import kb
from .embeddings import WordEmbeddings
from .kb import Hop, TripleStore, Value

log = logging.getLogger("synkbqa")

MAX_TYPE_LINKS = 10
MAX_CONSTRAINTS_PER_GRAPH = 4
F1_THRESHOLD = 0.5
NEGATIVES_PER_POSITIVE = 20

SUPERLATIVE_DIRECTION = {
    "largest": "descending", "highest": "descending", "latest": "descending",
    "last": "descending", "most": "descending", "biggest": "descending",
    "oldest": "descending", "newest": "descending", "longest": "descending",
    "best": "descending", "fastest": "descending",
    "smallest": "ascending", "lowest": "ascending", "earliest": "ascending",
    "first": "ascending", "least": "ascending", "youngest": "ascending",
    "shortest": "ascending", "worst": "ascending", "slowest": "ascending",
}
ORDINAL_WORDS = {
    "second": 2, "third": 3, "fourth": 4, "fifth": 5, "sixth": 6,
    "seventh": 7, "eighth": 8, "ninth": 9, "tenth": 10,
}
_ORDINAL_SUFFIX = re.compile(r"^(\d+)(st|nd|rd|th)$")
_YEAR = re.compile(r"^([12]\d{3})$")
_YEAR_RANGE = re.compile(r"^([12]\d{3})-([12]\d{3})$")

Span = tuple[int, int]  # token slice [start, end)


def spans_overlap(a: Span, b: Span) -> bool:
    return a[0] < b[1] and b[0] < a[1]


@dataclass(frozen=True)
class EntityLink:
    span: Span
    entity: str
    score: float


@dataclass(frozen=True)
class TypeLink:
    span: Span
    label: str
    score: float


@dataclass(frozen=True)
class TimeLink:
    span: Span
    op: str          # "==", "<", ">"
    value: Value


@dataclass(frozen=True)
class OrdinalLink:
    span: Span
    direction: str   # "ascending" | "descending"
    rank: int


@dataclass
class FocusLinks:
    entities: list[EntityLink] = field(default_factory=list)
    types: list[TypeLink] = field(default_factory=list)
    times: list[TimeLink] = field(default_factory=list)
    ordinals: list[OrdinalLink] = field(default_factory=list)

    def all_links(self):
        return list(self.entities) + list(self.types) + list(self.times) + list(self.ordinals)


@dataclass(frozen=True)
class EntityConstraint:
    node: int
    hop: Hop
    entity: str


@dataclass(frozen=True)
class TypeConstraint:
    label: str


@dataclass(frozen=True)
class TimeConstraint:
    node: int
    predicate: str
    op: str
    value: Value


@dataclass(frozen=True)
class OrdinalConstraint:
    node: int
    key_predicate: str
    direction: str
    rank: int


_CMP_NAME = {"==": "cmp_eq", "<": "cmp_lt", ">": "cmp_gt"}
_ORD_NAME = {"ascending": "ord_asc", "descending": "ord_desc"}


def render_hop(hop: Hop) -> str:
    pred, inverse = hop
    return f"{pred}_inv" if inverse else pred


def constraint_key(c) -> str:
    if isinstance(c, EntityConstraint):
        return f"ent:{c.node}:{render_hop(c.hop)}:{c.entity}"
    if isinstance(c, TypeConstraint):
        return f"type:{c.label}"
    if isinstance(c, TimeConstraint):
        return f"time:{c.node}:{c.predicate}:{_CMP_NAME[c.op]}:{c.value.render()}"
    if isinstance(c, OrdinalConstraint):
        return f"ord:{c.node}:{c.key_predicate}:{_ORD_NAME[c.direction]}:{c.rank}"
    raise TypeError(f"unknown constraint {c!r}")


@dataclass(frozen=True)
class QueryGraph:
    entity: str
    hops: tuple[Hop, ...]
    constraints: tuple = ()
    entity_score: float = 1.0

    def canonical(self) -> str:
        hops = "..".join(render_hop(h) for h in self.hops)
        cons = ";".join(sorted(constraint_key(c) for c in self.constraints))
        return f"{self.entity}|{hops}|{cons}"

    def answer_node(self) -> int:
        return len(self.hops)


@dataclass
class LabeledCandidate:
    graph: QueryGraph
    f1: float
    polarity: str                   # "positive" | "negative"
    answers: tuple[str, ...] = ()


def link_entities(tokens: list[str], store: TripleStore) -> list[EntityLink]:
    """Longest-match case-insensitive alias spans; overlapping shorter
    matches are dropped. Score is matched span length over the length of the
    entity's longest alias."""
    alias_map: dict[tuple[str, ...], list[str]] = {}
    longest: dict[str, int] = {}
    for eid in sorted(store.entities):
        for alias in store.entities[eid].aliases:
            words = tuple(alias.lower().split())
            if not words:
                continue
            alias_map.setdefault(words, [])
            if eid not in alias_map[words]:
                alias_map[words].append(eid)
            longest[eid] = max(longest.get(eid, 0), len(words))
    lowered = [t.lower() for t in tokens]
    max_len = max((len(w) for w in alias_map), default=0)
    used = [False] * len(tokens)
    links: list[EntityLink] = []
    for length in range(min(max_len, len(tokens)), 0, -1):
        for start in range(0, len(tokens) - length + 1):
            if any(used[start:start + length]):
                continue
            key = tuple(lowered[start:start + length])
            if key not in alias_map:
                continue
            for eid in alias_map[key]:
                links.append(EntityLink((start, start + length), eid, length / longest[eid]))
            for k in range(start, start + length):
                used[k] = True
    links.sort(key=lambda l: (l.span, l.entity))
    return links


def _label_words(label: str) -> list[str]:
    return [w for w in label.replace("_", " ").split() if w]


def link_types(tokens: list[str], type_labels: list[str],
               word_emb: WordEmbeddings) -> list[TypeLink]:
    """Cosine between mean vectors of 1-3 word spans and each type label;
    global top-10, ties broken by (span start, label)."""
    label_vecs = {lab: word_emb.mean_vector(_label_words(lab)) for lab in type_labels}
    scored: list[TypeLink] = []
    for start in range(len(tokens)):
        for length in (1, 2, 3):
            end = start + length
            if end > len(tokens):
                break
            v = word_emb.mean_vector([t.lower() for t in tokens[start:end]])
            nv = np.linalg.norm(v)
            for lab in type_labels:
                lv = label_vecs[lab]
                nl = np.linalg.norm(lv)
                score = 0.0 if nv == 0 or nl == 0 else float(v @ lv) / (nv * nl)
                scored.append(TypeLink((start, end), lab, score))
    scored.sort(key=lambda l: (-l.score, l.span[0], l.label, l.span[1]))
    return scored[:MAX_TYPE_LINKS]


def link_time(tokens: list[str]) -> list[TimeLink]:
    """4-digit years in 1000..2999, `YYYY-YYYY` ranges, and in/before/after
    prepositions mapped to ==/</>."""
    links: list[TimeLink] = []
    for i, tok in enumerate(tokens):
        m = _YEAR.match(tok)
        if m:
            year = int(m.group(1))
            op = {"in": "==", "before": "<", "after": ">"}.get(
                tokens[i - 1].lower() if i > 0 else "", "==")
            links.append(TimeLink((i, i + 1), op, Value.year(year)))
            continue
        m = _YEAR_RANGE.match(tok)
        if m:
            links.append(TimeLink((i, i + 1), ">", Value.year(int(m.group(1)))))
            links.append(TimeLink((i, i + 1), "<", Value.year(int(m.group(2)))))
    return links


def link_ordinal(tokens: list[str]) -> list[OrdinalLink]:
    """Superlative lexicon gives rank 1 with a polarity direction; an
    ordinal word directly before the superlative overrides the rank."""
    links: list[OrdinalLink] = []
    for i, tok in enumerate(tokens):
        word = tok.lower()
        if word not in SUPERLATIVE_DIRECTION:
            continue
        rank = 1
        start = i
        if i > 0:
            prev = tokens[i - 1].lower()
            if prev in ORDINAL_WORDS:
                rank = ORDINAL_WORDS[prev]
                start = i - 1
            else:
                m = _ORDINAL_SUFFIX.match(prev)
                if m:
                    rank = int(m.group(1))
                    start = i - 1
        links.append(OrdinalLink((start, i + 1), SUPERLATIVE_DIRECTION[word], rank))
    return links


def make_focus_links(tokens: list[str], store: TripleStore,
                     word_emb: WordEmbeddings) -> FocusLinks:
    return FocusLinks(
        entities=link_entities(tokens, store),
        types=link_types(tokens, store.type_labels(), word_emb),
        times=link_time(tokens),
        ordinals=link_ordinal(tokens),
    )


def _main_paths(store: TripleStore, entity: str,
                two_hop_limit: int) -> list[tuple[Hop, ...]]:
    paths = sorted({(hop,) for hop, _ in kb.one_hop(store, entity)})
    paths += sorted({(h1, h2) for h1, _, h2, _ in kb.two_hop(store, entity, two_hop_limit)})
    return paths


def _constraint_options(link, hops, bindings, store: TripleStore) -> list:
    """All single-constraint attachments a focus link can contribute to one
    main path (nodes are 1..len(hops); the last node is the answer)."""
    answer_node = len(hops)
    opts = []
    if isinstance(link, EntityLink):
        for node in range(1, answer_node + 1):
            found = set()
            for b in bindings:
                v = b[node]
                if v.kind != "entity":
                    continue
                for hop, val in kb.one_hop(store, v.entity_id):
                    if val.kind == "entity" and val.entity_id == link.entity:
                        found.add(hop)
            opts += [EntityConstraint(node, hop, link.entity) for hop in sorted(found)]
    elif isinstance(link, TypeLink):
        opts.append(TypeConstraint(link.label))
    elif isinstance(link, TimeLink):
        for node in range(1, answer_node + 1):
            preds = set()
            for b in bindings:
                v = b[node]
                if v.kind != "entity":
                    continue
                for p, o in store.facts_of(v.entity_id):
                    if o.is_time():
                        preds.add(p)
            opts += [TimeConstraint(node, p, link.op, link.value) for p in sorted(preds)]
    elif isinstance(link, OrdinalLink):
        preds = set()
        for b in bindings:
            v = b[answer_node]
            if v.kind != "entity":
                continue
            for p, o in store.facts_of(v.entity_id):
                if o.is_time() or o.kind == "int":
                    preds.add(p)
        opts += [OrdinalConstraint(answer_node, p, link.direction, link.rank)
                 for p in sorted(preds)]
    return opts


def generate_candidates(tokens: list[str], links: FocusLinks, store: TripleStore,
                        max_constraints: int = MAX_CONSTRAINTS_PER_GRAPH,
                        two_hop_limit: int = kb.DEFAULT_TWO_HOP_LIMIT) -> list[QueryGraph]:
    """Every entity link grounds one- and two-hop main paths; every other
    non-overlapping link attaches at most one constraint per graph. The
    result is deduplicated and deterministically ordered."""
    seen: dict[str, QueryGraph] = {}
    for el in links.entities:
        others = [l for l in links.all_links()
                  if l is not el and not spans_overlap(l.span, el.span)]
        for hops in _main_paths(store, el.entity, two_hop_limit):
            bindings = kb.main_path_bindings(store, el.entity, hops)
            if not bindings:
                continue
            option_sets = []
            for link in others:
                opts = _constraint_options(link, hops, bindings, store)
                if opts:
                    option_sets.append([None] + opts)
            for selection in itertools.product(*option_sets):
                cons = tuple(c for c in selection if c is not None)
                if len(cons) > max_constraints:
                    continue
                keys = [constraint_key(c) for c in cons]
                if len(set(keys)) != len(keys):
                    continue
                graph = QueryGraph(el.entity, hops,
                                   tuple(sorted(cons, key=constraint_key)), el.score)
                key = graph.canonical()
                if key not in seen:
                    seen[key] = graph
    return [seen[k] for k in sorted(seen)]


def f1_score(predicted: set, gold: set) -> float:
    if not gold:
        raise ValueError("gold answer set must be nonempty")
    if not predicted:
        return 0.0
    inter = len(set(predicted) & set(gold))
    if inter == 0:
        return 0.0
    p = inter / len(predicted)
    r = inter / len(gold)
    return 2 * p * r / (p + r)


def label_candidates(candidates: list[QueryGraph], store: TripleStore,
                     gold: set[str], threshold: float = F1_THRESHOLD) -> list[LabeledCandidate]:
    """Execute each candidate, compute F1 against the gold strings, and mark
    it positive iff F1 strictly exceeds the threshold. Candidates that fail
    to execute or produce no answers are dropped (the former with a
    warning)."""
    labeled: list[LabeledCandidate] = []
    dropped = 0
    for graph in candidates:
        try:
            answers = kb.execute(store, graph)
        except kb.KbError as exc:
            dropped += 1
            log.warning("dropping candidate %s: %s", graph.canonical(), exc)
            continue
        if not answers:
            continue
        rendered = tuple(sorted(v.render() for v in answers))
        score = f1_score(set(rendered), gold)
        labeled.append(LabeledCandidate(graph, score,
                                        "positive" if score > threshold else "negative",
                                        rendered))
    if dropped:
        log.warning("dropped %d unexecutable candidates", dropped)
    return labeled


def make_training_pairs(labeled: list[LabeledCandidate],
                        n_neg: int = NEGATIVES_PER_POSITIVE) -> list[tuple[int, int]]:
    """(positive index, negative index) pairs; negatives are the hardest
    n_neg by descending F1."""
    pos = [i for i, c in enumerate(labeled) if c.polarity == "positive"]
    neg = [i for i, c in enumerate(labeled) if c.polarity == "negative"]
    neg.sort(key=lambda i: (-labeled[i].f1, labeled[i].graph.canonical()))
    neg = neg[:n_neg]
    return [(p, n) for p in pos for n in neg]
