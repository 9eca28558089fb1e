"""Skip-gram pretraining of dependency-edge embeddings.

An edge occurrence head --deprel--> tail predicts its neighborhood (the
incoming edge of the head plus the outgoing edges of the tail). Edges are
keyed lexically as `headform|deprel|tailform` (lowercased) with a per-deprel
backoff tier and a final UNK, so lookup never fails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .deptree import DepTree, DirectedEdge, edge_neighborhood

UNK_KEY = "<unk>"


def lex_key(head_form: str, deprel: str, tail_form: str) -> str:
    return f"{head_form.lower()}|{deprel}|{tail_form.lower()}"


@dataclass
class EdgeVocab:
    ids: dict[str, int]
    counts: dict[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    @property
    def unk_id(self) -> int:
        return self.ids[UNK_KEY]

    def lookup(self, edge: DirectedEdge) -> int:
        """Lexicalized key first, then the deprel backoff, then UNK."""
        key = lex_key(edge.head_form, edge.deprel, edge.tail_form)
        if key in self.ids:
            return self.ids[key]
        if edge.deprel in self.ids:
            return self.ids[edge.deprel]
        return self.unk_id

    def keys(self) -> list[str]:
        out = [None] * len(self.ids)
        for k, i in self.ids.items():
            out[i] = k
        return out


def build_edge_vocab(corpus: list[DepTree], min_count: int = 2) -> EdgeVocab:
    """Lexicalized keys kept at frequency >= min_count; all deprel backoff
    keys kept regardless; UNK always present."""
    if not corpus:
        raise ValueError("empty corpus")
    lex_counts: dict[str, int] = {}
    rel_counts: dict[str, int] = {}
    for tree in corpus:
        for e in tree.edges():
            k = lex_key(e.head_form, e.deprel, e.tail_form)
            lex_counts[k] = lex_counts.get(k, 0) + 1
            rel_counts[e.deprel] = rel_counts.get(e.deprel, 0) + 1
    ids: dict[str, int] = {}
    counts: dict[str, int] = {}
    for k in sorted(lex_counts):
        if lex_counts[k] >= min_count:
            ids[k] = len(ids)
            counts[k] = lex_counts[k]
    for rel in sorted(rel_counts):
        ids[rel] = len(ids)
        counts[rel] = rel_counts[rel]
    ids[UNK_KEY] = len(ids)
    counts[UNK_KEY] = 0
    return EdgeVocab(ids, counts)


def training_pairs(corpus: list[DepTree], vocab: EdgeVocab) -> list[tuple[int, int]]:
    """(center_id, context_id) for every edge occurrence and each of its
    neighborhood edges, in corpus order."""
    pairs: list[tuple[int, int]] = []
    for tree in corpus:
        for e in tree.edges():
            cid = vocab.lookup(e)
            for ctx in edge_neighborhood(tree, e):
                pairs.append((cid, vocab.lookup(ctx)))
    return pairs


@dataclass
class EdgeEmbeddings:
    keys: list[str]
    vectors: np.ndarray            # |V_e| x d input matrix (the E_e table)
    dim: int
    key_to_id: dict[str, int] = field(default_factory=dict)
    context_vectors: np.ndarray | None = None

    def __post_init__(self):
        if not self.key_to_id:
            self.key_to_id = {k: i for i, k in enumerate(self.keys)}

    def lookup(self, edge: DirectedEdge) -> int:
        key = lex_key(edge.head_form, edge.deprel, edge.tail_form)
        if key in self.key_to_id:
            return self.key_to_id[key]
        if edge.deprel in self.key_to_id:
            return self.key_to_id[edge.deprel]
        return self.key_to_id[UNK_KEY]


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def train_skipgram(pairs: list[tuple[int, int]], vocab: EdgeVocab, d: int = 300,
                   epochs: int = 5, negatives_k: int = 5, lr: float = 0.025,
                   seed: int = 0) -> tuple[EdgeEmbeddings, list[float]]:
    """Negative-sampling skip-gram over (center, context) id pairs.

    Negatives are drawn from the unigram^0.75 distribution of context ids.
    Deterministic for a fixed seed. Returns the embeddings and the mean
    negative log-likelihood per epoch.
    """
    if d <= 0:
        raise ValueError("embedding dimension must be positive")
    if negatives_k < 1:
        raise ValueError("need at least one negative sample")
    nv = len(vocab)
    rng = np.random.default_rng(seed)
    vin = (rng.random((nv, d)) - 0.5) / d
    vout = np.zeros((nv, d))
    freq = np.zeros(nv)
    for _, ctx in pairs:
        freq[ctx] += 1
    if freq.sum() == 0:
        freq[:] = 1.0
    probs = freq ** 0.75
    probs /= probs.sum()
    losses: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        for idx in order:
            center, ctx = pairs[idx]
            v = vin[center]
            negs = rng.choice(nv, size=negatives_k, p=probs)
            grad_v = np.zeros(d)
            for target, label in [(ctx, 1.0)] + [(int(n), 0.0) for n in negs]:
                u = vout[target]
                s = _sigmoid(float(v @ u))
                total -= math.log(max(s if label else 1.0 - s, 1e-12))
                g = lr * (label - s)
                grad_v += g * u
                vout[target] = u + g * v
            vin[center] = v + grad_v
        if not np.isfinite(total):
            raise RuntimeError(f"non-finite skip-gram loss at epoch {len(losses)}")
        losses.append(total / max(len(pairs), 1))
    emb = EdgeEmbeddings(vocab.keys(), vin, d, context_vectors=vout)
    return emb, losses


def save_embeddings(path, emb: EdgeEmbeddings) -> None:
    """Text format: header `|V| d`, then one `key v1 .. vd` line per entry."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(emb.keys)} {emb.dim}\n")
        for key, row in zip(emb.keys, emb.vectors):
            f.write(key + " " + " ".join("%.17g" % x for x in row) + "\n")


def load_embeddings(path) -> EdgeEmbeddings:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty embedding file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"{path}:1: expected `count dim` header")
    count, d = int(head[0]), int(head[1])
    keys: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != d + 1:
            raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(parts) - 1}")
        key = parts[0]
        if key in seen:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        keys.append(key)
        rows.append([float(v) for v in parts[1:]])
    if len(keys) != count:
        raise ValueError(f"{path}: header says {count} entries, found {len(keys)}")
    return EdgeEmbeddings(keys, np.array(rows), d)
