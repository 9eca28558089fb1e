"""Question-side encoders: the base BiGRU over anonymized tokens, the
shortest-dependency-path encoder, the tree-position-feature encoder, and the
two-pass Tree-GRU over whole parse trees. All encoders emit vectors of the
shared output width 2H so they can be accumulated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .deptree import DepTree, answer_word, depth, sdp
from .embeddings import ENTITY_TOKEN, TIME_TOKEN
from .qgraph import FocusLinks, Span


@dataclass
class DropoutCtx:
    rate: float = 0.0
    rng: np.random.Generator | None = None
    training: bool = False

    def apply(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        return ad.dropout(x, self.rate, self.rng, True)


EVAL_DROPOUT = DropoutCtx()


@dataclass
class GRUDirParams:
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    @classmethod
    def create(cls, input_dim: int, hidden: int, rng: np.random.Generator) -> "GRUDirParams":
        def w():
            return ad.xavier_init((hidden, input_dim), rng)

        def u():
            return ad.xavier_init((hidden, hidden), rng)

        def b():
            return Tensor(np.zeros(hidden))
        return cls(w(), u(), b(), w(), u(), b(), w(), u(), b())

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in
                ("w_r", "u_r", "b_r", "w_z", "u_z", "b_z", "w_h", "u_h", "b_h")}

    @property
    def hidden(self) -> int:
        return self.w_r.data.shape[0]


@dataclass
class BiGRUParams:
    fwd: GRUDirParams
    bwd: GRUDirParams

    @classmethod
    def create(cls, input_dim: int, hidden: int, rng: np.random.Generator) -> "BiGRUParams":
        return cls(GRUDirParams.create(input_dim, hidden, rng),
                   GRUDirParams.create(input_dim, hidden, rng))

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {**self.fwd.named(f"{prefix}.fwd"), **self.bwd.named(f"{prefix}.bwd")}

    @property
    def hidden(self) -> int:
        return self.fwd.hidden


def gru_step(p: GRUDirParams, x: Tensor, h: Tensor) -> Tensor:
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(p.w_r, x), ad.matmul(p.u_r, h)), p.b_r))
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(p.w_z, x), ad.matmul(p.u_z, h)), p.b_z))
    cand = ad.tanh(ad.add(ad.add(ad.matmul(p.w_h, x), ad.matmul(p.u_h, ad.mul(r, h))), p.b_h))
    keep = ad.sub(ad.constant(np.ones(p.hidden)), z)
    return ad.add(ad.mul(keep, h), ad.mul(z, cand))


def gru_last_hidden(p: GRUDirParams, xs: list[Tensor]) -> Tensor:
    h = ad.constant(np.zeros(p.hidden))
    for x in xs:
        h = gru_step(p, x, h)
    return h


def bigru_encode(xs: list[Tensor], params: BiGRUParams) -> Tensor:
    """Concatenated last hidden states of the forward and backward GRU."""
    if not xs:
        raise ValueError("bigru_encode: empty input sequence")
    return ad.concat([gru_last_hidden(params.fwd, xs),
                      gru_last_hidden(params.bwd, list(reversed(xs)))])


def anonymize(tokens: list[str], links: FocusLinks) -> list[str]:
    """Replace entity-link spans with <E> and time spans with <Tm>.
    Overlaps resolve longer-span-first."""
    marks: list[tuple[Span, str]] = []
    for el in links.entities:
        marks.append((el.span, ENTITY_TOKEN))
    for tl in links.times:
        marks.append((tl.span, TIME_TOKEN))
    marks.sort(key=lambda m: (-(m[0][1] - m[0][0]), m[0][0]))
    chosen: list[tuple[Span, str]] = []
    for span, sym in marks:
        if not any(s[0] < span[1] and span[0] < s[1] for (s, _) in chosen):
            chosen.append((span, sym))
    chosen.sort(key=lambda m: m[0][0])
    out: list[str] = []
    i = 0
    while i < len(tokens):
        repl = next((sym for (s, e), sym in chosen if s == i), None)
        if repl is not None:
            out.append(repl)
            i = next(e for (s, e), _ in chosen if s == i)
        else:
            out.append(tokens[i])
            i += 1
    return out


def focus_token_index(tree: DepTree, span: Span) -> int:
    """Representative token of a focus span: smallest tree depth, with the
    rightmost token winning ties."""
    best = None
    for i in range(span[0] + 1, span[1] + 1):  # spans are 0-based, tokens 1-based
        d = depth(tree, i)
        if best is None or d <= best[0]:
            best = (d, i)
    return best[1]


def encode_sdp(tree: DepTree, focus_spans: list[Span],
               word_vec, label_vec, params: BiGRUParams) -> Tensor:
    """BiGRU over each answer-to-focus path (words and edge labels
    interleaved as tokens), maxpooled across paths. Zero vector when there
    are no focus links.

    `word_vec(form)` and `label_vec(deprel)` must return input tensors of
    the BiGRU input width.
    """
    if not focus_spans:
        return ad.constant(np.zeros(2 * params.hidden))
    source = answer_word(tree)
    path_vecs = []
    for span in focus_spans:
        path = sdp(tree, source, focus_token_index(tree, span))
        xs = [word_vec(path.forms[0])]
        for step, form in zip(path.steps, path.forms[1:]):
            xs.append(label_vec(step.label))
            xs.append(word_vec(form))
        path_vecs.append(bigru_encode(xs, params))
    return ad.maxpool_n(path_vecs)


def encode_tpf(tree: DepTree, word_vecs: list[Tensor], pos_table: Tensor,
               max_depth: int, params: BiGRUParams, drop: DropoutCtx = EVAL_DROPOUT) -> Tensor:
    """BiGRU over [word vector ; depth vector] inputs. Depths beyond
    max_depth use the overflow row."""
    if len(word_vecs) != len(tree):
        raise ValueError(f"token/tree length mismatch: {len(word_vecs)} vs {len(tree)}")
    xs = []
    for i, wv in enumerate(word_vecs, start=1):
        d = min(depth(tree, i), max_depth + 1)
        xs.append(drop.apply(ad.concat([wv, ad.lookup_row(pos_table, d)])))
    return bigru_encode(xs, params)


@dataclass
class TreeGateParams:
    """One gate of a tree pass: sigma(W l + U hbar_L + V hbar_R + b)."""
    w: Tensor
    u: Tensor
    v: Tensor
    b: Tensor

    @classmethod
    def create(cls, edge_dim: int, hidden: int, rng: np.random.Generator) -> "TreeGateParams":
        return cls(ad.xavier_init((hidden, edge_dim), rng),
                   ad.xavier_init((hidden, hidden), rng),
                   ad.xavier_init((hidden, hidden), rng),
                   Tensor(np.zeros(hidden)))

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.u": self.u,
                f"{prefix}.v": self.v, f"{prefix}.b": self.b}

    def pre(self, l: Tensor, hl: Tensor, hr: Tensor) -> Tensor:
        return ad.add(ad.add(ad.add(ad.matmul(self.w, l), ad.matmul(self.u, hl)),
                             ad.matmul(self.v, hr)), self.b)


_GATE_NAMES = ("r_l", "r_r", "z_l", "z_r", "z", "cand")


@dataclass
class TreePassParams:
    gates: dict[str, TreeGateParams]

    @classmethod
    def create(cls, edge_dim: int, hidden: int, rng: np.random.Generator) -> "TreePassParams":
        return cls({name: TreeGateParams.create(edge_dim, hidden, rng) for name in _GATE_NAMES})

    def named(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in _GATE_NAMES:
            out.update(self.gates[name].named(f"{prefix}.{name}"))
        return out

    @property
    def hidden(self) -> int:
        return self.gates["z"].w.data.shape[0]


def _tree_node_state(p: TreePassParams, l: Tensor, hl: Tensor, hr: Tensor) -> Tensor:
    rl = ad.sigmoid(p.gates["r_l"].pre(l, hl, hr))
    rr = ad.sigmoid(p.gates["r_r"].pre(l, hl, hr))
    zl = ad.sigmoid(p.gates["z_l"].pre(l, hl, hr))
    zr = ad.sigmoid(p.gates["z_r"].pre(l, hl, hr))
    zg = ad.sigmoid(p.gates["z"].pre(l, hl, hr))
    cand = ad.tanh(p.gates["cand"].pre(l, ad.mul(rl, hl), ad.mul(rr, hr)))
    return ad.add(ad.add(ad.mul(zl, hl), ad.mul(zr, hr)), ad.mul(zg, cand))


def tree_gru_pass(tree: DepTree, edge_vecs: dict[int, Tensor],
                  params: TreePassParams, direction: str) -> dict[int, Tensor]:
    """Per-node hidden states for one pass over the tree.

    Bottom-up: each node gates the sums of its left- and right-child states.
    Top-down mirrors the same equations with the parent's state in the left
    slot and zero in the right slot. `edge_vecs[i]` is the embedding of the
    edge between token i and its parent (the root's learned edge vector for
    the root).
    """
    if direction not in ("bottom_up", "top_down"):
        raise ValueError(f"unknown direction {direction!r}")
    hidden = params.hidden
    zero = ad.constant(np.zeros(hidden))
    states: dict[int, Tensor] = {}
    order = sorted(range(1, len(tree) + 1), key=lambda i: depth(tree, i),
                   reverse=(direction == "bottom_up"))
    for i in order:
        if direction == "bottom_up":
            left = [states[j] for j in tree.left_children(i)]
            right = [states[j] for j in tree.right_children(i)]
            hl = ad.add_n(left) if left else zero
            hr = ad.add_n(right) if right else zero
        else:
            parent = tree.head(i)
            hl = states[parent] if parent != 0 else zero
            hr = zero
        states[i] = _tree_node_state(params, edge_vecs[i], hl, hr)
    return states


def encode_treegru(tree: DepTree, word_vecs: list[Tensor], edge_vecs: dict[int, Tensor],
                   params_up: TreePassParams, params_down: TreePassParams,
                   bigru_params: BiGRUParams, drop: DropoutCtx = EVAL_DROPOUT) -> Tensor:
    """Per-token [word ; bottom-up ; top-down] inputs fed to a BiGRU."""
    if len(word_vecs) != len(tree):
        raise ValueError(f"token/tree length mismatch: {len(word_vecs)} vs {len(tree)}")
    up = tree_gru_pass(tree, edge_vecs, params_up, "bottom_up")
    down = tree_gru_pass(tree, edge_vecs, params_down, "top_down")
    xs = [drop.apply(ad.concat([wv, up[i], down[i]]))
          for i, wv in enumerate(word_vecs, start=1)]
    return bigru_encode(xs, bigru_params)


def combine(q: Tensor, extras: list[Tensor]) -> Tensor:
    """Elementwise accumulation of the base encoding with each enabled
    syntax encoding."""
    return ad.add_n([q] + list(extras)) if extras else q
