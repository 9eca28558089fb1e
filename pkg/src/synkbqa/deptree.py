"""Dependency trees from CoNLL-U, plus the structural features built on them:
shortest dependency paths, root-distance position features, edge
neighborhoods and answer-word detection.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

WH_WORDS = {"what", "who", "whom", "whose", "which", "where", "when", "why", "how"}


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    index: int      # 1-based surface position
    form: str
    head: int       # 0 = root
    deprel: str


@dataclass(frozen=True)
class DirectedEdge:
    """One head link occurrence: head --deprel--> tail."""
    head: int
    tail: int
    head_form: str
    deprel: str
    tail_form: str


@dataclass(frozen=True)
class SdpStep:
    label: str
    direction: str  # "up" (child to head) or "down" (head to child)


@dataclass(frozen=True)
class SdpPath:
    nodes: tuple[int, ...]
    forms: tuple[str, ...]
    steps: tuple[SdpStep, ...]

    def token_sequence(self) -> list[str]:
        """Interleave word forms and edge labels: [w0, l0, w1, l1, ..., wn]."""
        out = [self.forms[0]]
        for step, form in zip(self.steps, self.forms[1:]):
            out.append(step.label)
            out.append(form)
        return out

    def render(self) -> str:
        out = self.forms[0]
        for step, form in zip(self.steps, self.forms[1:]):
            out += f" -{step.label}-> {form}"
        return out


class DepTree:
    """A validated dependency parse. Immutable after construction."""

    def __init__(self, tokens: list[Token]):
        if not tokens:
            raise TreeError("empty sentence")
        n = len(tokens)
        for pos, tok in enumerate(tokens, start=1):
            if tok.index != pos:
                raise TreeError(f"token index {tok.index} out of order (expected {pos})")
            if tok.head == tok.index:
                raise TreeError(f"token {tok.index} is its own head (cycle)")
            if not 0 <= tok.head <= n:
                raise TreeError(f"token {tok.index} head {tok.head} out of range")
            if not tok.deprel:
                raise TreeError(f"token {tok.index} has empty deprel")
        roots = [t.index for t in tokens if t.head == 0]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        self.tokens = tuple(tokens)
        self.root = roots[0]
        self._depth = [0] * (n + 1)
        # depth doubles as the cycle/connectivity check: walk each token to the root
        for tok in tokens:
            seen = set()
            d = 0
            cur = tok.index
            while cur != 0:
                if cur in seen:
                    raise TreeError(f"cycle through token {tok.index}")
                seen.add(cur)
                cur = self.tokens[cur - 1].head
                d += 1
            self._depth[tok.index] = d - 1
        self._left = [[] for _ in range(n + 1)]
        self._right = [[] for _ in range(n + 1)]
        for tok in tokens:
            if tok.head != 0:
                (self._left if tok.index < tok.head else self._right)[tok.head].append(tok.index)

    def __len__(self):
        return len(self.tokens)

    def form(self, i: int) -> str:
        return self.tokens[i - 1].form

    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    def head(self, i: int) -> int:
        return self.tokens[i - 1].head

    def left_children(self, i: int) -> list[int]:
        return list(self._left[i])

    def right_children(self, i: int) -> list[int]:
        return list(self._right[i])

    def children(self, i: int) -> list[int]:
        return sorted(self._left[i] + self._right[i])

    def edge(self, tail: int) -> DirectedEdge:
        """The head link arriving at `tail` (tail must not be the root)."""
        tok = self.tokens[tail - 1]
        if tok.head == 0:
            raise TreeError(f"token {tail} is the root and has no incoming edge")
        return DirectedEdge(tok.head, tail, self.form(tok.head), tok.deprel, tok.form)

    def edges(self) -> list[DirectedEdge]:
        return [self.edge(t.index) for t in self.tokens if t.head != 0]

    def _check_index(self, i: int):
        if not 1 <= i <= len(self.tokens):
            raise TreeError(f"token index {i} out of range 1..{len(self.tokens)}")


def depth(tree: DepTree, i: int) -> int:
    """Number of head links from token i up to the root."""
    tree._check_index(i)
    return tree._depth[i]


def lca(tree: DepTree, i: int, j: int) -> int:
    tree._check_index(i)
    tree._check_index(j)
    while tree._depth[i] > tree._depth[j]:
        i = tree.head(i)
    while tree._depth[j] > tree._depth[i]:
        j = tree.head(j)
    while i != j:
        i = tree.head(i)
        j = tree.head(j)
    return i


def sdp(tree: DepTree, source: int, target: int) -> SdpPath:
    """Unique simple path between two tokens, rendered source-first.

    Computed via the lowest common ancestor; edges carry their deprel and
    the traversal direction (up toward the head, down toward a child).
    """
    a = lca(tree, source, target)
    up_nodes = []
    cur = source
    while cur != a:
        up_nodes.append(cur)
        cur = tree.head(cur)
    down_nodes = []
    cur = target
    while cur != a:
        down_nodes.append(cur)
        cur = tree.head(cur)
    nodes = up_nodes + [a] + list(reversed(down_nodes))
    steps = []
    for k in range(len(up_nodes)):
        steps.append(SdpStep(tree.tokens[up_nodes[k] - 1].deprel, "up"))
    for node in reversed(down_nodes):
        steps.append(SdpStep(tree.tokens[node - 1].deprel, "down"))
    return SdpPath(tuple(nodes), tuple(tree.form(n) for n in nodes), tuple(steps))


def answer_word(tree: DepTree) -> int:
    """First wh-word in surface order (case-folded); token 1 if none."""
    for tok in tree.tokens:
        if tok.form.lower() in WH_WORDS:
            return tok.index
    return 1


def edge_neighborhood(tree: DepTree, e: DirectedEdge) -> list[DirectedEdge]:
    """Neighbors of an edge a->b: the incoming edge of a (if a is not the
    root) followed by the outgoing edges of b in surface order.
    """
    tree._check_index(e.tail)
    if tree.tokens[e.tail - 1].head != e.head or tree.edge(e.tail) != e:
        raise TreeError(f"edge {e} is not present in this tree")
    out: list[DirectedEdge] = []
    if e.head != tree.root:
        out.append(tree.edge(e.head))
    for child in tree.children(e.tail):
        out.append(tree.edge(child))
    return out


def parse_conllu(text: str) -> tuple[list[DepTree], list[str]]:
    """Parse CoNLL-U text into validated trees.

    Uses the ID, FORM, HEAD and DEPREL columns; comment lines and
    multiword/empty-node lines (IDs containing `-` or `.`) are skipped.
    Returns (trees, errors); a malformed sentence contributes one error
    message (with a line number) and the remaining sentences still parse.
    """
    trees: list[DepTree] = []
    errors: list[str] = []
    pending: list[Token] = []
    start_line = 1
    bad = None

    def flush():
        nonlocal pending, bad
        if bad is not None:
            errors.append(bad)
        elif pending:
            try:
                trees.append(DepTree(pending))
            except TreeError as exc:
                errors.append(f"line {start_line}: {exc}")
        pending = []
        bad = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            flush()
            start_line = lineno + 1
            continue
        if line.startswith("#"):
            continue
        if not pending and bad is None:
            start_line = lineno
        if bad is not None:
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            bad = f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}"
            continue
        tok_id, form, head, deprel = cols[0], cols[1], cols[6], cols[7]
        if "-" in tok_id or "." in tok_id:
            continue
        try:
            idx = int(tok_id)
            head_idx = int(head)
        except ValueError:
            bad = f"line {lineno}: non-integer ID or HEAD"
            continue
        pending.append(Token(idx, form, head_idx, deprel))
    flush()
    return trees, errors


_SENT_ID = re.compile(r"#\s*sent_id\s*=\s*(\S+)")


def parse_conllu_by_id(text: str) -> tuple[dict[str, "DepTree"], list[str]]:
    """Parse CoNLL-U text into trees keyed by their `# sent_id = ...`
    comment. Sentences without a sent_id get `s<position>`. Returns
    (trees, errors); errors are prefixed with the sentence's key."""
    trees: dict[str, DepTree] = {}
    errors: list[str] = []
    chunk: list[str] = []
    sid: str | None = None
    order = 0

    def flush():
        nonlocal chunk, sid, order
        if chunk:
            order += 1
            key = sid if sid is not None else f"s{order}"
            parsed, errs = parse_conllu("\n".join(chunk))
            if errs:
                errors.extend(f"{key}: {e}" for e in errs)
            elif parsed:
                if key in trees:
                    errors.append(f"{key}: duplicate sent_id")
                else:
                    trees[key] = parsed[0]
        chunk, sid = [], None

    for line in text.splitlines():
        if not line.strip():
            flush()
            continue
        m = _SENT_ID.match(line)
        if m:
            sid = m.group(1)
        chunk.append(line)
    flush()
    return trees, errors
