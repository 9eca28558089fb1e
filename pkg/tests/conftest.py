import pathlib

import numpy as np
import pytest

from synkbqa.deptree import DepTree, Token, parse_conllu_by_id
from synkbqa.embeddings import WordEmbeddings
from synkbqa.kb import load_triples

DATA = pathlib.Path(__file__).resolve().parent.parent / "data" / "toy"


@pytest.fixture
def fig_tree() -> DepTree:
    """7-token question 'what movies did Diana play in ?' rooted at 'play'."""
    return DepTree([
        Token(1, "what", 2, "det"),
        Token(2, "movies", 5, "dobj"),
        Token(3, "did", 5, "aux"),
        Token(4, "Diana", 5, "nsubj"),
        Token(5, "play", 0, "root"),
        Token(6, "in", 5, "prep"),
        Token(7, "?", 5, "punct"),
    ])


@pytest.fixture(scope="session")
def toy_dir() -> pathlib.Path:
    assert DATA.is_dir(), "toy fixture missing; run `python -m synkbqa.toy data/toy`"
    return DATA


@pytest.fixture(scope="session")
def toy_store(toy_dir):
    return load_triples(toy_dir / "triples.tsv")


@pytest.fixture(scope="session")
def toy_word_emb(toy_dir):
    return WordEmbeddings.load(toy_dir / "word_vectors.txt")


@pytest.fixture(scope="session")
def toy_trees(toy_dir):
    trees, errors = parse_conllu_by_id((toy_dir / "questions.conllu").read_text())
    assert not errors
    return trees


def random_tree(rng: np.random.Generator, n: int, labels=("det", "dobj", "nsubj", "amod", "prep")) -> DepTree:
    """Uniform random attachment: a random node is the root and every other
    node (in a random order) attaches to a previously placed node."""
    order = list(rng.permutation(n) + 1)
    head = {order[0]: 0}
    for k in range(1, n):
        head[order[k]] = int(order[int(rng.integers(0, k))])
    return DepTree([Token(i, f"w{i}", head[i], str(rng.choice(list(labels))))
                    for i in range(1, n + 1)])


def bfs_path(tree: DepTree, source: int, target: int) -> list[int]:
    """Shortest path in the undirected tree by breadth-first search."""
    adj: dict[int, list[int]] = {i: [] for i in range(1, len(tree) + 1)}
    for tok in tree.tokens:
        if tok.head != 0:
            adj[tok.index].append(tok.head)
            adj[tok.head].append(tok.index)
    prev = {source: None}
    frontier = [source]
    while frontier and target not in prev:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in prev:
                    prev[v] = u
                    nxt.append(v)
        frontier = nxt
    path = [target]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return list(reversed(path))
