"""Word-embedding table shared by question encoding, type linking and
sub-path encoding. Same text format as the edge embeddings:
header `|V| d`, then `token v1 .. vd` lines.
"""
from __future__ import annotations

import numpy as np

UNK_TOKEN = "<unk>"
ENTITY_TOKEN = "<E>"
TIME_TOKEN = "<Tm>"
# rows for special tokens missing from the pretrained file are generated
# from this fixed seed so loading stays deterministic
_SPECIAL_SEED = 0x5EED


class WordEmbeddings:
    def __init__(self, tokens: list[str], matrix: np.ndarray):
        if len(tokens) != matrix.shape[0]:
            raise ValueError("token count does not match matrix rows")
        self.tokens = list(tokens)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.dim = self.matrix.shape[1]
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise ValueError("duplicate tokens in embedding table")

    @classmethod
    def load(cls, path) -> "WordEmbeddings":
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
        if not lines:
            raise ValueError(f"{path}: empty embedding file")
        head = lines[0].split()
        if len(head) != 2:
            raise ValueError(f"{path}:1: expected `count dim` header")
        count, d = int(head[0]), int(head[1])
        tokens, rows = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(parts) - 1}")
            tokens.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
        if len(tokens) != count:
            raise ValueError(f"{path}: header says {count} entries, found {len(tokens)}")
        emb = cls(tokens, np.array(rows))
        emb._ensure_specials()
        return emb

    def _ensure_specials(self):
        rng = np.random.default_rng(_SPECIAL_SEED)
        limit = np.sqrt(6.0 / (2 * self.dim))
        for tok in (UNK_TOKEN, ENTITY_TOKEN, TIME_TOKEN):
            row = rng.uniform(-limit, limit, self.dim)
            if self.lookup(tok) is None:
                self.tokens.append(tok)
                self.matrix = np.vstack([self.matrix, row])
                self._ids[tok] = len(self.tokens) - 1

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{len(self.tokens)} {self.dim}\n")
            for tok, row in zip(self.tokens, self.matrix):
                f.write(tok + " " + " ".join("%.17g" % x for x in row) + "\n")

    def lookup(self, word: str) -> int | None:
        i = self._ids.get(word)
        if i is None:
            i = self._ids.get(word.lower())
        return i

    def id(self, word: str) -> int:
        i = self.lookup(word)
        return self._ids[UNK_TOKEN] if i is None else i

    def vector(self, word: str) -> np.ndarray:
        return self.matrix[self.id(word)]

    def mean_vector(self, words: list[str]) -> np.ndarray:
        if not words:
            return np.zeros(self.dim)
        return np.mean([self.vector(w) for w in words], axis=0)
