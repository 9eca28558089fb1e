"""Scikit-learn style facade over the full pipeline.

`X` is a list of (question text, DepTree) pairs and `y` a list of gold
answer-string sets; `predict` returns the executed answers of the
top-scoring candidate graph per question.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import kb, qgraph
from .edgevec import EdgeEmbeddings
from .embeddings import WordEmbeddings
from .kb import TripleStore
from .matcher import (TrainConfig, encode_question, evaluate,
                      prepare_question, total_score, train)


class SyntaxAwareKbqa(BaseEstimator):
    """Margin-trained ranker over candidate query graphs.

    Parameters mirror TrainConfig; `store`, `word_embeddings` and (for the
    treegru flag) `edge_embeddings` carry the corpus resources.
    """

    def __init__(self, store: TripleStore = None, word_embeddings: WordEmbeddings = None,
                 edge_embeddings: EdgeEmbeddings = None, flags=(),
                 pos_dim=50, max_depth=15, tree_hidden=100, dropout=0.1,
                 margin=0.5, learning_rate=1e-3, batch_size=32, epochs=5,
                 n_negatives=20, seed=0):
        self.store = store
        self.word_embeddings = word_embeddings
        self.edge_embeddings = edge_embeddings
        self.flags = flags
        self.pos_dim = pos_dim
        self.max_depth = max_depth
        self.tree_hidden = tree_hidden
        self.dropout = dropout
        self.margin = margin
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.n_negatives = n_negatives
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(flags=tuple(self.flags), pos_dim=self.pos_dim,
                           max_depth=self.max_depth, tree_hidden=self.tree_hidden,
                           dropout=self.dropout, margin=self.margin,
                           learning_rate=self.learning_rate, batch_size=self.batch_size,
                           epochs=self.epochs, n_negatives=self.n_negatives,
                           seed=self.seed)

    def _check_resources(self):
        if self.store is None or self.word_embeddings is None:
            raise ValueError("store and word_embeddings are required")
        if "treegru" in tuple(self.flags) and self.edge_embeddings is None:
            raise ValueError("treegru flag requires edge_embeddings")

    def _prepare(self, X, y, cfg):
        if y is None:
            y = [set() for _ in X]
        if len(X) != len(y):
            raise ValueError(f"X and y length mismatch: {len(X)} vs {len(y)}")
        prepared = []
        for i, ((text, tree), gold) in enumerate(zip(X, y)):
            prepared.append(prepare_question(f"q{i}", text, tree, set(gold),
                                             self.store, self.word_embeddings, cfg))
        return prepared

    def fit(self, X, y):
        self._check_resources()
        cfg = self._config()
        prepared = self._prepare(X, y, cfg)
        self.model_, self.history_ = train(prepared, cfg, self.word_embeddings,
                                           self.edge_embeddings)
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise ValueError("estimator is not fitted; call fit first")
        self._check_resources()
        cfg = self.model_.cfg
        out = []
        for i, (text, tree) in enumerate(X):
            q = prepare_question(f"q{i}", text, tree, set(), self.store,
                                 self.word_embeddings, cfg)
            candidates = qgraph.generate_candidates(q.tokens, q.links, self.store)
            executable = []
            for g in candidates:
                try:
                    answers = kb.execute(self.store, g)
                except kb.KbError:
                    continue
                if not answers:
                    continue
                executable.append(
                    qgraph.LabeledCandidate(g, 0.0, "negative",
                                            tuple(sorted(v.render() for v in answers))))
            if not executable:
                out.append(())
                continue
            qv = encode_question(self.model_, q)
            scores = [float(total_score(self.model_, qv, c).data) for c in executable]
            out.append(executable[int(np.argmax(scores))].answers)
        return out

    def score(self, X, y):
        """Mean F1 of the top-ranked candidate per question."""
        if not hasattr(self, "model_"):
            raise ValueError("estimator is not fitted; call fit first")
        prepared = self._prepare(X, y, self.model_.cfg)
        return evaluate(self.model_, prepared).mean_f1
