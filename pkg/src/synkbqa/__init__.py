"""Syntax-aware knowledge-base question answering: query-graph generation
over an in-memory triple store, dependency-syntax question encoders, and a
margin-trained candidate ranker."""

from .deptree import DepTree, parse_conllu, parse_conllu_by_id
from .edgevec import EdgeEmbeddings
from .embeddings import WordEmbeddings
from .kb import TripleStore, Value, load_triples
from .matcher import Model, TrainConfig, evaluate, train
from .qgraph import QueryGraph, generate_candidates
from .ranker import SyntaxAwareKbqa

__version__ = "0.1.0"

__all__ = [
    "DepTree", "parse_conllu", "parse_conllu_by_id",
    "EdgeEmbeddings", "WordEmbeddings",
    "TripleStore", "Value", "load_triples",
    "Model", "TrainConfig", "evaluate", "train",
    "QueryGraph", "generate_candidates",
    "SyntaxAwareKbqa",
    "__version__",
]
