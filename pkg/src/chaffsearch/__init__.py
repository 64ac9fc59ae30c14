"""chaffsearch: private web search behind a decoy-padding proxy.

The proxy hides each user query among k decoys sampled from a bounded
window of real past queries, forwards the padded query to a search
engine, and filters the merged answer back down to the results that
belong to the real query. The package also ships the client broker,
a similarity-based re-identification attack with its evaluation
harness, and an open-loop load generator.
"""

from .backend import LiveBackend, MockBackend, merge_round_robin, search_or_simulated
from .filtering import filter_results, nb_common_words, tokenize
from .history import HistoryStore, Query, QueryError, load_seed_file
from .metrics import precision_recall, reidentification_rate
from .mock_engine import MockCorpus, search_mock
from .obfuscate import ObfuscatedQuery, obfuscate, parse, serialize
from .results import SearchResult
from .sanitize import sanitize_results
from .simattack import SimAttackConfig, cosine_sim, sim, simattack_identify

__version__ = "0.1.0"

__all__ = [
    "HistoryStore",
    "LiveBackend",
    "MockBackend",
    "MockCorpus",
    "ObfuscatedQuery",
    "Query",
    "QueryError",
    "SearchResult",
    "SimAttackConfig",
    "cosine_sim",
    "filter_results",
    "load_seed_file",
    "merge_round_robin",
    "nb_common_words",
    "obfuscate",
    "parse",
    "precision_recall",
    "reidentification_rate",
    "sanitize_results",
    "search_mock",
    "search_or_simulated",
    "serialize",
    "sim",
    "simattack_identify",
    "tokenize",
]
