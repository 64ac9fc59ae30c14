"""Tokenization and result filtering.

After the proxy sends a decoy-padded query to the engine, the merged
answer mixes results for the real query with results for the decoys.
``filter_results`` keeps a result only when the real query scores at
least as well as every decoy, where a query's score against a result is
the number of distinct words it shares with the result's title plus the
number it shares with the description.  Ties keep the result (biases
toward recall), and a result nothing matches is kept too (max score 0).
"""

from __future__ import annotations

import re
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from .history import Query
    from .results import SearchResult

# Word = maximal run of alphanumeric characters; underscores and all
# punctuation split. Case is folded before matching.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> frozenset[str]:
    """Distinct lowercase alphanumeric tokens of ``text``."""
    return frozenset(_TOKEN_RE.findall(text.lower()))


def nb_common_words(query, text: str) -> int:
    """Number of distinct words shared by a query and a snippet of text.

    Multiplicity is ignored: "red red car" vs "red car red" share 2 words.
    """
    return len(query.tokens & tokenize(text))


def score_result(query, result) -> int:
    """Title overlap plus description overlap. URLs are never scored."""
    return nb_common_words(query, result.title) + nb_common_words(query, result.desc)


def filter_results(
    q_u: "Query",
    decoys: Sequence["Query"],
    results: Iterable["SearchResult"],
) -> list["SearchResult"]:
    """Keep the results attributable to the real query ``q_u``.

    A result survives iff score(q_u) == max over {q_u} + decoys of the
    per-query scores. Relative order is preserved. With no decoys this
    is the identity.
    """
    kept = []
    for r in results:
        own = score_result(q_u, r)
        if all(score_result(d, r) <= own for d in decoys):
            kept.append(r)
    return kept
