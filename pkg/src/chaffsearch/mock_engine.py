"""Deterministic in-process search engine for desk-scale experiments.

Ranks corpus documents by the number of distinct query tokens found in
title+description, ties broken by URL. Identical query in, identical
result list out: the accuracy experiments depend on this determinism.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .filtering import tokenize
from .results import SearchResult


class MockCorpus:
    """A fixed document collection with pre-tokenized title+desc."""

    def __init__(self, docs: Sequence[SearchResult]):
        self.docs = list(docs)
        self._doc_tokens = [tokenize(d.title) | tokenize(d.desc) for d in self.docs]

    @classmethod
    def from_json_file(cls, path: str | Path) -> "MockCorpus":
        with open(path, encoding="utf-8") as fh:
            items = json.load(fh)
        if not isinstance(items, list):
            raise ValueError("corpus file must hold a JSON array")
        return cls([SearchResult.from_dict(d) for d in items])

    def __len__(self) -> int:
        return len(self.docs)


def search_mock(corpus: MockCorpus, query_text: str, limit: int = 20) -> list[SearchResult]:
    """Top-``limit`` documents overlapping the query, best first."""
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    q_tokens = tokenize(query_text)
    scored = []
    for doc, doc_tokens in zip(corpus.docs, corpus._doc_tokens):
        overlap = len(q_tokens & doc_tokens)
        if overlap > 0:
            scored.append((-overlap, doc.url, doc))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [doc for _, _, doc in scored[:limit]]
