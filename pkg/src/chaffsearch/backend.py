"""Pluggable engine access and the OR-query simulation.

Most engines implement a multi-word OR poorly, so a decoy-padded query
is executed by submitting each sub-query independently and merging the
k+1 result lists. The merge interleaves the lists round-robin — no
position in the merged output favors any sub-query, so ordering leaks
nothing about which one was real — and deduplicates by URL keeping the
first occurrence.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

from . import live_engine
from .mock_engine import MockCorpus, search_mock
from .obfuscate import parse
from .results import SearchResult, dedupe_by_url

log = logging.getLogger(__name__)

PER_QUERY_LIMIT = 20  # engine results considered per sub-query

FetchFn = Callable[[str], "list[SearchResult]"]


class BackendError(Exception):
    pass


def merge_round_robin(lists: Sequence[list[SearchResult]]) -> list[SearchResult]:
    """Interleave a1,b1,c1,a2,b2,... then drop duplicate URLs."""
    interleaved = []
    for rank in range(max((len(l) for l in lists), default=0)):
        for l in lists:
            if rank < len(l):
                interleaved.append(l[rank])
    return dedupe_by_url(interleaved)


def search_or_simulated(
    fetch: FetchFn,
    sub_queries: Sequence[str],
    per_query_limit: int = PER_QUERY_LIMIT,
    max_workers: int = 1,
) -> tuple[list[SearchResult], bool]:
    """One engine request per sub-query, merged.

    Individual failures are tolerated while at least one sub-query
    succeeds (the result carries a partial flag); if every sub-query
    fails, the first failure is raised as a BackendError.
    """
    if not sub_queries:
        raise ValueError("need at least one sub-query")

    def run(q: str):
        return fetch(q)[:per_query_limit]

    lists: list[list[SearchResult] | None] = [None] * len(sub_queries)
    failures: list[Exception] = []
    if max_workers > 1 and len(sub_queries) > 1:
        with ThreadPoolExecutor(max_workers=min(max_workers, len(sub_queries))) as pool:
            futures = [pool.submit(run, q) for q in sub_queries]
            for i, fut in enumerate(futures):
                try:
                    lists[i] = fut.result()
                except Exception as exc:
                    failures.append(exc)
    else:
        for i, q in enumerate(sub_queries):
            try:
                lists[i] = run(q)
            except Exception as exc:
                failures.append(exc)

    succeeded = [l for l in lists if l is not None]
    if not succeeded:
        raise BackendError(f"all {len(sub_queries)} sub-queries failed: {failures[0]}")
    if failures:
        log.warning("%d of %d sub-queries failed", len(failures), len(sub_queries))
    return merge_round_robin(succeeded), bool(failures)


class MockBackend:
    """In-process deterministic engine, for tests and desk experiments."""

    def __init__(self, corpus: MockCorpus, per_query_limit: int = PER_QUERY_LIMIT):
        self.corpus = corpus
        self.per_query_limit = per_query_limit

    def fetch(self, query_text: str) -> list[SearchResult]:
        return search_mock(self.corpus, query_text, self.per_query_limit)

    def search(self, serialized_query: str) -> tuple[list[SearchResult], bool]:
        return search_or_simulated(
            self.fetch, parse(serialized_query), self.per_query_limit
        )


class LiveBackend:
    """Real HTTP engine behind the same search() surface.

    Sub-queries go out concurrently up to ``max_workers``; set
    ``native_or`` for engines whose OR operator actually works, in
    which case the serialized query is submitted as-is in one request.
    """

    def __init__(
        self,
        client: live_engine.EngineClient,
        per_query_limit: int = PER_QUERY_LIMIT,
        max_workers: int = 4,
        native_or: bool = False,
    ):
        self.client = client
        self.per_query_limit = per_query_limit
        self.max_workers = max_workers
        self.native_or = native_or

    def fetch(self, query_text: str) -> list[SearchResult]:
        return live_engine.fetch_engine(self.client, query_text)

    def search(self, serialized_query: str) -> tuple[list[SearchResult], bool]:
        if self.native_or:
            return self.fetch(serialized_query)[: self.per_query_limit], False
        return search_or_simulated(
            self.fetch,
            parse(serialized_query),
            self.per_query_limit,
            max_workers=self.max_workers,
        )
