import random

import pytest

from chaffsearch.backend import (
    BackendError,
    MockBackend,
    merge_round_robin,
    search_or_simulated,
)
from chaffsearch.mock_engine import MockCorpus
from chaffsearch.results import SearchResult

from oracles import naive_round_robin_dedup


def r(url, title="t", desc="d"):
    return SearchResult(title, desc, url)


class TestMergeRoundRobin:
    def test_single_list_identity(self):
        lst = [r("u1"), r("u2")]
        assert merge_round_robin([lst]) == lst

    def test_disjoint_interleaving(self):
        a = [r("a1"), r("a2"), r("a3")]
        b = [r("b1"), r("b2")]
        merged = merge_round_robin([a, b])
        assert [x.url for x in merged] == ["a1", "b1", "a2", "b2", "a3"]

    def test_dedup_keeps_first_occurrence(self):
        a = [r("same", title="from a"), r("a2")]
        b = [r("b1"), r("same", title="from b")]
        merged = merge_round_robin([a, b])
        assert [x.url for x in merged] == ["same", "b1", "a2"]
        assert merged[0].title == "from a"

    def test_oracle_on_random_lists(self):
        rng = random.Random(4)
        for _ in range(500):
            lists = [
                [r(f"u{rng.randrange(20)}") for _ in range(rng.randrange(0, 8))]
                for _ in range(rng.randrange(1, 5))
            ]
            got = [(x.title, x.desc, x.url) for x in merge_round_robin(lists)]
            oracle = naive_round_robin_dedup(
                [[(x.title, x.desc, x.url) for x in lst] for lst in lists]
            )
            assert got == oracle

    def test_permutation_changes_order_not_membership(self):
        rng = random.Random(9)
        lists = [[r(f"u{i}{j}") for j in range(3)] for i in range(4)]
        base = {x.url for x in merge_round_robin(lists)}
        for _ in range(10):
            shuffled = lists[:]
            rng.shuffle(shuffled)
            assert {x.url for x in merge_round_robin(shuffled)} == base


class TestSearchOrSimulated:
    def test_single_sub_query_is_truncated_fetch(self):
        hits = [r(f"u{i}") for i in range(30)]
        merged, partial = search_or_simulated(lambda q: hits, ["only"], per_query_limit=20)
        assert merged == hits[:20]
        assert not partial

    def test_issues_exactly_one_request_per_sub_query(self):
        calls = []

        def fetch(q):
            calls.append(q)
            return [r(f"u-{q}")]

        search_or_simulated(fetch, ["a", "b", "c"])
        assert calls == ["a", "b", "c"]

    def test_partial_failures_tolerated(self):
        def fetch(q):
            if q == "bad":
                raise RuntimeError("boom")
            return [r(f"u-{q}")]

        merged, partial = search_or_simulated(fetch, ["good", "bad"])
        assert [x.url for x in merged] == ["u-good"]
        assert partial

    def test_all_failures_raise(self):
        def fetch(q):
            raise RuntimeError("down")

        with pytest.raises(BackendError):
            search_or_simulated(fetch, ["a", "b"])

    def test_empty_sub_queries_rejected(self):
        with pytest.raises(ValueError):
            search_or_simulated(lambda q: [], [])

    def test_threaded_matches_serial(self):
        hits = {q: [r(f"{q}-{i}") for i in range(5)] for q in "abcd"}
        serial, _ = search_or_simulated(lambda q: hits[q], list("abcd"), max_workers=1)
        threaded, _ = search_or_simulated(lambda q: hits[q], list("abcd"), max_workers=4)
        assert serial == threaded


class TestMockBackend:
    def test_search_parses_serialized_query(self):
        corpus = MockCorpus([
            SearchResult("apples and pears", "fruit", "https://f.example/1"),
            SearchResult("steel beams", "construction", "https://c.example/2"),
        ])
        backend = MockBackend(corpus)
        results, partial = backend.search("apples OR steel")
        assert {x.url for x in results} == {"https://f.example/1", "https://c.example/2"}
        assert not partial
