import random
import threading

import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from chaffsearch.history import (
    HistoryEmptyError,
    HistoryStore,
    Query,
    QueryError,
    load_seed_file,
)


def q(text):
    return Query(text)


class TestQuery:
    def test_tokens_derive_from_raw(self):
        query = q("Cheap FLIGHTS, cheap!")
        assert query.tokens == frozenset({"cheap", "flights"})

    @pytest.mark.parametrize("bad", ["", "   ", "\t\n"])
    def test_empty_rejected(self, bad):
        with pytest.raises(QueryError):
            Query(bad)


class TestPush:
    def test_push_to_empty(self):
        store = HistoryStore(capacity=3)
        store.push(q("first"))
        assert store.snapshot_len() == 1
        assert store.entries() == ["first"]

    def test_fifo_eviction(self):
        store = HistoryStore(capacity=3)
        for text in ["q1", "q2", "q3", "q4"]:
            store.push(q(text))
        assert store.entries() == ["q2", "q3", "q4"]

    def test_window_matches_naive_slicing_oracle(self):
        store = HistoryStore(capacity=100)
        naive = []
        for i in range(1000):
            text = f"query number {i}"
            store.push(q(text))
            naive.append(text)
        assert store.entries() == naive[-100:]

    def test_rejects_whitespace_only(self):
        store = HistoryStore(capacity=2)
        with pytest.raises(QueryError):
            Query(" \n ")

    def test_rejects_oversized_query(self):
        store = HistoryStore(capacity=2)
        with pytest.raises(QueryError):
            store.push(q("x" * 1001))
        store.push(q("x" * 1000))  # exactly at the cap is fine

    def test_duplicates_are_kept(self):
        store = HistoryStore(capacity=5)
        store.push(q("same"))
        store.push(q("same"))
        assert store.entries() == ["same", "same"]

    @given(st.lists(st.integers(0, 10_000), max_size=300), st.integers(1, 7))
    @settings(max_examples=50, deadline=None)
    def test_window_property(self, ids, capacity):
        store = HistoryStore(capacity=capacity)
        texts = [f"q{i}" for i in ids]
        for text in texts:
            store.push(q(text))
        assert store.entries() == texts[-capacity:]


class TestSample:
    def test_zero_draws(self):
        store = HistoryStore(capacity=3)
        store.push(q("only"))
        assert store.sample(0, random.Random(0)) == []

    def test_single_entry_support(self):
        store = HistoryStore(capacity=3)
        store.push(q("only"))
        picks = store.sample(3, random.Random(0))
        assert [p.raw for p in picks] == ["only", "only", "only"]

    def test_empty_store_errors(self):
        store = HistoryStore(capacity=3)
        with pytest.raises(HistoryEmptyError):
            store.sample(1, random.Random(0))

    def test_sample_never_leaves_window(self):
        store = HistoryStore(capacity=4)
        for i in range(20):
            store.push(q(f"q{i}"))
        window = set(store.entries())
        picks = store.sample(200, random.Random(1))
        assert {p.raw for p in picks} <= window

    def test_uniformity_chi_square(self):
        store = HistoryStore(capacity=10)
        for i in range(4):
            store.push(q(f"entry {i}"))
        rng = random.Random(42)
        counts = {f"entry {i}": 0 for i in range(4)}
        n = 40_000
        for pick in store.sample(n, rng):
            counts[pick.raw] += 1
        freqs = [c / n for c in counts.values()]
        assert all(0.23 <= f <= 0.27 for f in freqs), freqs
        _, p = stats.chisquare(list(counts.values()))
        assert p > 0.01


class TestCounters:
    def test_new_store(self):
        store = HistoryStore(capacity=100)
        assert store.snapshot_len() == 0
        assert store.capacity() == 100

    def test_partial_fill(self):
        store = HistoryStore(capacity=100)
        for i in range(5):
            store.push(q(f"q{i}"))
        assert store.snapshot_len() == 5

    def test_saturation(self):
        store = HistoryStore(capacity=100)
        for i in range(150):
            store.push(q(f"q{i}"))
        assert store.snapshot_len() == 100

    def test_capacity_validation(self):
        with pytest.raises(ValueError):
            HistoryStore(capacity=0)


class TestConcurrency:
    def test_interleaved_pushes_and_samples(self):
        store = HistoryStore(capacity=64)
        pushed = [f"thread{t} item{i}" for t in range(4) for i in range(500)]
        valid = set(pushed)
        errors = []

        def pusher(t):
            rng = random.Random(t)
            for i in range(500):
                store.push(q(f"thread{t} item{i}"))
                if i % 50 == 0:
                    rng.random()

        def sampler():
            rng = random.Random(99)
            for _ in range(300):
                try:
                    picks = store.sample(5, rng)
                except HistoryEmptyError:
                    continue
                for p in picks:
                    if p.raw not in valid:
                        errors.append(p.raw)

        threads = [threading.Thread(target=pusher, args=(t,)) for t in range(4)]
        threads += [threading.Thread(target=sampler) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert store.snapshot_len() == 64
        assert set(store.entries()) <= valid


class TestSeedFile:
    def test_loads_in_file_order(self, tmp_path):
        path = tmp_path / "seed.txt"
        path.write_text("alpha one\n\nbeta two\ngamma three\n", encoding="utf-8")
        store = HistoryStore(capacity=10)
        assert load_seed_file(store, path) == 3
        assert store.entries() == ["alpha one", "beta two", "gamma three"]

    def test_skips_invalid_lines(self, tmp_path):
        path = tmp_path / "seed.txt"
        path.write_text("ok\n" + "y" * 2000 + "\nalso ok\n", encoding="utf-8")
        store = HistoryStore(capacity=10)
        assert load_seed_file(store, path) == 2
        assert store.entries() == ["ok", "also ok"]


class TestMemoryAccounting:
    def test_accounting_scales_with_entries(self):
        small = HistoryStore(capacity=1000)
        for i in range(100):
            small.push(q(f"{i:020d}"))
        big = HistoryStore(capacity=1000)
        for i in range(1000):
            big.push(q(f"{i:020d}"))
        assert big.approx_bytes() > small.approx_bytes()
