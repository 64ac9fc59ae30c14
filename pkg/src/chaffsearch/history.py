"""Bounded sliding-window store of past queries.

The store is the proxy's decoy pool: every incoming query is pushed, and
decoys are drawn from it uniformly at random. Only the ``capacity`` most
recent queries are kept, so memory stays bounded no matter how long the
proxy runs. One store instance is shared by all request handlers.

Entries are held as UTF-8 bytes in a preallocated ring: random access is
O(1) for sampling and the per-entry footprint stays small enough that a
million short queries fit well under a 90 MB budget (see
``approx_bytes``).
"""

from __future__ import annotations

import random
import sys
import threading
from pathlib import Path

from .filtering import tokenize

DEFAULT_CAPACITY = 100_000

# Upper bound on a single stored query, so the memory budget of a full
# window can be computed from capacity alone.
MAX_QUERY_BYTES = 1_000


class QueryError(ValueError):
    """Raised for queries that are empty or too large to store."""


class Query:
    """A user query: raw text plus its distinct normalized tokens."""

    __slots__ = ("raw", "tokens")

    def __init__(self, raw: str):
        if not raw or not raw.strip():
            raise QueryError("query is empty")
        self.raw = raw
        self.tokens = tokenize(raw)

    def __eq__(self, other) -> bool:
        return isinstance(other, Query) and other.raw == self.raw

    def __hash__(self) -> int:
        return hash(self.raw)

    def __repr__(self) -> str:
        return f"Query({self.raw!r})"


class HistoryStore:
    """FIFO window of the ``capacity`` most recent queries.

    Thread-safe: pushes and samples may interleave freely. A sample may
    observe a window that is stale by in-flight pushes, but never a torn
    entry.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self._capacity = capacity
        self._ring: list[bytes] = []
        self._head = 0  # index of the oldest entry once the ring is full
        self._lock = threading.Lock()

    def push(self, q: Query) -> None:
        """Append ``q``, evicting the oldest entry when full."""
        raw = q.raw.strip()
        if not raw:
            raise QueryError("query is empty")
        encoded = raw.encode("utf-8")
        if len(encoded) > MAX_QUERY_BYTES:
            raise QueryError(
                f"query is {len(encoded)} bytes, limit is {MAX_QUERY_BYTES}"
            )
        with self._lock:
            if len(self._ring) < self._capacity:
                self._ring.append(encoded)
            else:
                self._ring[self._head] = encoded
                self._head = (self._head + 1) % self._capacity

    def sample(self, n: int, rng: random.Random) -> list[Query]:
        """Draw ``n`` entries independently and uniformly, with replacement."""
        if n < 0:
            raise ValueError(f"n must be >= 0, got {n}")
        if n == 0:
            return []
        with self._lock:
            size = len(self._ring)
            if size == 0:
                raise HistoryEmptyError("history store is empty")
            picks = [
                self._ring[(self._head + rng.randrange(size)) % size]
                for _ in range(n)
            ]
        return [Query(raw.decode("utf-8")) for raw in picks]

    def snapshot_len(self) -> int:
        with self._lock:
            return len(self._ring)

    def capacity(self) -> int:
        return self._capacity

    def entries(self) -> list[str]:
        """Current window contents, oldest first."""
        with self._lock:
            ordered = self._ring[self._head:] + self._ring[: self._head]
        return [raw.decode("utf-8") for raw in ordered]

    def approx_bytes(self) -> int:
        """Accounted heap occupancy of the store and its entries.

        Per-object sizes are rounded up to the 16-byte allocator
        granularity; the ring list itself is included.
        """
        with self._lock:
            total = _round16(sys.getsizeof(self._ring))
            total += sum(_round16(sys.getsizeof(e)) for e in self._ring)
            total += _round16(sys.getsizeof(self))
        return total


class HistoryEmptyError(LookupError):
    """Sampling was requested from an empty store."""


def _round16(n: int) -> int:
    return (n + 15) & ~15


def load_seed_file(store: HistoryStore, path: str | Path) -> int:
    """Warm-start the store from a newline-delimited UTF-8 query file.

    One query per line, pushed in file order. Blank or over-long lines
    are skipped. Returns the number of queries pushed.
    """
    pushed = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                store.push(Query(line))
            except QueryError:
                continue
            pushed += 1
    return pushed
