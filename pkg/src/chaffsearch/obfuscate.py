"""Decoy-padding of user queries.

``obfuscate`` hides a query among k decoys sampled from the shared
history of real past queries: the real query is placed at a uniformly
random position among the k+1 slots and the whole thing serializes as
an OR-joined text the search engine cannot pick the real query out of.
The real query is pushed into the history only after sampling, so a
query never serves as its own decoy.

If the history is still empty (fresh proxy, no seed file), we degrade
to k=0 and flag it rather than invent synthetic decoys: fabricated
queries are exactly what makes other obfuscation schemes easy to
fingerprint.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass

from .history import HistoryStore, Query

SEPARATOR = " OR "

_NEEDS_QUOTING = re.compile(r'(^|\s)OR(\s|$)')


@dataclass
class ObfuscatedQuery:
    sub_queries: list[Query]
    real_index: int  # secret: never serialized toward the engine
    k_effective: int
    degraded: bool = False

    def decoys(self) -> list[Query]:
        return [q for i, q in enumerate(self.sub_queries) if i != self.real_index]


def obfuscate(
    q: Query, k: int, store: HistoryStore, rng: random.Random
) -> ObfuscatedQuery:
    """Build the k+1 sub-query list for ``q`` and record ``q`` in history."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    have_history = store.snapshot_len() > 0
    k_effective = k if have_history else 0
    decoys = store.sample(k_effective, rng) if k_effective else []
    real_index = rng.randrange(k_effective + 1)
    sub_queries = decoys[:real_index] + [q] + decoys[real_index:]
    store.push(q)
    return ObfuscatedQuery(
        sub_queries=sub_queries,
        real_index=real_index,
        k_effective=k_effective,
        degraded=k > 0 and not have_history,
    )


def serialize(oq: ObfuscatedQuery) -> str:
    """Join sub-query texts with " OR ", in slot order.

    A sub-query containing a standalone "OR" token (or a double quote)
    is wrapped in double quotes with embedded quotes doubled, so the
    text always parses back to the exact sub-query list.
    """
    return SEPARATOR.join(_quote(sq.raw) for sq in oq.sub_queries)


def _quote(text: str) -> str:
    if '"' in text or _NEEDS_QUOTING.search(text):
        return '"' + text.replace('"', '""') + '"'
    return text


class ParseError(ValueError):
    pass


def parse(text: str) -> list[str]:
    """Recover the sub-query texts from a serialized obfuscated query."""
    parts: list[str] = []
    i = 0
    n = len(text)
    while True:
        if i < n and text[i] == '"':
            part, i = _read_quoted(text, i)
        else:
            end = text.find(SEPARATOR, i)
            if end == -1:
                part, i = text[i:], n
            else:
                part, i = text[i:end], end
        parts.append(part)
        if i == n:
            return parts
        if not text.startswith(SEPARATOR, i):
            raise ParseError(f"expected separator at offset {i}")
        i += len(SEPARATOR)
        if i >= n:
            raise ParseError("dangling separator")


def _read_quoted(text: str, start: int) -> tuple[str, int]:
    # start points at the opening quote; "" inside means a literal quote
    chunks = []
    i = start + 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            if i + 1 < n and text[i + 1] == '"':
                chunks.append('"')
                i += 2
                continue
            return "".join(chunks), i + 1
        chunks.append(ch)
        i += 1
    raise ParseError("unterminated quoted sub-query")
