"""Privacy and accuracy metrics.

Re-identification rate: the fraction of protected test queries for
which the attack recovers BOTH the issuing user and the real sub-query.
Precision/recall: URL-set overlap between what the proxy returned and
what the engine returns for the unprotected query.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

from .history import Query
from .dataset import UserProfile
from .obfuscate import ObfuscatedQuery
from .results import SearchResult
from .simattack import SimAttackConfig, sim

ProtectFn = Callable[[str, Query], ObfuscatedQuery]


def reidentification_rate(
    test_queries: Sequence[tuple[str, Query]],
    protect_fn: ProtectFn,
    profiles: Sequence[UserProfile],
    cfg: SimAttackConfig = SimAttackConfig(),
) -> float:
    """Attack every protected test query; count exact (user, query) hits."""
    if not test_queries:
        raise ValueError("empty test set")
    # sim() is pure, and decoys recur across test queries: memoize per run.
    cache: dict[tuple[str, str], float] = {}

    def cached_sim(q: Query, profile: UserProfile) -> float:
        key = (q.raw, profile.user_id)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = sim(q, profile, cfg)
        return hit

    identified = 0
    for user_id, query in test_queries:
        oq = protect_fn(user_id, query)
        guess = _identify_cached(oq.sub_queries, profiles, cached_sim)
        if guess == (user_id, oq.real_index):
            identified += 1
    return identified / len(test_queries)


def _identify_cached(sub_queries, profiles, cached_sim) -> tuple[str, int] | None:
    # same decision rule as simattack_identify, with memoized sims
    best = None
    best_score = -1.0
    tied = False
    for idx, q in enumerate(sub_queries):
        for profile in profiles:
            score = cached_sim(q, profile)
            if score > best_score:
                best_score, best, tied = score, (profile.user_id, idx), False
            elif score == best_score:
                tied = True
    return None if tied else best


def precision_recall(
    r_or: Iterable[SearchResult], r_xs: Iterable[SearchResult]
) -> tuple[float, float]:
    """(precision, recall) by URL-set intersection.

    Conventions for empty sets: recall is 1.0 when the reference set is
    empty; precision is 1.0 when both are empty and 0.0 when only the
    proxy set is empty.
    """
    or_urls = {r.url for r in r_or}
    xs_urls = {r.url for r in r_xs}
    inter = len(or_urls & xs_urls)
    if xs_urls:
        precision = inter / len(xs_urls)
    else:
        precision = 1.0 if not or_urls else 0.0
    recall = inter / len(or_urls) if or_urls else 1.0
    return precision, recall
