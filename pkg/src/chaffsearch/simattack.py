"""Similarity-based re-identification of protected queries.

The attacker holds a profile of past queries per user. A candidate
query is scored against a profile by taking its cosine similarity to
every profile query (binary bag-of-words over the token sets), sorting
those similarities in ascending order and folding them with exponential
smoothing, so the final value is dominated by the best-matching profile
queries. Against a decoy-padded query the attacker scores every
(sub-query, user) pair and claims an identification only when a single
pair attains the global maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .dataset import UserProfile
from .history import Query


@dataclass(frozen=True)
class SimAttackConfig:
    """Smoothing factor for the similarity fold, in (0, 1]."""

    alpha: float = 0.5

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0,1], got {self.alpha}")


def cosine_sim(q1: Query, q2: Query) -> float:
    """Cosine of the binary term vectors; 0 when either has no tokens."""
    a, b = q1.tokens, q2.tokens
    if not a or not b:
        return 0.0
    return len(a & b) / math.sqrt(len(a) * len(b))


def sim(q: Query, profile: UserProfile, cfg: SimAttackConfig = SimAttackConfig()) -> float:
    """Exponentially smoothed profile similarity.

    With similarities s1 <= ... <= sm the fold is v1 = s1,
    vi = alpha*si + (1-alpha)*v(i-1); the result is vm.
    """
    if not profile.queries:
        raise ValueError(f"profile for {profile.user_id} is empty")
    sims = sorted(cosine_sim(q, p) for p in profile.queries)
    v = sims[0]
    alpha = cfg.alpha
    for s in sims[1:]:
        v = alpha * s + (1 - alpha) * v
    return v


def simattack_identify(
    sub_queries: Sequence[Query],
    profiles: Sequence[UserProfile],
    cfg: SimAttackConfig = SimAttackConfig(),
) -> tuple[str, int] | None:
    """Best (user, sub-query index) pair, or None when the max is shared."""
    if not sub_queries:
        raise ValueError("no sub-queries to attack")
    if not profiles:
        raise ValueError("no profiles to attack against")
    best: tuple[str, int] | None = None
    best_score = -1.0
    tied = False
    for idx, q in enumerate(sub_queries):
        for profile in profiles:
            score = sim(q, profile, cfg)
            if score > best_score:
                best_score = score
                best = (profile.user_id, idx)
                tied = False
            elif score == best_score:
                tied = True
    return None if tied else best
