"""Seeded synthetic datasets for self-contained evaluation runs.

Real query logs cannot ship with the package, so the evaluation
harness generates its own: users with mostly-disjoint vocabulary
clusters (plus a controllable shared-term overlap) for the
re-identification experiments, and a topical document corpus with
matching query pools for the accuracy experiments. Everything is
deterministic given the seed.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass

from .dataset import QueryLogRecord
from .mock_engine import MockCorpus
from .results import SearchResult


class _WordMint:
    """Hands out globally unique lowercase words."""

    def __init__(self, rng: random.Random):
        self._rng = rng
        self._seen: set[str] = set()

    def word(self) -> str:
        while True:
            w = "".join(
                self._rng.choice(string.ascii_lowercase)
                for _ in range(self._rng.randint(4, 8))
            )
            if w not in self._seen:
                self._seen.add(w)
                return w

    def words(self, n: int) -> list[str]:
        return [self.word() for _ in range(n)]


def make_clustered_dataset(
    n_users: int = 20,
    queries_per_user: int = 60,
    overlap: float = 0.1,
    vocab_per_user: int = 50,
    terms_per_query: int = 3,
    repeat_prob: float = 0.3,
    shared_pool_size: int = 30,
    seed: int = 0,
) -> list[QueryLogRecord]:
    """Query log for ``n_users`` users with clustered vocabularies.

    Each user's vocabulary is mostly private; an ``overlap`` fraction is
    drawn from a pool shared across users. Users sometimes repeat their
    own earlier queries (``repeat_prob``), as real searchers do — those
    repeats are what keeps an attack plausible once the query also
    appears in the attacker's profile.
    """
    if not 0 <= overlap <= 1:
        raise ValueError(f"overlap must be in [0,1], got {overlap}")
    rng = random.Random(seed)
    mint = _WordMint(rng)
    shared_pool = mint.words(shared_pool_size)

    vocabs: list[list[str]] = []
    for _ in range(n_users):
        n_shared = round(overlap * vocab_per_user)
        vocab = rng.sample(shared_pool, min(n_shared, len(shared_pool)))
        vocab += mint.words(vocab_per_user - len(vocab))
        vocabs.append(vocab)

    per_user_queries: list[list[str]] = [[] for _ in range(n_users)]
    records: list[QueryLogRecord] = []
    # round-robin over users so the global log interleaves like live traffic
    for i in range(queries_per_user):
        for u in range(n_users):
            mine = per_user_queries[u]
            if mine and rng.random() < repeat_prob:
                text = rng.choice(mine)
            else:
                text = " ".join(rng.sample(vocabs[u], terms_per_query))
            mine.append(text)
            records.append(
                QueryLogRecord(
                    user_id=f"user{u:03d}",
                    query=text,
                    timestamp=float(i * n_users + u),
                )
            )
    return records


@dataclass
class TopicWorld:
    """A topical corpus plus the vocabulary needed to query it."""

    corpus: MockCorpus
    topic_vocabs: list[list[str]]
    generic_vocab: list[str]


def make_topic_corpus(
    n_topics: int = 10,
    docs_per_topic: int = 30,
    vocab_per_topic: int = 40,
    title_terms: int = 4,
    desc_terms: int = 8,
    generic_vocab_size: int = 10,
    generic_per_doc: int = 2,
    seed: int = 0,
) -> TopicWorld:
    """Corpus of well-separated topics with a thin layer of generic words.

    Topic vocabularies are disjoint; every document additionally carries
    a couple of generic words from a small shared vocabulary. That
    generic layer is what lets decoy queries interfere a little with
    real ones, so accuracy degrades gradually instead of being perfect
    at every decoy count.
    """
    rng = random.Random(seed)
    mint = _WordMint(rng)
    generic = mint.words(generic_vocab_size)
    topic_vocabs = [mint.words(vocab_per_topic) for _ in range(n_topics)]

    docs = []
    for t, vocab in enumerate(topic_vocabs):
        for d in range(docs_per_topic):
            title = " ".join(rng.sample(vocab, title_terms))
            desc_words = rng.sample(vocab, desc_terms) + rng.sample(
                generic, generic_per_doc
            )
            rng.shuffle(desc_words)
            docs.append(
                SearchResult(
                    title=title,
                    desc=" ".join(desc_words),
                    url=f"https://topic{t:02d}.example/doc{d:03d}",
                )
            )
    return TopicWorld(MockCorpus(docs), topic_vocabs, generic)


def make_topic_queries(
    world: TopicWorld,
    n: int,
    terms_per_query: int = 3,
    generic_prob: float = 0.35,
    seed: int = 0,
) -> list[str]:
    """Queries about single topics, sometimes with one generic word."""
    rng = random.Random(seed)
    queries = []
    for _ in range(n):
        vocab = world.topic_vocabs[rng.randrange(len(world.topic_vocabs))]
        terms = rng.sample(vocab, terms_per_query)
        if rng.random() < generic_prob:
            terms[-1] = rng.choice(world.generic_vocab)
        queries.append(" ".join(terms))
    return queries
