"""Search result triples and result-set helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class SearchResult:
    title: str
    desc: str
    url: str

    def to_dict(self) -> dict[str, str]:
        return {"title": self.title, "desc": self.desc, "url": self.url}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        return cls(
            title=str(d.get("title", "")),
            desc=str(d.get("desc", "")),
            url=str(d.get("url", "")),
        )


def dedupe_by_url(results: Iterable[SearchResult]) -> list[SearchResult]:
    """Drop later results whose URL was already seen."""
    seen: set[str] = set()
    out = []
    for r in results:
        if r.url in seen:
            continue
        seen.add(r.url)
        out.append(r)
    return out


def results_to_dicts(results: Iterable[SearchResult]) -> list[dict[str, str]]:
    return [r.to_dict() for r in results]


def results_from_dicts(items: Iterable[dict]) -> list[SearchResult]:
    return [SearchResult.from_dict(d) for d in items]
