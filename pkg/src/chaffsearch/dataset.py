"""Query-log ingestion and the per-user train/test split.

Logs are tab-separated with an optional "AnonID\tQuery\tQueryTime"
header; extra trailing columns (click data) are ignored. Timestamps may
be ISO-8601 or epoch seconds. Profiles for the attack are built from
each user's first two thirds of queries; the remainder is what the
attacker tries to re-identify.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .history import Query

log = logging.getLogger(__name__)

_HEADER_FIELDS = ("anonid", "query", "querytime")


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class QueryLogRecord:
    user_id: str
    query: str
    timestamp: float  # epoch seconds


@dataclass
class UserProfile:
    """The adversary's preliminary knowledge of one user."""

    user_id: str
    queries: list[Query]


def load_logs(path: str | Path) -> list[QueryLogRecord]:
    """Parse a TSV query log; skips and counts malformed lines."""
    records: list[QueryLogRecord] = []
    malformed = 0
    total = 0
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if lineno == 1 and _is_header(cols):
                continue
            total += 1
            rec = _parse_row(cols)
            if rec is None:
                malformed += 1
                log.debug("%s:%d: malformed row %r", path, lineno, line)
                continue
            records.append(rec)
    if malformed:
        log.warning("%s: skipped %d of %d malformed rows", path, malformed, total)
    if total and malformed > total / 2:
        raise DatasetError(
            f"{path}: {malformed}/{total} rows malformed, refusing dataset"
        )
    return records


def _is_header(cols: list[str]) -> bool:
    return [c.strip().lower() for c in cols[:3]] == list(_HEADER_FIELDS)


def _parse_row(cols: list[str]) -> QueryLogRecord | None:
    if len(cols) < 3:
        return None
    user_id, query, stamp = cols[0].strip(), cols[1].strip(), cols[2].strip()
    if not user_id or not query:
        return None
    ts = _parse_timestamp(stamp)
    if ts is None:
        return None
    return QueryLogRecord(user_id=user_id, query=query, timestamp=ts)


def _parse_timestamp(stamp: str) -> float | None:
    try:
        return float(stamp)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(stamp)
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def group_by_user(records: list[QueryLogRecord]) -> dict[str, list[QueryLogRecord]]:
    """Per-user records in timestamp order; users in first-seen order."""
    grouped: dict[str, list[QueryLogRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.user_id, []).append(rec)
    for recs in grouped.values():
        recs.sort(key=lambda r: r.timestamp)
    return grouped


def split_train_test(
    records: list[QueryLogRecord], ratio: float = 2 / 3
) -> tuple[list[QueryLogRecord], list[QueryLogRecord]]:
    """Per user: first ceil(ratio*n) records to train, the rest to test.

    Users with fewer than 3 records go entirely to train and never
    appear in the test set.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0,1), got {ratio}")
    train: list[QueryLogRecord] = []
    test: list[QueryLogRecord] = []
    excluded = 0
    for recs in group_by_user(records).values():
        if len(recs) < 3:
            train.extend(recs)
            excluded += 1
            continue
        cut = math.ceil(ratio * len(recs))
        train.extend(recs[:cut])
        test.extend(recs[cut:])
    if excluded:
        log.info("split: %d users with <3 records kept train-only", excluded)
    return train, test


def select_top_users(records: list[QueryLogRecord], n: int) -> list[QueryLogRecord]:
    """Keep only the n most active users (ties broken by user id)."""
    counts: dict[str, int] = {}
    for rec in records:
        counts[rec.user_id] = counts.get(rec.user_id, 0) + 1
    top = sorted(counts, key=lambda u: (-counts[u], u))[:n]
    keep = set(top)
    return [r for r in records if r.user_id in keep]


def build_profiles(train: list[QueryLogRecord]) -> list[UserProfile]:
    profiles = []
    for user_id, recs in group_by_user(train).items():
        queries = []
        for rec in recs:
            try:
                queries.append(Query(rec.query))
            except ValueError:
                continue
        if queries:
            profiles.append(UserProfile(user_id=user_id, queries=queries))
    return profiles


def write_logs(records: list[QueryLogRecord], path: str | Path) -> None:
    """Write records back out in the ingestion TSV format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("AnonID\tQuery\tQueryTime\n")
        for rec in records:
            fh.write(f"{rec.user_id}\t{rec.query}\t{rec.timestamp}\n")
