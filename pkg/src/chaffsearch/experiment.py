"""Privacy/accuracy experiment runner.

For each decoy count k in a sweep this runs two loops:

  privacy — protect every test query with the real obfuscation module
  (decoy pool fed by all users' training queries, exactly like the
  deployed proxy's shared history) and attack it, yielding the
  re-identification rate;

  accuracy — for a seeded sample of queries, compare the engine's
  direct answer against the obfuscate -> search -> filter pipeline,
  yielding mean precision and recall.

One CSV row per k. Sweeps are resumable: ks already present in the
output file are skipped.
"""

from __future__ import annotations

import argparse
import csv
import logging
import random
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .backend import MockBackend
from .dataset import (
    QueryLogRecord,
    UserProfile,
    build_profiles,
    load_logs,
    select_top_users,
    split_train_test,
    write_logs,
)
from .filtering import filter_results
from .history import HistoryStore, Query, QueryError
from .metrics import precision_recall, reidentification_rate
from .mock_engine import MockCorpus, search_mock
from .obfuscate import obfuscate, serialize
from .simattack import SimAttackConfig
from .synthetic import TopicWorld, make_clustered_dataset, make_topic_corpus, make_topic_queries

log = logging.getLogger(__name__)

CSV_HEADER = ["k", "n_test", "reident_rate", "precision_mean", "recall_mean",
              "n_accuracy_queries", "seed"]


@dataclass
class ExperimentConfig:
    k_list: list[int] = field(default_factory=lambda: [0, 1, 3, 7])
    seed: int = 0
    sample_size: int = 100
    alpha: float = 0.5
    history_capacity: int = 100_000
    per_query_limit: int = 20


@dataclass
class ExperimentRow:
    k: int
    n_test: int
    reident_rate: float
    precision_mean: float
    recall_mean: float
    n_accuracy_queries: int
    seed: int

    def __post_init__(self):
        for name in ("reident_rate", "precision_mean", "recall_mean"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0,1]")


@dataclass
class ExperimentReport:
    rows: list[ExperimentRow]


def seeded_history(
    train: list[QueryLogRecord], capacity: int
) -> HistoryStore:
    """A decoy pool holding all training queries, oldest first."""
    store = HistoryStore(capacity)
    for rec in sorted(train, key=lambda r: r.timestamp):
        try:
            store.push(Query(rec.query))
        except QueryError:
            continue
    return store


def privacy_rate(
    train: list[QueryLogRecord],
    test: list[QueryLogRecord],
    profiles: list[UserProfile],
    k: int,
    cfg: ExperimentConfig,
) -> float:
    """Re-identification rate with k decoys from the shared history."""
    store = seeded_history(train, cfg.history_capacity)
    rng = random.Random(f"{cfg.seed}:privacy:{k}")
    test_pairs = [(rec.user_id, Query(rec.query)) for rec in test]

    def protect(user_id: str, q: Query):
        return obfuscate(q, k, store, rng)

    return reidentification_rate(
        test_pairs, protect, profiles, SimAttackConfig(cfg.alpha)
    )


def accuracy_means(
    corpus: MockCorpus,
    query_pool: list[str],
    k: int,
    cfg: ExperimentConfig,
) -> tuple[float, float, int]:
    """Mean (precision, recall) of the pipeline over a seeded query sample.

    The same sample is used for every k (only decoy draws differ), so
    sweep rows are comparable.
    """
    sample_rng = random.Random(f"{cfg.seed}:sample")
    n = min(cfg.sample_size, len(query_pool))
    queries = sample_rng.sample(query_pool, n)

    store = HistoryStore(cfg.history_capacity)
    for text in query_pool:
        store.push(Query(text))
    backend = MockBackend(corpus, cfg.per_query_limit)
    ob_rng = random.Random(f"{cfg.seed}:accuracy:{k}")

    precisions, recalls = [], []
    for text in queries:
        q = Query(text)
        direct = search_mock(corpus, text, cfg.per_query_limit)
        oq = obfuscate(q, k, store, ob_rng)
        merged, _ = backend.search(serialize(oq))
        kept = filter_results(q, oq.decoys(), merged)
        p, r = precision_recall(direct, kept)
        precisions.append(p)
        recalls.append(r)
    return statistics.mean(precisions), statistics.mean(recalls), n


def run_experiment(
    records: list[QueryLogRecord],
    corpus: MockCorpus,
    query_pool: list[str],
    cfg: ExperimentConfig,
    out_csv: str | Path | None = None,
) -> ExperimentReport:
    """Full sweep over cfg.k_list; appends one CSV row per k."""
    done: dict[int, ExperimentRow] = {}
    if out_csv and Path(out_csv).exists():
        for row in read_report(out_csv).rows:
            done[row.k] = row
        if done:
            log.info("resuming sweep: ks %s already present", sorted(done))

    train, test = split_train_test(records)
    profiles = build_profiles(train)

    rows = []
    for k in cfg.k_list:
        if k in done:
            rows.append(done[k])
            continue
        rate = privacy_rate(train, test, profiles, k, cfg)
        p_mean, r_mean, n_acc = accuracy_means(corpus, query_pool, k, cfg)
        row = ExperimentRow(
            k=k,
            n_test=len(test),
            reident_rate=rate,
            precision_mean=p_mean,
            recall_mean=r_mean,
            n_accuracy_queries=n_acc,
            seed=cfg.seed,
        )
        rows.append(row)
        log.info(
            "k=%d: reident=%.4f precision=%.4f recall=%.4f",
            k, rate, p_mean, r_mean,
        )
        if out_csv:
            _append_row(out_csv, row, write_header=not Path(out_csv).exists())
    return ExperimentReport(rows)


def _append_row(path: str | Path, row: ExperimentRow, write_header: bool) -> None:
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(CSV_HEADER)
        writer.writerow([
            row.k, row.n_test, f"{row.reident_rate:.6f}",
            f"{row.precision_mean:.6f}", f"{row.recall_mean:.6f}",
            row.n_accuracy_queries, row.seed,
        ])


def read_report(path: str | Path) -> ExperimentReport:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ExperimentRow(
                k=int(rec["k"]),
                n_test=int(rec["n_test"]),
                reident_rate=float(rec["reident_rate"]),
                precision_mean=float(rec["precision_mean"]),
                recall_mean=float(rec["recall_mean"]),
                n_accuracy_queries=int(rec["n_accuracy_queries"]),
                seed=int(rec["seed"]),
            ))
    return ExperimentReport(rows)


# --- CLI ---------------------------------------------------------------


def _load_records(args) -> list[QueryLogRecord]:
    if args.logs:
        records = load_logs(args.logs)
        if args.top_users:
            records = select_top_users(records, args.top_users)
        return records
    return make_clustered_dataset(seed=args.seed)


def _load_world(args) -> tuple[MockCorpus, list[str]]:
    if getattr(args, "corpus", None):
        corpus = MockCorpus.from_json_file(args.corpus)
        pool = [doc.title for doc in corpus.docs]
        return corpus, pool
    world = make_topic_corpus(seed=args.seed)
    pool = make_topic_queries(world, 400, seed=args.seed)
    return world.corpus, pool


def _parse_k_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip() != ""]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chaff-eval", description="privacy/accuracy evaluation harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, accuracy=False):
        p.add_argument("--logs", help="query log TSV (default: synthetic dataset)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--top-users", type=int, default=0,
                       help="keep only the N most active users")
        if accuracy:
            p.add_argument("--corpus", help="mock corpus JSON (default: synthetic topics)")
            p.add_argument("--sample-size", type=int, default=100)

    p_ingest = sub.add_parser("ingest", help="parse a log file and report stats")
    common(p_ingest)

    p_split = sub.add_parser("split", help="write train/test TSVs")
    common(p_split)
    p_split.add_argument("--out-train", required=True)
    p_split.add_argument("--out-test", required=True)
    p_split.add_argument("--ratio", type=float, default=2 / 3)

    p_attack = sub.add_parser("attack", help="re-identification rate for one k")
    common(p_attack)
    p_attack.add_argument("--k", type=int, default=0)
    p_attack.add_argument("--alpha", type=float, default=0.5)

    p_acc = sub.add_parser("accuracy", help="precision/recall for one k")
    common(p_acc, accuracy=True)
    p_acc.add_argument("--k", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="full sweep, CSV out")
    common(p_sweep, accuracy=True)
    p_sweep.add_argument("--k-list", default="0,1,3,7")
    p_sweep.add_argument("--alpha", type=float, default=0.5)
    p_sweep.add_argument("--out", required=True, help="output CSV path")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    if args.command == "ingest":
        records = _load_records(args)
        users = {r.user_id for r in records}
        print(f"records={len(records)} users={len(users)}")
        return 0

    if args.command == "split":
        records = _load_records(args)
        train, test = split_train_test(records, args.ratio)
        write_logs(train, args.out_train)
        write_logs(test, args.out_test)
        print(f"train={len(train)} test={len(test)}")
        return 0

    if args.command == "attack":
        records = _load_records(args)
        cfg = ExperimentConfig(seed=args.seed, alpha=args.alpha)
        train, test = split_train_test(records)
        profiles = build_profiles(train)
        rate = privacy_rate(train, test, profiles, args.k, cfg)
        print(f"k={args.k} n_test={len(test)} reident_rate={rate:.4f}")
        return 0

    if args.command == "accuracy":
        corpus, pool = _load_world(args)
        cfg = ExperimentConfig(seed=args.seed, sample_size=args.sample_size)
        p_mean, r_mean, n = accuracy_means(corpus, pool, args.k, cfg)
        print(f"k={args.k} n={n} precision={p_mean:.4f} recall={r_mean:.4f}")
        return 0

    if args.command == "sweep":
        records = _load_records(args)
        corpus, pool = _load_world(args)
        cfg = ExperimentConfig(
            k_list=_parse_k_list(args.k_list),
            seed=args.seed,
            sample_size=args.sample_size,
            alpha=args.alpha,
        )
        report = run_experiment(records, corpus, pool, cfg, out_csv=args.out)
        for row in report.rows:
            print(
                f"k={row.k} reident={row.reident_rate:.4f} "
                f"precision={row.precision_mean:.4f} recall={row.recall_mean:.4f}"
            )
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
