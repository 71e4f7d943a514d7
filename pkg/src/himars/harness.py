"""Experiment orchestration: splits, per-user runs, aggregation and report bundles.

Every random stream is seeded from ``derive_seed(master_seed, *labels)``,
which hashes the labels with BLAKE2b, so adding or removing an algorithm or
user never perturbs the streams of other cells.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import __version__
from .algorithms import (
    ALGORITHMS,
    DISPLAY_NAMES,
    MULTI_OBJECTIVE,
    NEEDS_ARCHIVE,
    AlgoConfig,
    init_archive,
    make_rng,
    run_algorithm,
)
from .evaluation import CRITERIA, DecisionMatrix, frontier_metrics, quality_report, select_final, topsis_rank
from .objectives import build_context
from .ratings import RatingsMatrix, item_popularity, item_similarity, load_ratings, split_train_test

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

QUALITY_METRICS = ("precision", "diversity", "novelty")


class DatasetError(RuntimeError):
    exit_code = 2


class UnknownUserError(KeyError):
    exit_code = 3


def derive_seed(master: int, *labels) -> int:
    """Stable 63-bit seed from the master seed and any labels."""
    text = "|".join(str(x) for x in (master, *labels))
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little") >> 1


@dataclass
class ExperimentConfig:
    dataset: str
    output: str = "results"
    separator: str | None = None
    skip_header: bool = False
    users: list = field(default_factory=list)
    sample_users: int = 0
    test_fraction: float = 0.2
    simulations: int = 20
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    seed: int = 0
    k: int = 100
    s: int = 10
    neighborhood: int = 20
    threshold: float = 3.0
    fixed_split: bool = False
    record_timing: bool = False
    normalized_metrics: bool = False
    threads: int = 1
    algo: AlgoConfig = field(default_factory=AlgoConfig)

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if not self.users and self.sample_users < 1:
            raise ValueError("configure an explicit user list or sample_users >= 1")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        """Build from a flat mapping; AlgoConfig keys sit alongside experiment keys."""
        own = {f.name for f in fields(cls)} - {"algo"}
        algo_keys = {f.name for f in fields(AlgoConfig)}
        unknown = set(values) - own - algo_keys
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        algo = AlgoConfig.from_dict({k: v for k, v in values.items() if k in algo_keys})
        return cls(**{k: v for k, v in values.items() if k in own}, algo=algo)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            values = tomllib.load(fh)
        cfg = cls.from_mapping(values)
        base = Path(path).parent
        if not os.path.isabs(cfg.dataset):
            cfg.dataset = str(base / cfg.dataset)
        return cfg

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(out.pop("algo"))
        return out


class Aggregate(NamedTuple):
    min: float
    max: float
    mean: float


def aggregate(values: Iterable[float]) -> Aggregate:
    vals = [float(v) for v in values if not math.isnan(v)]
    if not vals:
        return Aggregate(math.nan, math.nan, math.nan)
    return Aggregate(min(vals), max(vals), math.fsum(vals) / len(vals))


def aggregate_table(records: Iterable[tuple]) -> dict[tuple, Aggregate]:
    """Group ``(user, algorithm, metric, value)`` records into min/max/mean."""
    groups: dict[tuple, list] = {}
    for user, algo, metric, value in records:
        groups.setdefault((user, algo, metric), []).append(value)
    return {key: aggregate(vals) for key, vals in groups.items()}


@dataclass
class ExperimentOutcome:
    exit_code: int
    output: Path
    failures: list


def _resolve_users(cfg: ExperimentConfig, data: RatingsMatrix) -> list[int]:
    if cfg.users:
        dense, missing = [], []
        for raw in cfg.users:
            try:
                dense.append(data.user_index(raw))
            except KeyError:
                missing.append(raw)
        if missing:
            raise UnknownUserError(f"unknown user ids: {missing}")
        return dense
    rng = make_rng(derive_seed(cfg.seed, "users"))
    n = min(cfg.sample_users, data.n_users)
    return sorted(rng.choice(data.n_users, size=n, replace=False).tolist())


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list, rows: Iterable) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")


def _user_job(job: dict) -> dict:
    """All configured algorithms for one (simulation, user); runs in a worker."""
    cfg: ExperimentConfig = job["cfg"]
    ctx = job["ctx"]
    sim, raw_user = job["sim"], job["raw_user"]
    out = {"results": {}, "failures": []}
    init_arc = None
    if any(a in NEEDS_ARCHIVE for a in cfg.algorithms):
        init_arc = init_archive(ctx, make_rng(derive_seed(cfg.seed, "init", sim, raw_user)), cfg.algo)
    for algo in cfg.algorithms:
        seed = derive_seed(cfg.seed, "cell", sim, raw_user, algo)
        try:
            res = run_algorithm(algo, ctx, cfg.algo, make_rng(seed), init_arc)
        except Exception as exc:  # a failing cell must not stop the others
            out["failures"].append({"simulation": sim, "user": raw_user, "algorithm": algo, "error": repr(exc),
                                    "traceback": traceback.format_exc()})
            continue
        out["results"][algo] = (seed, res)
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutcome:
    """Run every (simulation, user, algorithm) cell and write the report bundle."""
    out_dir = Path(cfg.output)
    try:
        data = load_ratings(cfg.dataset, sep=cfg.separator, skip_header=cfg.skip_header)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read dataset {cfg.dataset}: {exc}") from exc
    users = _resolve_users(cfg, data)
    raw_ids = [data.user_ids[u].item() for u in users]
    threads = int(os.environ.get("HIMARS_THREADS", cfg.threads) or 1)

    quality_records = []
    frontier_records = []
    failures = []
    executor = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for sim in range(cfg.simulations):
            split = split_train_test(data, cfg.test_fraction, derive_seed(cfg.seed, "split", 0 if cfg.fixed_split else sim))
            train, test = split.train, split.test
            predictor = item_similarity(train, "adjusted-cosine")
            cosine = item_similarity(train, "cosine")
            popularity = item_popularity(train)
            jobs = []
            for u, raw in zip(users, raw_ids):
                try:
                    ctx = build_context(u, cfg.k, cfg.s, cosine, train, predictor_sim=predictor,
                                        neighborhood=cfg.neighborhood)
                except ValueError as exc:
                    failures.append({"simulation": sim, "user": raw, "algorithm": None, "error": repr(exc)})
                    continue
                jobs.append({"cfg": cfg, "ctx": ctx, "sim": sim, "raw_user": raw, "user": u})
            mapper = executor.map if executor else map
            for job, done in zip(jobs, mapper(_user_job, jobs)):
                failures.extend(done["failures"])
                raw, u = job["raw_user"], job["user"]
                for algo, (seed, res) in done["results"].items():
                    stem = f"sim{sim:03d}/{raw}_{algo}"
                    _write_json(out_dir / "cells" / f"{stem}.json",
                                res.to_json(user=raw, seed=seed, item_ids=data.item_ids, timing=cfg.record_timing))
                    _write_csv(
                        out_dir / "frontiers" / f"{stem}.csv",
                        ["f1", "f2"] + [f"item_{n + 1}" for n in range(job["ctx"].s)],
                        ([m.objectives.f1, m.objectives.f2] + [data.item_ids[i].item() for i in m.items]
                         for m in res.frontier),
                    )
                    chosen = select_final(res.frontier)
                    q = quality_report(chosen, test, u, cosine, popularity, cfg.threshold)
                    for metric in QUALITY_METRICS:
                        quality_records.append((raw, algo, metric, getattr(q, metric)))
                    if algo in MULTI_OBJECTIVE:
                        fr = frontier_metrics(res.frontier, normalized=cfg.normalized_metrics)
                        for crit, value in fr.as_row().items():
                            frontier_records.append((raw, algo, crit, value))
    finally:
        if executor:
            executor.shutdown()

    notes = _write_aggregates(out_dir, cfg, raw_ids, quality_records, frontier_records)
    manifest = {
        # output location and worker count do not affect results
        "config": {k: v for k, v in cfg.as_dict().items() if k not in ("output", "threads")},
        "versions": {
            "himars": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "dataset": {"users": data.n_users, "items": data.n_items, "ratings": data.n_ratings},
        "failures": [{k: v for k, v in f.items() if k != "traceback"} for f in failures],
        "notes": notes,
    }
    _write_json(out_dir / "run.json", manifest)
    for f in failures:
        log.error("cell failed: %s", f.get("traceback") or f["error"])
    return ExperimentOutcome(1 if failures else 0, out_dir, failures)


def _write_aggregates(out_dir: Path, cfg, raw_ids, quality_records, frontier_records) -> list:
    algos = list(cfg.algorithms)
    q = aggregate_table(quality_records)
    _write_csv(
        out_dir / "quality.csv",
        ["user", "algorithm", "metric", "min", "max", "mean"],
        ([u, a, m, *q[(u, a, m)]] for u in raw_ids for a in algos for m in QUALITY_METRICS if (u, a, m) in q),
    )
    fr = aggregate_table(frontier_records)
    mo = [a for a in algos if a in MULTI_OBJECTIVE]
    rows = []
    for u in raw_ids:
        for a in mo:
            if (u, a, "SM") in fr:
                rows.append([u, a] + [fr[(u, a, c)].mean for c in CRITERIA])
    _write_csv(out_dir / "frontier.csv", ["user", "algorithm", *CRITERIA], rows)
    ranked, notes = rank_rows(rows)
    _write_csv(out_dir / "topsis.csv", ["user", "algorithm", "CLO", "rank"], ranked)
    return notes


def rank_rows(rows: list) -> tuple[list, list]:
    """TOPSIS per user over ``[user, algorithm, SM, MID, DM, SNS]`` rows."""
    by_user: dict = {}
    for row in rows:
        by_user.setdefault(row[0], []).append(row)
    ranked, notes = [], []
    for user, group in by_user.items():
        usable = [r for r in group if all(math.isfinite(float(x)) for x in r[2:6])]
        if len(usable) < len(group):
            notes.append(f"user {user}: {len(group) - len(usable)} algorithm(s) with undefined metrics left out of TOPSIS")
        try:
            dm = DecisionMatrix([r[1] for r in usable], [[float(x) for x in r[2:6]] for r in usable])
            result = topsis_rank(dm)
        except ValueError as exc:
            notes.append(f"user {user}: TOPSIS skipped ({exc})")
            continue
        ranked.extend([user, r.algorithm, r.clo, r.rank] for r in result)
    return ranked, notes


def format_table(rows: list, header: list) -> str:
    widths = [max(len(str(h)), *(len(_fmt(r[i]) if not isinstance(r[i], float) else f"{r[i]:.4f}") for r in rows))
              for i, h in enumerate(header)] if rows else [len(h) for h in header]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths))]
    for r in rows:
        cells = [f"{x:.4f}" if isinstance(x, float) else str(DISPLAY_NAMES.get(x, x)) for x in r]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)
