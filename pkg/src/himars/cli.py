"""Command line entry point: ``himars run|split|recommend|rank``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .algorithms import ALGORITHMS, AlgoConfig, make_rng, run_algorithm
from .evaluation import CRITERIA, select_final
from .harness import (
    DatasetError,
    ExperimentConfig,
    UnknownUserError,
    derive_seed,
    format_table,
    rank_rows,
    run_experiment,
)
from .objectives import build_context
from .ratings import RatingsFormatError, item_similarity, load_ratings, split_train_test


def _load(path: str, sep: str | None):
    try:
        return load_ratings(path, sep=sep)
    except (OSError, RatingsFormatError) as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc


def cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: bad configuration {args.config}: {exc}", file=sys.stderr)
        return 2
    if args.output:
        cfg.output = args.output
    if args.seed is not None:
        cfg.seed = args.seed
    outcome = run_experiment(cfg)
    print(f"report bundle written to {outcome.output}")
    if outcome.failures:
        print(f"{len(outcome.failures)} cell(s) failed; see run.json", file=sys.stderr)
    return outcome.exit_code


def cmd_split(args) -> int:
    data = _load(args.input, args.sep)
    split = split_train_test(data, args.test_fraction, args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", split.train), ("test", split.test)):
        users, items, ratings = part.triples()
        with open(out / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for u, i, r in zip(users, items, ratings):
                w.writerow([data.user_ids[u], data.item_ids[i], repr(float(r))])
        print(f"{name}: {part.n_ratings} ratings -> {out / (name + '.csv')}")
    return 0


def cmd_recommend(args) -> int:
    data = _load(args.input, args.sep)
    try:
        user = data.user_index(args.user)
    except KeyError:
        raise UnknownUserError(f"unknown user id {args.user!r}") from None
    cfg = AlgoConfig(max_iter=args.max_iter)
    predictor = item_similarity(data, "adjusted-cosine")
    cosine = item_similarity(data, "cosine")
    try:
        ctx = build_context(user, args.k, args.s, cosine, data, predictor_sim=predictor, neighborhood=args.neighborhood)
    except ValueError as exc:
        print(f"error: user {args.user}: {exc}", file=sys.stderr)
        return 1
    seed = derive_seed(args.seed, "recommend", args.user, args.algo)
    res = run_algorithm(args.algo, ctx, cfg, make_rng(seed))
    chosen = select_final(res.frontier)
    report = res.to_json(user=data.user_ids[user].item(), seed=seed, item_ids=data.item_ids)
    report["selected"] = {
        "f1": chosen.objectives.f1,
        "f2": chosen.objectives.f2,
        "items": [data.item_ids[i].item() for i in chosen.items],
    }
    json.dump(report, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_rank(args) -> int:
    try:
        with open(args.input, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"user", "algorithm", *CRITERIA} - set(reader.fieldnames or ())
            if missing:
                raise DatasetError(f"{args.input} lacks columns {sorted(missing)}")
            rows = [[r["user"], r["algorithm"]] + [float(r[c]) for c in CRITERIA] for r in reader]
    except OSError as exc:
        raise DatasetError(f"cannot read {args.input}: {exc}") from exc
    ranked, notes = rank_rows(rows)
    for note in notes:
        print(f"note: {note}", file=sys.stderr)
    print(format_table(ranked, ["user", "algorithm", "CLO", "rank"]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="himars", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured experiment and write the report bundle")
    p.add_argument("--config", required=True, help="TOML file with flat experiment/algorithm keys")
    p.add_argument("--output", help="override the configured output directory")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("split", help="write a seeded train/test split of a ratings file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="directory for train.csv and test.csv")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sep")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("recommend", help="optimise and select a top-s list for one user")
    p.add_argument("--input", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--algo", choices=ALGORITHMS, default="hanv2")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--s", type=int, default=10)
    p.add_argument("--neighborhood", type=int, default=20)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sep")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("rank", help="TOPSIS ranking of algorithms from a frontier.csv")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DatasetError, UnknownUserError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
