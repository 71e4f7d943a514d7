import csv
import hashlib
import json
import math
import os

import numpy as np
import pytest

from himars import harness
from himars.cli import main
from himars.harness import (
    DatasetError,
    ExperimentConfig,
    UnknownUserError,
    aggregate,
    aggregate_table,
    derive_seed,
    run_experiment,
)

FAST = dict(k=15, s=4, max_iter=4, init_iter=3, pop_size=16, hard_limit=16, soft_limit=24, nd=16, na=4, nc=8)


def write_dataset(path, n_users=25, n_items=40, per_user=15, seed=1):
    rng = np.random.default_rng(seed)
    with open(path, "w") as fh:
        for u in range(1, n_users + 1):
            for i in rng.choice(n_items, size=per_user, replace=False):
                fh.write(f"{u}::{i + 1}::{rng.integers(1, 6)}::978300760\n")
    return path


@pytest.fixture
def dataset(tmp_path):
    return write_dataset(tmp_path / "ratings.dat")


def config(dataset, out, **kw):
    values = {"dataset": str(dataset), "output": str(out), "users": [1, 2], "simulations": 2, **FAST, **kw}
    return ExperimentConfig.from_mapping(values)


def read_tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def test_aggregate_examples():
    assert aggregate([0.2, 0.4]) == pytest.approx((0.2, 0.4, 0.3))
    assert aggregate([0.7]) == (0.7, 0.7, 0.7)
    vals = np.random.default_rng(0).random(20).tolist()
    lo, hi, mean = aggregate(vals)
    assert (lo, hi) == (min(vals), max(vals))
    assert mean == pytest.approx(sum(vals) / 20, rel=1e-15)
    assert aggregate(reversed(vals)) == aggregate(vals)
    assert lo <= mean <= hi
    assert all(math.isnan(x) for x in aggregate([math.nan]))
    table = aggregate_table([(1, "a", "p", 0.1), (1, "a", "p", 0.3), (2, "a", "p", 1.0)])
    assert table[(1, "a", "p")] == pytest.approx((0.1, 0.3, 0.2))


def test_seed_derivation_is_stable_and_label_sensitive():
    digest = hashlib.blake2b(b"7|cell|0|3|hanv2", digest_size=8).digest()
    assert derive_seed(7, "cell", 0, 3, "hanv2") == int.from_bytes(digest, "little") >> 1
    assert derive_seed(7, "cell", 0, 3, "hanv2") != derive_seed(7, "cell", 0, 3, "hanv1")
    assert 0 <= derive_seed(0) < 2**63


def test_config_validation_and_toml(tmp_path, dataset):
    with pytest.raises(ValueError, match="unknown configuration"):
        ExperimentConfig.from_mapping({"dataset": "x", "users": [1], "popsize": 3})
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"dataset": "x", "users": [1], "algorithms": ["moead"]})
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"dataset": "x"})
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"dataset": "x", "users": [1], "simulations": 0})
    path = tmp_path / "exp.toml"
    path.write_text('dataset = "ratings.dat"\nusers = [3]\nmax_iter = 7\nseed = 5\n')
    cfg = ExperimentConfig.load(path)
    assert cfg.dataset == str(tmp_path / "ratings.dat")
    assert (cfg.users, cfg.algo.max_iter, cfg.seed, cfg.simulations) == ([3], 7, 5, 20)


def test_smallest_run(tmp_path, dataset):
    out = tmp_path / "out"
    cfg = config(dataset, out, users=[1], algorithms=["hanv2"], simulations=1)
    res = run_experiment(cfg)
    assert res.exit_code == 0 and not res.failures
    files = read_tree(out)
    assert sorted(k for k in files if k.startswith("frontiers")) == [os.path.join("frontiers", "sim000", "1_hanv2.csv")]
    with open(out / "quality.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["metric"] for r in rows] == ["precision", "diversity", "novelty"]
    assert all(float(r["min"]) == float(r["max"]) == float(r["mean"]) for r in rows)
    with open(out / "frontiers" / "sim000" / "1_hanv2.csv") as fh:
        header = fh.readline().strip().split(",")
    assert header == ["f1", "f2", "item_1", "item_2", "item_3", "item_4"]
    cell = json.loads(files[os.path.join("cells", "sim000", "1_hanv2.json")])
    assert cell["algorithm"] == "hanv2" and cell["user"] == 1 and cell["wall_time_ms"] is None
    manifest = json.loads(files["run.json"])
    assert manifest["dataset"]["users"] == 25 and manifest["failures"] == []


def test_full_bundle_is_byte_identical(tmp_path, dataset):
    a = run_experiment(config(dataset, tmp_path / "a"))
    b = run_experiment(config(dataset, tmp_path / "b"))
    assert a.exit_code == b.exit_code == 0
    ta, tb = read_tree(tmp_path / "a"), read_tree(tmp_path / "b")
    assert ta == tb
    assert len([k for k in ta if k.startswith("cells")]) == 2 * 2 * 8
    with open(tmp_path / "a" / "topsis.csv") as fh:
        ranks = [r for r in csv.DictReader(fh)]
    assert len(ranks) == 2 * 7
    for user in ("1", "2"):
        assert sorted(int(r["rank"]) for r in ranks if r["user"] == user) == list(range(1, 8))
    assert b"\r\n" not in ta["quality.csv"]


def test_adding_an_algorithm_leaves_other_cells_untouched(tmp_path, dataset):
    run_experiment(config(dataset, tmp_path / "a", algorithms=["nsga2"]))
    run_experiment(config(dataset, tmp_path / "b", algorithms=["nsga2", "hanv1"]))
    ta, tb = read_tree(tmp_path / "a"), read_tree(tmp_path / "b")
    for name, data in ta.items():
        if name.startswith(("cells", "frontiers")):
            assert tb[name] == data


def test_seeded_user_sample(tmp_path, dataset):
    cfg = config(dataset, tmp_path / "o", users=[], sample_users=3, simulations=1, algorithms=["icf"])
    run_experiment(cfg)
    with open(tmp_path / "o" / "quality.csv") as fh:
        users = {r["user"] for r in csv.DictReader(fh)}
    assert len(users) == 3


def test_unreadable_dataset_and_unknown_user(tmp_path, dataset):
    with pytest.raises(DatasetError):
        run_experiment(config(tmp_path / "missing.dat", tmp_path / "o"))
    with pytest.raises(UnknownUserError):
        run_experiment(config(dataset, tmp_path / "o", users=[1, 999]))


def test_failing_cell_is_recorded(tmp_path, dataset, monkeypatch):
    real = harness.run_algorithm

    def flaky(name, *args, **kw):
        if name == "amosa":
            raise RuntimeError("boom")
        return real(name, *args, **kw)

    monkeypatch.setattr(harness, "run_algorithm", flaky)
    res = run_experiment(config(dataset, tmp_path / "o", algorithms=["icf", "amosa"], simulations=1))
    assert res.exit_code == 1
    assert {f["algorithm"] for f in res.failures} == {"amosa"}
    manifest = json.loads((tmp_path / "o" / "run.json").read_text())
    assert len(manifest["failures"]) == 2 and "boom" in manifest["failures"][0]["error"]
    assert (tmp_path / "o" / "cells" / "sim000" / "1_icf.json").exists()


def test_rank_rows_skips_undefined_metrics():
    rows = [["u", "nnia", 0.1, 0.5, 2.0, 3.0], ["u", "nsga2", math.nan, 0.5, 2.0, 3.0], ["u", "amosa", 0.2, 0.6, 1.0, 2.0]]
    ranked, notes = harness.rank_rows(rows)
    assert [r[1] for r in ranked] == ["nnia", "amosa"]
    assert notes and "undefined" in notes[0]


# command line

def write_config(tmp_path, dataset, **kw):
    values = {"dataset": str(dataset), "users": [1], "simulations": 1, "algorithms": ["icf", "nnia", "hanv2"], **FAST, **kw}
    lines = [f"{k} = {json.dumps(v)}" for k, v in values.items()]
    path = tmp_path / "exp.toml"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_cli_run_and_rank(tmp_path, dataset, capsys):
    cfg = write_config(tmp_path, dataset)
    assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "topsis.csv").exists()
    capsys.readouterr()
    assert main(["rank", "--input", str(tmp_path / "o" / "frontier.csv")]) == 0
    out = capsys.readouterr().out
    assert "HANv2" in out and "CLO" in out


def test_cli_exit_codes(tmp_path, dataset):
    assert main(["run", "--config", str(write_config(tmp_path, tmp_path / "nope.dat"))]) == 2
    assert main(["run", "--config", str(write_config(tmp_path, dataset, users=[4242]))]) == 3
    assert main(["recommend", "--input", str(dataset), "--user", "4242", "--algo", "icf"]) == 3
    assert main(["rank", "--input", str(tmp_path / "missing.csv")]) == 2


def test_cli_recommend(dataset, capsys):
    args = ["recommend", "--input", str(dataset), "--user", "3", "--algo", "nnia", "--k", "12", "--s", "3", "--max-iter", "3"]
    assert main(args) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["algorithm"] == "nnia" and report["user"] == 3
    assert len(report["selected"]["items"]) == 3
    assert report["selected"]["items"] in [m["items"] for m in report["frontier"]]


def test_cli_split(tmp_path, dataset):
    assert main(["split", "--input", str(dataset), "--output", str(tmp_path / "sp"), "--seed", "4"]) == 0
    train = (tmp_path / "sp" / "train.csv").read_text().splitlines()
    test = (tmp_path / "sp" / "test.csv").read_text().splitlines()
    assert (len(train), len(test)) == (300, 75)
    assert not set(train) & set(test)
