"""Shared fixtures: random toy contexts, brute-force objective oracles and a scripted RNG."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from himars.objectives import EvalContext

# acceptance criterion number -> one-line verdict, echoed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


def random_tables(rng: np.random.Generator, k: int = 8, n_rated: int = 3):
    a = rng.random((k, k))
    cand = (a + a.T) / 2
    np.fill_diagonal(cand, 1.0)
    return cand, rng.random((k, n_rated))


def random_context(rng: np.random.Generator, k: int = 8, s: int = 2, n_rated: int = 3, tables: bool = False):
    """Context over candidates 0..k-1 and rated items 100.. with similarities in [0, 1]."""
    cand, cross = random_tables(rng, k, n_rated)
    ctx = EvalContext.from_arrays(range(k), range(100, 100 + n_rated), cand, cross, s)
    return (ctx, cand, cross) if tables else ctx


def oracle_f1(items, cross) -> float:
    total = 0.0
    for i in items:
        for j in range(cross.shape[1]):
            total += cross[i, j]
    return total / len(items)


def oracle_f2(items, cand) -> float:
    total = 0.0
    n = len(items)
    for a in items:
        for b in items:
            if a != b:
                total += 1.0 - cand[a, b]
    return total / (n * (n - 1))


def pareto_by_enumeration(cand, cross, s: int) -> dict:
    """Every size-s sublist over candidates 0..k-1 mapped to its objectives, plus the Pareto subset."""
    vecs = {}
    for combo in itertools.combinations(range(len(cand)), s):
        vecs[frozenset(combo)] = (oracle_f1(combo, cross), oracle_f2(combo, cand))
    pareto = set()
    for key, v in vecs.items():
        beaten = any(
            w[0] >= v[0] and w[1] >= v[1] and (w[0] > v[0] or w[1] > v[1]) for w in vecs.values()
        )
        if not beaten:
            pareto.add(key)
    return {"all": vecs, "pareto": pareto}


def weakly_dominates(a, b) -> bool:
    return a[0] >= b[0] and a[1] >= b[1] and (a[0] > b[0] or a[1] > b[1])


class TapeRNG:
    """Replays a fixed list of draws; ``("r", x)`` answers random(), ``("i", n)`` answers integers()."""

    def __init__(self, tape):
        self.tape = list(tape)
        self.pos = 0

    def _next(self, kind):
        if self.pos >= len(self.tape):
            raise AssertionError(f"tape exhausted at draw {self.pos} ({kind})")
        got, value = self.tape[self.pos]
        if got != kind:
            raise AssertionError(f"draw {self.pos}: tape has {got!r}, code asked for {kind!r}")
        self.pos += 1
        return value

    def random(self):
        return self._next("r")

    def integers(self, n):
        value = self._next("i")
        if not 0 <= value < n:
            raise AssertionError(f"tape value {value} outside range({n})")
        return value

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.tape)


class ZeroRNG:
    """Always draws the lowest value; handy for forcing acceptances."""

    def random(self):
        return 0.0

    def integers(self, n):
        return 0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
