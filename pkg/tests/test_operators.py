import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TapeRNG, random_context, weakly_dominates
from himars.objectives import EvalContext, Evaluator, RecList
from himars.operators import (
    AnnealState,
    acceptance_probability,
    clone_counts,
    clone_proportional,
    crossover,
    domination_amount,
    mutate,
    ni_items,
    nlists,
    sample,
)
from himars.pareto import Dominance, ParetoArchive, dominates


def valid(lst, ctx):
    ctx.validate(lst)
    return True


# crossover

def test_crossover_identical_parents():
    a = RecList([4, 1, 7])
    c1, c2 = crossover(a, RecList([4, 1, 7]), np.random.default_rng(0))
    assert c1.items == a.items and c2.items == a.items


def test_crossover_full_cut_on_disjoint_parents():
    a, b = RecList([1, 2, 3]), RecList([4, 5, 6])
    c1, c2 = crossover(a, b, np.random.default_rng(0), n_cross=3)
    assert (c1.items, c2.items) == (a.items, b.items)
    c1, c2 = crossover(a, b, np.random.default_rng(0), n_cross=1)
    assert (c1.items, c2.items) == ((1, 5, 6), (4, 2, 3))


def test_crossover_cut_drawn_from_one_to_s():
    a, b = RecList([1, 2, 3]), RecList([4, 5, 6])
    c1, _ = crossover(a, b, TapeRNG([("i", 0)]))
    assert c1.items == (1, 5, 6)
    c1, _ = crossover(a, b, TapeRNG([("i", 2)]))
    assert c1.items == (1, 2, 3)


def test_crossover_overlap_repair_outcomes():
    a, b = RecList([1, 2, 3]), RecList([3, 4, 5])
    outcomes = set()
    for pick in (0, 1):
        rng = TapeRNG([("i", pick)])
        c1, c2 = crossover(a, b, rng, n_cross=2)
        assert rng.exhausted
        assert c1.items == (1, 2, 5)
        assert c2.items[:2] == (3, 4) and len(set(c2.items)) == 3
        outcomes.add(c2.items)
    # the duplicate 3 in child 2's tail is replaced by either donor from (1, 2)
    assert outcomes == {(3, 4, 1), (3, 4, 2)}


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_crossover_children_valid(seed, s):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, k=10, s=s)
    a = RecList(sample(rng, ctx.candidates, s))
    b = RecList(sample(rng, ctx.candidates, s))
    for child in crossover(a, b, rng, ctx=ctx):
        assert valid(child, ctx)
        assert set(child.items) <= set(a.items) | set(b.items)


# mutation

def test_mutation_boundaries():
    ctx = random_context(np.random.default_rng(0), k=8, s=3)
    lst = RecList([0, 1, 2])
    rng = np.random.default_rng(1)
    assert all(mutate(lst, ctx, 0.0, rng) is lst for _ in range(200))
    for _ in range(200):
        out = mutate(lst, ctx, 1.0, rng)
        assert sum(x != y for x, y in zip(out.items, lst.items)) == 1
        assert valid(out, ctx)
    full = EvalContext.from_arrays([0, 1, 2], [9], np.eye(3), [[0]] * 3, 3)
    assert mutate(lst, full, 1.0, rng) is lst
    with pytest.raises(ValueError):
        mutate(lst, ctx, 1.5, rng)


def test_mutation_frequency():
    ctx = random_context(np.random.default_rng(0), k=20, s=5)
    lst = RecList([0, 1, 2, 3, 4])
    rng = np.random.default_rng(2024)
    hits = sum(mutate(lst, ctx, 0.2, rng) is not lst for _ in range(10_000))
    assert 0.17 <= hits / 10_000 <= 0.23


# cloning

def test_clone_allocation_examples():
    assert clone_counts([3, 1], 4) == [3, 1]
    assert clone_counts([1, 1], 4) == [2, 2]
    assert clone_counts([0.7], 40) == [40]
    # infinite distance counts as twice the largest finite one: (4, 1, 2) out of 7
    assert clone_counts([math.inf, 1, 2], 10) == [6, 1, 3]
    assert clone_counts([math.inf, math.inf], 3) == [2, 1]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.floats(0, 10), st.just(math.inf)), min_size=1, max_size=12), st.integers(1, 60))
def test_clone_counts_sum_to_budget(dist, nc):
    counts = clone_counts(dist, nc)
    assert sum(counts) == nc and min(counts) >= 0


def test_clone_copies_keep_cache():
    a = RecList([1, 2], (0.5, 0.5))
    clones = clone_proportional([a], [math.inf], 3)
    assert len(clones) == 3 and all(c.objectives == a.objectives and c is not a for c in clones)


# NI items

def test_ni_items_full_context():
    ctx = random_context(np.random.default_rng(0), k=100, s=10)
    ni, pos = ni_items(RecList(range(10)), ctx, np.random.default_rng(0))
    assert len(ni) == 90 and pos == list(range(10))


def test_ni_items_clamped_and_empty():
    ctx = random_context(np.random.default_rng(0), k=8, s=5)
    ni, pos = ni_items(RecList([0, 1, 2, 3, 4]), ctx, np.random.default_rng(3))
    assert ni == [5, 6, 7]
    assert len(pos) == 3 and set(pos) <= set(range(5)) and pos == sorted(pos)
    full = random_context(np.random.default_rng(0), k=4, s=4)
    assert ni_items(RecList([0, 1, 2, 3]), full, np.random.default_rng(0)) == ([], [])


# annealing pieces

def test_domination_amount():
    assert domination_amount((1, 1), (0.5, 0.5), (1, 2)) == pytest.approx(0.5 * 0.25)
    assert domination_amount((1, 1), (1, 0.5), (1, 2)) == pytest.approx(0.25)
    assert domination_amount((1, 1), (1, 1), (1, 1)) == 0.0


def test_acceptance_probability():
    assert acceptance_probability(0.0) == 0.5
    ps = [acceptance_probability(x) for x in np.linspace(-20, 20, 201)]
    assert all(a > b for a, b in zip(ps, ps[1:]))
    wide = [acceptance_probability(x) for x in np.linspace(-800, 800, 1601)]
    assert all(a >= b for a, b in zip(wide, wide[1:]))
    assert acceptance_probability(1e6) == 0.0 and acceptance_probability(-1e6) == 1.0


def test_anneal_schedule():
    st_ = AnnealState(1.0, 0.5)
    st_.cool()
    st_.cool()
    assert st_.tau == 0.25
    inv = AnnealState(1.0, 0.5, inverse=True)
    inv.cool()
    assert inv.tau == 2.0
    with pytest.raises(ValueError):
        AnnealState(0.0)
    with pytest.raises(ValueError):
        AnnealState(1.0, 1.0)


# nlists

def four_item_context():
    cand = np.array([
        [1.0, 0.8, 0.0, 0.9],
        [0.8, 1.0, 0.0, 0.5],
        [0.0, 0.0, 1.0, 0.0],
        [0.9, 0.5, 0.0, 1.0],
    ])
    return EvalContext.from_arrays([0, 1, 2, 3], [9], cand, [[0.5], [0.4], [1.0], [0.2]], 2)


def test_nlists_total_dominance_replaces_archive():
    ctx = four_item_context()
    ev = Evaluator(ctx)
    current, other = RecList([0, 1]), RecList([1, 3])
    ev(current), ev(other)
    arc = ParetoArchive(5, 3, [current, other])
    trace = []
    rng = TapeRNG([("i", 0), ("i", 0), ("r", 0.99)])
    out = nlists(current, arc, 1.0, ev, ctx, rng, trace)
    assert rng.exhausted
    pos, new, cur, members = trace[0]
    assert (pos, new, cur, members) == (0, (2, 1), (2, 1), [(2, 1)])
    # second step: (2, 3) is dominated by the current (2, 1) and the draw 0.99 rejects it
    assert trace[1][2] == (2, 1)
    assert [m.items for m in out] == [(2, 1)]
    assert len(arc) == 2


def test_nlists_rejections_keep_current_when_dominated():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        ctx = random_context(rng, k=12, s=4)
        ev = Evaluator(ctx)
        start = RecList(sample(rng, ctx.candidates, 4))
        ev(start)
        arc = ParetoArchive(10, 6, [start])

        class Reject:
            def random(self):
                return 1.0 - 1e-12

            def integers(self, n):
                return int(rng.integers(n))

        trace = []
        nlists(start, arc, 1.0, ev, ctx, Reject(), trace)
        before = start
        for _, new, cur, _ in trace:
            if dominates(ev.log[frozenset(before.items)], ev.log[frozenset(new)]) is Dominance.FIRST:
                assert cur == before.items
            before = RecList(cur)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 5.0))
def test_nlists_archive_stays_nondominated(seed, tau):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, k=12, s=3)
    ev = Evaluator(ctx)
    arc = ParetoArchive(6, 4, [])
    for _ in range(5):
        lst = RecList(sample(rng, ctx.candidates, 3))
        ev(lst)
        arc.insert(lst)
    current = arc.members[0]
    for _ in range(5):
        trace = []
        arc = nlists(current, arc, tau, ev, ctx, rng, trace)
        current = RecList(trace[-1][2]) if trace else current
        F = arc.objectives()
        assert len(arc) <= 6
        assert not any(weakly_dominates(a, b) for a in F for b in F)
        for m in arc:
            assert valid(m, ctx)
