"""Variation operators and the archive-based annealing kernel.

All randomness goes through two calls on the supplied generator,
``rng.random()`` and ``rng.integers(n)``, so a scripted tape can stand in
for a ``numpy.random.Generator`` in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .objectives import EvalContext, RecList
from .pareto import Dominance, ParetoArchive, dominates


def randint(rng, n: int) -> int:
    return int(rng.integers(n))


def sample(rng, seq: Sequence, m: int) -> list:
    """``m`` distinct elements of ``seq`` by partial Fisher-Yates."""
    pool = list(seq)
    for j in range(m):
        r = j + randint(rng, len(pool) - j)
        pool[j], pool[r] = pool[r], pool[j]
    return pool[:m]


def crossover(
    l1: RecList, l2: RecList, rng, n_cross: int | None = None, ctx: EvalContext | None = None
) -> tuple[RecList, RecList]:
    """One-point crossover with duplicate repair.

    Child 1 is ``l1[:n] + l2[n:]``; tail items already in ``l1[:n]`` are
    replaced by random items of ``l2[:n]`` missing from child 1. Child 2 is
    built symmetrically.
    """
    s = len(l1.items)
    if n_cross is None:
        n_cross = 1 + randint(rng, s)
    return (
        _splice(l1.items, l2.items, n_cross, rng, ctx),
        _splice(l2.items, l1.items, n_cross, rng, ctx),
    )


def _splice(a: tuple, b: tuple, n: int, rng, ctx) -> RecList:
    head = list(a[:n])
    tail = list(b[n:])
    head_set = set(head)
    dup_pos = [p for p, item in enumerate(tail) if item in head_set]
    if not dup_pos:
        return RecList(head + tail)
    used = head_set | set(tail)
    donors = [x for x in b[:n] if x not in used]
    if len(donors) < len(dup_pos):
        # cannot happen for valid parents; fall back to the candidate pool
        if ctx is None:
            raise ValueError("crossover repair needs the candidate pool")
        donors += [x for x in ctx.candidates if x not in used and x not in donors]
    picks = sample(rng, donors, len(dup_pos))
    for p, item in zip(dup_pos, picks):
        tail[p] = item
    return RecList(head + tail)


def mutate(lst: RecList, ctx: EvalContext, pm: float, rng) -> RecList:
    """With probability ``pm`` swap one random position for an unused candidate."""
    if not 0 <= pm <= 1:
        raise ValueError(f"mutation probability {pm} outside [0, 1]")
    if not rng.random() < pm:
        return lst
    present = set(lst.items)
    spare = [c for c in ctx.candidates if c not in present]
    if not spare:
        return lst
    pos = randint(rng, len(lst.items))
    return lst.replace(pos, spare[randint(rng, len(spare))])


def clone_counts(distances: Sequence[float], nc: int) -> list[int]:
    """Clone allocation proportional to crowding distance, summing to ``nc``.

    Infinite distances count as twice the largest finite one (1.0 if none
    is finite); rounding is by largest remainder, earlier members first on ties.
    """
    d = np.asarray(distances, dtype=float)
    finite = d[np.isfinite(d)]
    cap = 2.0 * finite.max() if finite.size and finite.max() > 0 else 1.0
    d = np.where(np.isfinite(d), d, cap)
    total = d.sum()
    if total <= 0:
        d = np.ones_like(d)
        total = d.sum()
    quota = d * nc / total
    counts = np.floor(quota).astype(int)
    short = nc - counts.sum()
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[:short]] += 1
    return counts.tolist()


def clone_proportional(active: Sequence[RecList], distances: Sequence[float], nc: int) -> list[RecList]:
    if not active:
        raise ValueError("no active lists to clone")
    clones = []
    for lst, count in zip(active, clone_counts(distances, nc)):
        clones.extend(lst.copy() for _ in range(count))
    return clones


def ni_items(current: RecList, ctx: EvalContext, rng) -> tuple[list[int], list[int]]:
    """Candidates absent from ``current`` and the positions to perturb.

    Positions are 0-based and ascending: all ``s`` of them when enough
    spare candidates exist, otherwise a random subset of size ``|NI|``.
    """
    present = set(current.items)
    ni = [c for c in ctx.candidates if c not in present]
    s = len(current.items)
    if not ni:
        return [], []
    if len(ni) >= s:
        return ni, list(range(s))
    return ni, sorted(sample(rng, range(s), len(ni)))


def domination_amount(a, b, ranges) -> float:
    """Product of normalised gaps over the objectives where ``a`` and ``b`` differ."""
    out = 1.0
    differing = False
    for x, y, r in zip(a, b, ranges):
        if x != y and r > 0:
            out *= abs(x - y) / r
            differing = True
    return out if differing else 0.0


def acceptance_probability(x: float) -> float:
    """``1 / (1 + exp(x))`` without overflow."""
    if x >= 0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


@dataclass
class AnnealState:
    tau: float = 1.0
    alpha: float = 0.9
    inverse: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def cool(self) -> None:
        self.tau = self.tau / self.alpha if self.inverse else self.tau * self.alpha


def nlists(
    current: RecList,
    pf: ParetoArchive,
    tau: float,
    evaluate: Callable[[RecList], tuple],
    ctx: EvalContext,
    rng,
    trace: list | None = None,
) -> ParetoArchive:
    """Perturb ``current`` one position at a time against the reference archive.

    Returns an updated copy of ``pf``. When ``trace`` is given, one entry
    ``(position, new_items, current_items, archive_item_lists)`` is appended
    per perturbation.
    """
    pf = pf.copy()
    evaluate(current)
    ni, positions = ni_items(current, ctx, rng)
    for pos in positions:
        present = set(current.items)
        avail = [x for x in ni if x not in present]
        if not avail:
            continue
        pick = avail[randint(rng, len(avail))]
        new = current.replace(pos, pick)
        f_new = evaluate(new)
        f_cur = current.objectives

        F = np.vstack([pf.objectives(), [f_cur, f_new]]) if len(pf) else np.asarray([f_cur, f_new])
        ranges = F.max(axis=0) - F.min(axis=0)
        rel = dominates(f_cur, f_new)
        doms = pf.dominators(f_new)

        if rel is Dominance.FIRST:
            total = sum(domination_amount(pf.members[j].objectives, f_new, ranges) for j in doms)
            total += domination_amount(f_cur, f_new, ranges)
            avg = total / (len(doms) + 1)
            if rng.random() < acceptance_probability(avg * tau):
                current = new
        elif rel is Dominance.SECOND:
            if doms:
                amounts = [domination_amount(f_new, pf.members[j].objectives, ranges) for j in doms]
                best = int(np.argmin(amounts))
                if rng.random() < acceptance_probability(-amounts[best]):
                    current = pf.members[doms[best]]
            else:
                # also evicts the superseded current list, which new dominates
                pf.insert(new)
                current = new
        else:
            if doms:
                avg = sum(domination_amount(pf.members[j].objectives, f_new, ranges) for j in doms) / len(doms)
                if rng.random() < acceptance_probability(avg * tau):
                    current = new
            else:
                pf.insert(new)
                current = new

        ni.remove(pick)
        if trace is not None:
            trace.append((pos, new.items, current.items, [m.items for m in pf.members]))
    return pf
