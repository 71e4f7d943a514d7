"""Optimizer drivers: ICF baseline, NSGA-II, AMOSA, NNIA and the four hybrids."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .objectives import EvalContext, Evaluator, RecList, evaluate
from .operators import AnnealState, clone_proportional, crossover, mutate, nlists, randint, sample
from .pareto import (
    ParetoArchive,
    crowding_distance,
    front_indices,
    nondominated_mask,
    objective_array,
    truncate,
    unique_lists,
)

ALGORITHMS = ("icf", "nnia", "nsga2", "amosa", "hanv1", "hanv2", "haniv1", "haniv2")
MULTI_OBJECTIVE = ALGORITHMS[1:]
NEEDS_ARCHIVE = ("amosa", "hanv2", "haniv2")
DISPLAY_NAMES = {
    "icf": "ICF",
    "nnia": "NNIA",
    "nsga2": "NSGA-II",
    "amosa": "AMOSA",
    "hanv1": "HANv1",
    "hanv2": "HANv2",
    "haniv1": "HANIv1",
    "haniv2": "HANIv2",
}


@dataclass
class AlgoConfig:
    max_iter: int = 200
    pop_size: int = 100
    pc: float = 0.7
    pm: float = 0.2
    soft_limit: int = 140
    hard_limit: int = 100
    tau0: float = 1.0
    alpha: float = 0.9
    nd: int = 100
    na: int = 10
    nc: int = 40
    pm_nnia: float = 0.1
    init_iter: int = 50
    inverse_schedule: bool = False
    trace: bool = False

    def __post_init__(self):
        if self.hard_limit > self.soft_limit:
            raise ValueError("hard_limit must not exceed soft_limit")
        if self.na > self.nd:
            raise ValueError("na must not exceed nd")
        for name in ("pc", "pm", "pm_nnia"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")
        if self.max_iter < 0 or self.init_iter < 0:
            raise ValueError("iteration counts must be non-negative")
        if min(self.pop_size, self.hard_limit, self.nd, self.na, self.nc) < 1:
            raise ValueError("population sizes must be positive")

    @classmethod
    def from_dict(cls, values: dict) -> "AlgoConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown algorithm parameters: {sorted(unknown)}")
        return cls(**values)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    algorithm: str
    frontier: list[RecList]
    evaluations: int
    wall_time: float
    trace: list | None = None
    evaluated: dict = field(default_factory=dict, repr=False)

    def to_json(self, user=None, seed=None, item_ids=None, timing: bool = True) -> dict:
        def label(i):
            return i if item_ids is None else item_ids[i].item()

        return {
            "algorithm": self.algorithm,
            "user": user,
            "seed": seed,
            "frontier": [
                {"f1": m.objectives.f1, "f2": m.objectives.f2, "items": [label(i) for i in m.items]}
                for m in self.frontier
            ],
            "evaluations": self.evaluations,
            "wall_time_ms": round(self.wall_time * 1000.0, 3) if timing else None,
        }


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; identical seeds give identical runs on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def random_population(ctx: EvalContext, size: int, rng) -> list[RecList]:
    """``size`` uniform random top-s sublists, de-duplicated by item set."""
    return unique_lists(RecList(sample(rng, ctx.candidates, ctx.s)) for _ in range(size))


def _first_front(pop: list[RecList]) -> list[RecList]:
    if not pop:
        return []
    mask = nondominated_mask(objective_array(pop))
    front = [m for m, keep in zip(pop, mask) if keep]
    return sorted(front, key=lambda m: (m.objectives.f1, m.objectives.f2))


class _Run:
    def __init__(self, name: str, ctx: EvalContext, cfg: AlgoConfig, rng):
        self.name = name
        self.ctx = ctx
        self.cfg = cfg
        self.rng = rng
        self.ev = Evaluator(ctx)
        self.trace = [] if cfg.trace else None
        self.start = time.perf_counter()

    def evaluate_all(self, lists):
        for lst in lists:
            self.ev(lst)
        return lists

    def record(self, lists) -> None:
        if self.trace is None:
            return
        front = _first_front(lists)
        F = objective_array(front)
        self.trace.append({"size": len(front), "best_f1": float(F[:, 0].max()), "best_f2": float(F[:, 1].max())})

    def anneal_state(self) -> AnnealState:
        return AnnealState(self.cfg.tau0, self.cfg.alpha, self.cfg.inverse_schedule)

    def result(self, frontier: list[RecList]) -> RunResult:
        return RunResult(
            algorithm=self.name,
            frontier=sorted(frontier, key=lambda m: (m.objectives.f1, m.objectives.f2)),
            evaluations=self.ev.evaluations,
            wall_time=time.perf_counter() - self.start,
            trace=self.trace,
            evaluated=self.ev.log,
        )

    # NSGA-II variation: crossover pairs, then mutation drawn from the crossover offspring
    def nsga_offspring(self, pop: list[RecList], size: int) -> list[RecList]:
        rng = self.rng
        cp: list[RecList] = []
        for _ in range(round(size * self.cfg.pc / 2)):
            if len(pop) >= 2:
                a, b = sample(rng, range(len(pop)), 2)
            else:
                a = b = 0
            cp.extend(crossover(pop[a], pop[b], rng, ctx=self.ctx))
        mp = []
        if cp:
            for _ in range(round(size * self.cfg.pm)):
                mp.append(mutate(cp[randint(rng, len(cp))], self.ctx, self.cfg.pm, rng))
        return self.evaluate_all(cp + mp)

    # NNIA selection: D (crowding-sorted non-dominated set), active set A, clones C
    def nnia_select(self, pop: list[RecList]):
        F = objective_array(pop)
        mask = nondominated_mask(F)
        d_lists = [m for m, keep in zip(pop, mask) if keep]
        cd = crowding_distance(F[mask])
        order = np.argsort(-cd, kind="stable")[: self.cfg.nd]
        d_lists = [d_lists[i] for i in order]
        cd = cd[order]
        na = min(self.cfg.na, len(d_lists))
        active = d_lists[:na]
        clones = clone_proportional(active, cd[:na], self.cfg.nc)
        return d_lists, active, clones

    def nnia_offspring(self, active: list[RecList], clones: list[RecList]) -> list[RecList]:
        rng = self.rng
        ct: list[RecList] = []
        for clone in clones:
            partner = active[randint(rng, len(active))]
            ct.extend(crossover(clone, partner, rng, ctx=self.ctx))
        out = [mutate(child, self.ctx, self.cfg.pm_nnia, rng) for child in ct]
        return self.evaluate_all(out)

    def nlists(self, current: RecList, ref: ParetoArchive, state: AnnealState) -> ParetoArchive:
        arc = nlists(current, ref, state.tau, self.ev, self.ctx, self.rng)
        state.cool()
        return arc

    def reference(self, lists) -> ParetoArchive:
        return ParetoArchive.from_lists(lists, self.cfg.soft_limit, self.cfg.hard_limit)


def run_icf(ctx: EvalContext, s: int | None = None) -> RecList:
    """Accuracy-only baseline: the first ``s`` candidates in ICF order."""
    s = ctx.s if s is None else s
    lst = RecList(ctx.candidates[:s])
    if s >= 2:
        evaluate(lst, ctx)
    return lst


def run_nsga2(ctx: EvalContext, cfg: AlgoConfig, rng) -> RunResult:
    run = _Run("nsga2", ctx, cfg, rng)
    pop = run.evaluate_all(random_population(ctx, cfg.pop_size, rng))
    for _ in range(cfg.max_iter):
        children = run.nsga_offspring(pop, cfg.pop_size)
        pop = truncate(unique_lists(children + pop), cfg.pop_size)
        run.record(pop)
    return run.result(_first_front(pop))


def run_nnia(ctx: EvalContext, cfg: AlgoConfig, rng, max_iter: int | None = None) -> RunResult:
    run = _Run("nnia", ctx, cfg, rng)
    pop = run.evaluate_all(random_population(ctx, cfg.nd, rng))
    for _ in range(cfg.max_iter if max_iter is None else max_iter):
        d_lists, active, clones = run.nnia_select(pop)
        pop = unique_lists(run.nnia_offspring(active, clones) + d_lists)
        run.record(pop)
    return run.result(run.nnia_select(pop)[0])


def init_archive(ctx: EvalContext, rng, cfg: AlgoConfig | None = None) -> ParetoArchive:
    """Initial archive: the non-dominated set of a short NNIA run."""
    cfg = cfg or AlgoConfig()
    res = run_nnia(ctx, cfg, rng, max_iter=cfg.init_iter)
    return ParetoArchive.from_lists(res.frontier, cfg.soft_limit, cfg.hard_limit)


def _require_archive(init_arc: ParetoArchive | None) -> None:
    if init_arc is None or len(init_arc) == 0:
        raise ValueError("an initial non-empty archive is required")


def run_amosa(ctx: EvalContext, cfg: AlgoConfig, rng, init_arc: ParetoArchive) -> RunResult:
    _require_archive(init_arc)
    run = _Run("amosa", ctx, cfg, rng)
    arc = init_arc.copy()
    run.evaluate_all(arc.members)
    current = arc.members[randint(rng, len(arc))]
    state = run.anneal_state()
    for _ in range(cfg.max_iter):
        arc = run.nlists(current, arc, state)
        run.record(arc.members)
    if len(arc) > cfg.hard_limit:
        arc.thin()
    return run.result(arc.members)


def run_hanv1(ctx: EvalContext, cfg: AlgoConfig, rng) -> RunResult:
    run = _Run("hanv1", ctx, cfg, rng)
    size = cfg.hard_limit
    pop = run.evaluate_all(random_population(ctx, size, rng))
    state = run.anneal_state()
    for _ in range(cfg.max_iter):
        children = run.nsga_offspring(pop, size)
        pop = unique_lists(children + pop)
        front = [pop[i] for i in front_indices(objective_array(pop))[0]]
        current = front[randint(rng, len(front))]
        arc = run.nlists(current, run.reference(front), state)
        pop = truncate(unique_lists(pop + arc.members), size)
        run.record(pop)
    return run.result(_first_front(pop))


def run_hanv2(ctx: EvalContext, cfg: AlgoConfig, rng, init_arc: ParetoArchive) -> RunResult:
    _require_archive(init_arc)
    run = _Run("hanv2", ctx, cfg, rng)
    size = cfg.hard_limit
    pop = run.evaluate_all(random_population(ctx, size, rng))
    arc = init_arc.copy()
    run.evaluate_all(arc.members)
    current = arc.members[randint(rng, len(arc))]
    state = run.anneal_state()
    for _ in range(cfg.max_iter):
        arc = run.nlists(current, arc, state)
        children = run.nsga_offspring(pop, size)
        pop = truncate(unique_lists(children + pop + arc.members), size)
        run.record(pop)
    return run.result(_first_front(pop))


def run_haniv1(ctx: EvalContext, cfg: AlgoConfig, rng) -> RunResult:
    run = _Run("haniv1", ctx, cfg, rng)
    pop = run.evaluate_all(random_population(ctx, cfg.nd, rng))
    state = run.anneal_state()
    for _ in range(cfg.max_iter):
        d_lists, active, clones = run.nnia_select(pop)
        offspring = run.nnia_offspring(active, clones)
        current = active[randint(rng, len(active))]
        arc = run.nlists(current, run.reference(pop), state)
        pop = unique_lists(offspring + d_lists + arc.members)
        run.record(pop)
    return run.result(run.nnia_select(pop)[0])


def run_haniv2(ctx: EvalContext, cfg: AlgoConfig, rng, init_arc: ParetoArchive) -> RunResult:
    _require_archive(init_arc)
    run = _Run("haniv2", ctx, cfg, rng)
    pop = run.evaluate_all(random_population(ctx, cfg.nd, rng))
    arc = init_arc.copy()
    run.evaluate_all(arc.members)
    current = arc.members[randint(rng, len(arc))]
    state = run.anneal_state()
    for _ in range(cfg.max_iter):
        arc = run.nlists(current, arc, state)
        d_lists, active, clones = run.nnia_select(pop)
        pop = unique_lists(run.nnia_offspring(active, clones) + d_lists + arc.members)
        run.record(pop)
    return run.result(run.nnia_select(pop)[0])


_DRIVERS: dict[str, Callable] = {
    "nsga2": run_nsga2,
    "nnia": run_nnia,
    "hanv1": run_hanv1,
    "haniv1": run_haniv1,
    "amosa": run_amosa,
    "hanv2": run_hanv2,
    "haniv2": run_haniv2,
}


def run_algorithm(
    name: str, ctx: EvalContext, cfg: AlgoConfig, rng, init_arc: ParetoArchive | None = None
) -> RunResult:
    """Dispatch by algorithm name; ICF returns its single list as the frontier."""
    if name == "icf":
        start = time.perf_counter()
        lst = run_icf(ctx)
        return RunResult("icf", [lst], 1, time.perf_counter() - start)
    if name not in _DRIVERS:
        raise KeyError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    if name in NEEDS_ARCHIVE:
        if init_arc is None:
            init_arc = init_archive(ctx, rng, cfg)
        return _DRIVERS[name](ctx, cfg, rng, init_arc)
    return _DRIVERS[name](ctx, cfg, rng)
