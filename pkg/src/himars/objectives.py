"""Accuracy/diversity objectives over top-s sublists of a user's candidate list."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .ratings import RatingsMatrix, SimilarityMatrix, top_k_candidates


class ObjectiveVector(NamedTuple):
    f1: float
    f2: float


class DiversityUndefined(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EvalContext:
    """Frozen per-user state shared by every optimizer run for that user.

    ``cand_sim`` is the cosine similarity among candidates (k x k) and
    ``accuracy[c]`` the summed similarity of candidate ``c`` to every item
    the user rated, so f1 of a list is the mean of its ``accuracy`` entries.
    """

    user: int
    candidates: tuple[int, ...]
    rated: frozenset
    s: int
    cand_sim: np.ndarray
    accuracy: np.ndarray
    index: dict = field(repr=False)

    def __post_init__(self):
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidates must be distinct")
        if self.rated & set(self.candidates):
            raise ValueError("candidates overlap rated items")
        if not 1 <= self.s <= len(self.candidates):
            raise ValueError(f"list size {self.s} incompatible with {len(self.candidates)} candidates")
        self.cand_sim.setflags(write=False)
        self.accuracy.setflags(write=False)

    @property
    def k(self) -> int:
        return len(self.candidates)

    @classmethod
    def from_arrays(
        cls,
        candidates: Sequence[int],
        rated: Iterable[int],
        cand_sim: np.ndarray,
        cross_sim: np.ndarray,
        s: int,
        user: int = -1,
    ) -> "EvalContext":
        """Context from explicit similarity tables.

        ``cross_sim[a, b]`` is the similarity between candidate ``a`` and
        the ``b``-th rated item.
        """
        cand_sim = np.array(cand_sim, dtype=float)
        cross_sim = np.asarray(cross_sim, dtype=float).reshape(len(candidates), -1)
        candidates = tuple(int(c) for c in candidates)
        return cls(
            user=user,
            candidates=candidates,
            rated=frozenset(int(r) for r in rated),
            s=s,
            cand_sim=cand_sim,
            accuracy=cross_sim.sum(axis=1),
            index={c: n for n, c in enumerate(candidates)},
        )

    def positions(self, items: Sequence[int]) -> np.ndarray:
        return np.fromiter((self.index[i] for i in items), dtype=np.intp, count=len(items))

    def make_list(self, items: Sequence[int]) -> "RecList":
        lst = RecList(tuple(items))
        self.validate(lst)
        return lst

    def validate(self, lst: "RecList") -> None:
        if len(lst.items) != self.s:
            raise ValueError(f"list has {len(lst.items)} items, expected {self.s}")
        if len(set(lst.items)) != len(lst.items):
            raise ValueError(f"duplicate items in {lst.items}")
        missing = [i for i in lst.items if i not in self.index]
        if missing:
            raise ValueError(f"items {missing} are not candidates")


def build_context(
    user: int,
    k: int,
    s: int,
    sim: SimilarityMatrix,
    train: RatingsMatrix,
    *,
    predictor_sim: SimilarityMatrix | None = None,
    neighborhood: int = 20,
) -> EvalContext:
    """Build the evaluation context of one user.

    Candidates come from ICF with ``predictor_sim`` (defaults to ``sim``);
    objective similarities are read from ``sim``.
    """
    candidates = top_k_candidates(user, k, predictor_sim or sim, train, neighborhood)
    rated = train.user_row(user)[0]
    cand_sim = sim.sub(candidates, candidates)
    cross = sim.sub(candidates, rated) if len(rated) else np.zeros((len(candidates), 0))
    return EvalContext.from_arrays(candidates, rated, cand_sim, cross, min(s, len(candidates)), user=user)


class RecList:
    """An ordered top-s list of distinct candidate items with cached objectives."""

    __slots__ = ("items", "objectives")

    def __init__(self, items: Sequence[int], objectives: ObjectiveVector | None = None):
        self.items = tuple(items)
        self.objectives = objectives

    @property
    def key(self) -> frozenset:
        return frozenset(self.items)

    def replace(self, position: int, item: int) -> "RecList":
        items = list(self.items)
        items[position] = item
        return RecList(items)

    def copy(self) -> "RecList":
        return RecList(self.items, self.objectives)

    def __len__(self):
        return len(self.items)

    def __repr__(self):
        return f"RecList({list(self.items)}, {self.objectives})"


def f1_accuracy(lst: RecList, ctx: EvalContext) -> float:
    if not ctx.rated:
        return 0.0
    return float(ctx.accuracy[ctx.positions(lst.items)].sum() / len(lst.items))


def f2_diversity(lst: RecList, ctx: EvalContext) -> float:
    n = len(lst.items)
    if n < 2:
        raise DiversityUndefined("diversity undefined for lists shorter than 2")
    pos = ctx.positions(lst.items)
    sub = ctx.cand_sim[np.ix_(pos, pos)]
    off_diag = sub.sum() - np.trace(sub)
    return float((n * (n - 1) - off_diag) / (n * (n - 1)))


def evaluate(lst: RecList, ctx: EvalContext) -> ObjectiveVector:
    """Objective vector of ``lst``, cached on the list."""
    if lst.objectives is None:
        lst.objectives = ObjectiveVector(f1_accuracy(lst, ctx), f2_diversity(lst, ctx))
    return lst.objectives


class Evaluator:
    """Run-scoped objective cache keyed by item set.

    ``evaluations`` counts distinct lists actually computed, the fair budget
    unit across algorithms; ``log`` maps every evaluated item set to its
    objective vector.
    """

    def __init__(self, ctx: EvalContext):
        self.ctx = ctx
        self.log: dict[frozenset, ObjectiveVector] = {}
        self.evaluations = 0
        self.calls = 0

    def __call__(self, lst: RecList) -> ObjectiveVector:
        self.calls += 1
        key = lst.key
        if lst.objectives is not None:
            self.log.setdefault(key, lst.objectives)
            return lst.objectives
        vec = self.log.get(key)
        if vec is None:
            vec = ObjectiveVector(f1_accuracy(lst, self.ctx), f2_diversity(lst, self.ctx))
            self.log[key] = vec
            self.evaluations += 1
        lst.objectives = vec
        return vec
