"""Recommendation-quality metrics, frontier-quality metrics, TOPSIS ranking and final list selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .objectives import RecList
from .pareto import objective_array
from .ratings import RatingsMatrix, SimilarityMatrix

CRITERIA = ("SM", "MID", "DM", "SNS")
COST_CRITERIA = ("SM", "MID")
DEFAULT_WEIGHTS = {"SM": 0.33, "SNS": 0.33, "MID": 0.17, "DM": 0.17}


def precision(lst: RecList, test: RatingsMatrix, user: int, threshold: float = 3.0) -> float:
    """Share of list items the user rated at least ``threshold`` in the test data."""
    if not lst.items:
        raise ValueError("precision of an empty list")
    items, ratings = test.user_row(user)
    relevant = set(items[ratings >= threshold].tolist())
    return sum(1 for i in lst.items if i in relevant) / len(lst.items)


def intra_diversity(lst: RecList, sim: SimilarityMatrix) -> float:
    """Mean pairwise similarity inside the list (lower is more diverse)."""
    n = len(lst.items)
    if n < 2:
        raise ValueError("diversity undefined for lists shorter than 2")
    sub = sim.sub(lst.items, lst.items)
    return float((sub.sum() - np.trace(sub)) / (n * (n - 1)))


def novelty(lst: RecList, popularity: np.ndarray) -> float:
    """Mean number of training raters over the list items (lower is more novel)."""
    if not lst.items:
        raise ValueError("novelty of an empty list")
    return float(np.mean([popularity[i] for i in lst.items]))


@dataclass(frozen=True)
class QualityReport:
    precision: float
    diversity: float
    novelty: float


def quality_report(
    lst: RecList, test: RatingsMatrix, user: int, sim: SimilarityMatrix, popularity: np.ndarray, threshold: float = 3.0
) -> QualityReport:
    return QualityReport(precision(lst, test, user, threshold), intra_diversity(lst, sim), novelty(lst, popularity))


@dataclass(frozen=True)
class FrontierReport:
    """SM/MID/DM/SNS of one frontier; SM and SNS are NaN (undefined) for n < 2."""

    sm: float
    mid: float
    dm: float
    sns: float
    n: int
    flags: tuple = ()

    def as_row(self) -> dict:
        return {"SM": self.sm, "MID": self.mid, "DM": self.dm, "SNS": self.sns}


def frontier_metrics(frontier, normalized: bool = False) -> FrontierReport:
    """Spacing, mean ideal distance, diversification and spread of a frontier.

    Literal formulas: MID normalises by the frontier's own min/max per
    objective, while SM, DM and the SNS magnitudes use raw objective
    values. ``normalized=True`` min-max scales the objectives first.
    """
    F = objective_array(frontier)
    n = len(F)
    if n == 0:
        raise ValueError("frontier metrics of an empty frontier")
    flags = []
    lo, hi = F.min(axis=0), F.max(axis=0)
    span = hi - lo
    if normalized:
        safe = np.where(span > 0, span, 1.0)
        F = (F - lo) / safe
        lo, hi = F.min(axis=0), F.max(axis=0)
        span = hi - lo

    terms = np.zeros_like(F)
    for j in range(F.shape[1]):
        if span[j] > 0:
            terms[:, j] = ((F[:, j] - hi[j]) / span[j]) ** 2
        elif n > 1:
            flags.append(f"zero range in objective {j + 1}")
    mid = float(np.sqrt(terms.sum(axis=1)).mean())
    dm = float(np.sqrt((span**2).sum()))

    if n < 2:
        return FrontierReport(math.nan, mid, dm, math.nan, n, ("n<2: SM and SNS undefined",))
    ordered = F[np.lexsort((F[:, 1], F[:, 0]))]
    gaps = np.sqrt((np.diff(ordered, axis=0) ** 2).sum(axis=1))
    sm = float(gaps.sum() / (n - 1))
    c = np.sqrt((F**2).sum(axis=1))
    sns = float(np.sqrt(((mid - c) ** 2).sum() / (n - 1)))
    return FrontierReport(sm, mid, dm, sns, n, tuple(flags))


@dataclass
class DecisionMatrix:
    """Alternatives (rows) scored on SM, MID, DM, SNS (columns, in that order)."""

    rows: list[str]
    values: np.ndarray
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.rows), len(CRITERIA)):
            raise ValueError(f"decision matrix must be {len(self.rows)} x {len(CRITERIA)}")


class Ranked(NamedTuple):
    algorithm: str
    clo: float
    rank: int


def topsis_rank(dm: DecisionMatrix) -> list[Ranked]:
    """TOPSIS closeness with SM and MID as cost criteria, DM and SNS as benefits.

    Returns rows in input order; rank 1 is the highest closeness, ties
    going to the earlier row.
    """
    X = dm.values
    if len(X) < 2:
        raise ValueError("TOPSIS undefined for one alternative")
    norms = np.sqrt((X**2).sum(axis=0))
    if np.any(norms == 0):
        bad = [c for c, n in zip(CRITERIA, norms) if n == 0]
        raise ValueError(f"all-zero criterion column(s): {bad}")
    w = np.array([dm.weights[c] for c in CRITERIA])
    V = X / norms * w
    benefit = np.array([c not in COST_CRITERIA for c in CRITERIA])
    best = np.where(benefit, V.max(axis=0), V.min(axis=0))
    worst = np.where(benefit, V.min(axis=0), V.max(axis=0))
    d_plus = np.sqrt(((V - best) ** 2).sum(axis=1))
    d_minus = np.sqrt(((V - worst) ** 2).sum(axis=1))
    total = d_plus + d_minus
    clo = np.divide(d_minus, total, out=np.full_like(total, 0.5), where=total > 0)
    order = np.argsort(-clo, kind="stable")
    ranks = np.empty(len(X), dtype=int)
    ranks[order] = np.arange(1, len(X) + 1)
    return [Ranked(r, float(c), int(k)) for r, c, k in zip(dm.rows, clo, ranks)]


def select_final(frontier: Sequence[RecList]) -> RecList:
    """Member closest to the ideal point after per-objective min-max scaling.

    A zero-range objective maps every member to 0.5. Ties go to the member
    with the lower f1.
    """
    if not frontier:
        raise ValueError("cannot select from an empty frontier")
    members = sorted(frontier, key=lambda m: (m.objectives.f1, m.objectives.f2))
    F = objective_array(members)
    lo, span = F.min(axis=0), F.max(axis=0) - F.min(axis=0)
    scaled = np.where(span > 0, (F - lo) / np.where(span > 0, span, 1.0), 0.5)
    ideal = scaled.max(axis=0)
    d = np.sqrt(((scaled - ideal) ** 2).sum(axis=1))
    return members[int(np.argmin(d))]
