"""Pareto dominance (maximisation), non-dominated sorting, crowding distance and bounded archives."""

from __future__ import annotations

import enum
from typing import Iterable, Sequence

import numpy as np

from .objectives import ObjectiveVector, RecList


class Dominance(enum.Enum):
    FIRST = "first-dominates"
    SECOND = "second-dominates"
    NONDOMINATED = "non-dominated"
    EQUAL = "equal"


class ArchiveLimitError(AssertionError):
    pass


def dominates(a: Sequence[float], b: Sequence[float]) -> Dominance:
    ge = all(x >= y for x, y in zip(a, b))
    le = all(x <= y for x, y in zip(a, b))
    if ge and le:
        return Dominance.EQUAL
    if ge:
        return Dominance.FIRST
    if le:
        return Dominance.SECOND
    return Dominance.NONDOMINATED


def objective_array(pop: Iterable) -> np.ndarray:
    rows = [p.objectives if isinstance(p, RecList) else p for p in pop]
    if not rows:
        return np.zeros((0, 2))
    if any(r is None for r in rows):
        raise ValueError("population contains unevaluated lists")
    return np.asarray(rows, dtype=float)


def domination_matrix(F: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when row ``i`` dominates row ``j``."""
    ge = (F[:, None, :] >= F[None, :, :]).all(axis=2)
    gt = (F[:, None, :] > F[None, :, :]).any(axis=2)
    return ge & gt


def front_indices(F: np.ndarray) -> list[np.ndarray]:
    """Non-dominated fronts of the rows of ``F`` as ascending index arrays."""
    n = len(F)
    if n == 0:
        return []
    D = domination_matrix(F)
    counts = D.sum(axis=0)
    remaining = np.ones(n, dtype=bool)
    fronts = []
    while remaining.any():
        current = np.flatnonzero(remaining & (counts == 0))
        fronts.append(current)
        remaining[current] = False
        counts = counts - D[current].sum(axis=0)
    return fronts


def nondominated_sort(pop: Sequence) -> list[list]:
    """Partition lists (or objective vectors) into successive Pareto fronts."""
    F = objective_array(pop)
    return [[pop[i] for i in front] for front in front_indices(F)]


def nondominated_mask(F: np.ndarray) -> np.ndarray:
    if len(F) == 0:
        return np.zeros(0, dtype=bool)
    return ~domination_matrix(F).any(axis=0)


def crowding_distance(front) -> np.ndarray:
    """NSGA-II crowding distance; boundary members are infinite.

    An objective whose range over the front is zero contributes nothing.
    """
    F = objective_array(front) if not isinstance(front, np.ndarray) else front
    n = len(F)
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for m in range(F.shape[1]):
        order = np.argsort(F[:, m], kind="stable")
        col = F[order, m]
        span = col[-1] - col[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def rank_and_crowd(F: np.ndarray) -> np.ndarray:
    """Indices of ``F`` ordered by front rank, then crowding distance descending."""
    order = []
    for front in front_indices(F):
        cd = crowding_distance(F[front])
        order.extend(front[np.argsort(-cd, kind="stable")].tolist())
    return np.asarray(order, dtype=np.intp)


def truncate(pop: Sequence[RecList], size: int) -> list[RecList]:
    """Keep the best ``size`` lists by non-dominated rank and crowding distance."""
    order = rank_and_crowd(objective_array(pop))[:size]
    return [pop[i] for i in order]


def unique_lists(lists: Iterable[RecList]) -> list[RecList]:
    """Drop lists whose item set was already seen, preserving order."""
    seen = set()
    out = []
    for lst in lists:
        k = lst.key
        if k not in seen:
            seen.add(k)
            out.append(lst)
    return out


def ideal_point(frontier) -> ObjectiveVector:
    F = objective_array(frontier)
    if len(F) == 0:
        raise ValueError("ideal point of an empty frontier")
    return ObjectiveVector(*F.max(axis=0).tolist())


def _normalized(F: np.ndarray) -> np.ndarray:
    lo = F.min(axis=0)
    span = F.max(axis=0) - lo
    span[span == 0] = 1.0
    return (F - lo) / span


def _extremes(F: np.ndarray) -> list[int]:
    # max f1 (ties by larger f2), then max f2 (ties by larger f1)
    a = int(np.lexsort((F[:, 1], F[:, 0]))[-1])
    b = int(np.lexsort((F[:, 0], F[:, 1]))[-1])
    return [a] if a == b else [a, b]


def _single_linkage(X: np.ndarray, n_clusters: int) -> np.ndarray:
    """Cluster labels from single-linkage clustering cut at ``n_clusters``.

    Built from a minimum spanning tree (Prim) with its ``n_clusters - 1``
    heaviest edges removed.
    """
    n = len(X)
    if n_clusters >= n:
        return np.arange(n)
    dist = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    parent = np.zeros(n, dtype=np.intp)
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        edges.append((float(best[v]), int(parent[v]), v))
        in_tree[v] = True
        closer = dist[v] < best
        best = np.where(closer, dist[v], best)
        parent = np.where(closer, v, parent)
    # drop the heaviest edges; ties removed in order of insertion
    order = sorted(range(len(edges)), key=lambda e: (-edges[e][0], e))
    cut = set(order[: n_clusters - 1])
    root = list(range(n))

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    for e, (_, a, b) in enumerate(edges):
        if e not in cut:
            root[find(a)] = find(b)
    roots = [find(i) for i in range(n)]
    _, labels = np.unique(roots, return_inverse=True)
    return labels


def thin_indices(F: np.ndarray, size: int) -> np.ndarray:
    """Indices of ``size`` representative points of ``F``.

    Single-linkage clustering in min-max normalised objective space; each
    cluster keeps the member nearest its centroid, except that the max-f1
    and max-f2 points are always kept.
    """
    n = len(F)
    if n <= size:
        return np.arange(n)
    X = _normalized(F)
    extremes = _extremes(F)
    if size < len(extremes):
        return np.asarray(extremes[:size])
    labels = _single_linkage(X, size)
    ext_labels = [labels[e] for e in extremes]
    if len(set(ext_labels)) < len(ext_labels):
        # both extremes fell in one cluster: set them aside and cluster the rest
        rest = np.setdiff1d(np.arange(n), extremes)
        sub = thin_indices(F[rest], size - len(extremes))
        return np.sort(np.concatenate([extremes, rest[sub]]))
    keep = []
    for c in range(size):
        members = np.flatnonzero(labels == c)
        hit = [e for e in extremes if labels[e] == c]
        if hit:
            keep.append(hit[0])
            continue
        centroid = X[members].mean(axis=0)
        d = ((X[members] - centroid) ** 2).sum(axis=1)
        keep.append(int(members[np.argmin(d)]))
    return np.sort(np.asarray(keep))


class ParetoArchive:
    """Mutually non-dominated lists bounded by soft/hard size limits.

    Inserting past the soft limit immediately thins the archive to the hard
    limit, so its size never exceeds ``soft_limit`` between calls.
    """

    def __init__(self, soft_limit: int = 140, hard_limit: int = 100, members: Iterable[RecList] = ()):
        if hard_limit > soft_limit:
            raise ValueError("hard limit must not exceed soft limit")
        if hard_limit < 1:
            raise ValueError("hard limit must be positive")
        self.soft_limit = soft_limit
        self.hard_limit = hard_limit
        self.members: list[RecList] = []
        self._keys: set = set()
        self.thinnings = 0
        for m in members:
            self.insert(m)

    @classmethod
    def from_lists(cls, lists: Iterable[RecList], soft_limit: int, hard_limit: int) -> "ParetoArchive":
        """Archive holding the non-dominated, de-duplicated subset of ``lists``."""
        uniq = unique_lists(lists)
        arc = cls(soft_limit, hard_limit)
        if not uniq:
            return arc
        mask = nondominated_mask(objective_array(uniq))
        arc.members = [m for m, keep in zip(uniq, mask) if keep]
        arc._keys = {m.key for m in arc.members}
        if len(arc.members) > soft_limit:
            arc.thin()
        arc.check()
        return arc

    def copy(self) -> "ParetoArchive":
        arc = ParetoArchive(self.soft_limit, self.hard_limit)
        arc.members = list(self.members)
        arc._keys = set(self._keys)
        arc.thinnings = self.thinnings
        return arc

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, lst: RecList) -> bool:
        return lst.key in self._keys

    def objectives(self) -> np.ndarray:
        return objective_array(self.members)

    def dominators(self, vec) -> list[int]:
        """Indices of members that dominate ``vec``."""
        if not self.members:
            return []
        F = self.objectives()
        v = np.asarray(vec, dtype=float)
        hit = (F >= v).all(axis=1) & (F > v).any(axis=1)
        return np.flatnonzero(hit).tolist()

    def dominated_by(self, vec) -> list[int]:
        """Indices of members dominated by ``vec``."""
        if not self.members:
            return []
        F = self.objectives()
        v = np.asarray(vec, dtype=float)
        hit = (v >= F).all(axis=1) & (v > F).any(axis=1)
        return np.flatnonzero(hit).tolist()

    def remove(self, lst: RecList) -> bool:
        key = lst.key
        if key not in self._keys:
            return False
        self.members = [m for m in self.members if m.key != key]
        self._keys.discard(key)
        return True

    def insert(self, lst: RecList) -> bool:
        """Add ``lst`` unless it is a duplicate or dominated.

        Members dominated by ``lst`` are dropped; exceeding the soft limit
        triggers thinning to the hard limit. Returns whether ``lst`` was added.
        """
        if lst.objectives is None:
            raise ValueError("cannot archive an unevaluated list")
        if lst.key in self._keys or self.dominators(lst.objectives):
            return False
        beaten = set(self.dominated_by(lst.objectives))
        if beaten:
            for i in beaten:
                self._keys.discard(self.members[i].key)
            self.members = [m for i, m in enumerate(self.members) if i not in beaten]
        self.members.append(lst)
        self._keys.add(lst.key)
        if len(self.members) > self.soft_limit:
            self.thin()
        self.check()
        return True

    def thin(self) -> None:
        keep = thin_indices(self.objectives(), self.hard_limit)
        self.members = [self.members[i] for i in keep]
        self._keys = {m.key for m in self.members}
        self.thinnings += 1
        if len(self.members) > self.hard_limit:
            raise ArchiveLimitError(f"archive holds {len(self.members)} > HL={self.hard_limit} after thinning")

    def check(self) -> None:
        if len(self.members) > self.soft_limit:
            raise ArchiveLimitError(f"archive holds {len(self.members)} > SL={self.soft_limit}")
        if len(self._keys) != len(self.members):
            raise ArchiveLimitError("duplicate item sets in archive")


def thin_archive(arc: ParetoArchive) -> ParetoArchive:
    """A copy of ``arc`` thinned to its hard limit (no-op at or below it)."""
    out = arc.copy()
    if len(out) > out.hard_limit:
        out.thin()
    return out
