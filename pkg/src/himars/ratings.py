"""Rating ingestion, train/test splitting, item similarity and ICF candidate generation."""

from __future__ import annotations

import io
import math
import os
import warnings
from dataclasses import dataclass
from typing import BinaryIO, NamedTuple

import numpy as np
import scipy.sparse as sp

SEPARATORS = ("::", "\t", ",")
SIMILARITY_MODES = ("cosine", "adjusted-cosine")


class RatingsFormatError(ValueError):
    """Raised for unreadable or malformed rating input."""


class ColdUserError(ValueError):
    pass


@dataclass(frozen=True)
class RatingsMatrix:
    """Sparse user x item rating store over dense indices.

    ``user_ids[u]`` and ``item_ids[i]`` give the raw identifiers of dense
    user ``u`` and item ``i``. Train and test halves of a split share the
    same index space.
    """

    matrix: sp.csr_matrix
    user_ids: np.ndarray
    item_ids: np.ndarray

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_ratings(self) -> int:
        return self.matrix.nnz

    def user_row(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        """Rated item indices (ascending) and their ratings for one user."""
        m = self.matrix
        lo, hi = m.indptr[user], m.indptr[user + 1]
        return m.indices[lo:hi], m.data[lo:hi]

    def rating(self, user: int, item: int) -> float:
        return float(self.matrix[user, item])

    def triples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def with_triples(self, users, items, ratings) -> "RatingsMatrix":
        """A matrix over the same index space holding only the given triples."""
        m = sp.csr_matrix(
            (np.asarray(ratings, dtype=float), (np.asarray(users), np.asarray(items))),
            shape=self.matrix.shape,
        )
        m.sort_indices()
        return RatingsMatrix(m, self.user_ids, self.item_ids)

    def user_index(self, raw_id) -> int:
        return _lookup(self.user_ids, raw_id, "user")

    def item_index(self, raw_id) -> int:
        return _lookup(self.item_ids, raw_id, "item")


def _lookup(ids: np.ndarray, raw_id, kind: str) -> int:
    if ids.dtype.kind in "iu":
        try:
            raw_id = int(raw_id)
        except (TypeError, ValueError):
            raise KeyError(f"unknown {kind} id {raw_id!r}") from None
    else:
        raw_id = str(raw_id)
    pos = int(np.searchsorted(ids, raw_id))
    if pos >= len(ids) or ids[pos] != raw_id:
        raise KeyError(f"unknown {kind} id {raw_id!r}")
    return pos


def _detect_separator(line: str) -> str:
    for sep in SEPARATORS:
        if sep in line:
            return sep
    raise RatingsFormatError(f"cannot detect separator in {line!r}")


def _dense_ids(raw: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Map raw id strings to dense indices ordered by raw id."""
    try:
        values = np.array([int(r) for r in raw], dtype=np.int64)
    except ValueError:
        values = np.array(raw, dtype=object).astype(str)
    uniq, inverse = np.unique(values, return_inverse=True)
    return uniq, inverse


def load_ratings(
    source: str | os.PathLike | BinaryIO | io.TextIOBase,
    sep: str | None = None,
    skip_header: bool = False,
) -> RatingsMatrix:
    """Read ``user<sep>item<sep>rating[<sep>timestamp]`` records.

    The separator is auto-detected among ``::``, tab and ``,`` unless given.
    Duplicate (user, item) pairs keep the last rating and raise a single
    warning with the duplicate count.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    text = raw.decode("utf-8", errors="replace") if isinstance(raw, bytes) else raw

    users: list[str] = []
    items: list[str] = []
    ratings: list[float] = []
    lines = text.splitlines()
    for lineno, line in enumerate(lines, start=1):
        if skip_header and lineno == 1:
            continue
        line = line.strip()
        if not line:
            continue
        if sep is None:
            sep = _detect_separator(line)
        parts = [p.strip() for p in line.split(sep)]
        if len(parts) not in (3, 4) or not parts[0] or not parts[1]:
            raise RatingsFormatError(f"line {lineno}: expected 3 or 4 fields, got {line!r}")
        try:
            value = float(parts[2])
        except ValueError:
            raise RatingsFormatError(f"line {lineno}: rating {parts[2]!r} is not a number") from None
        if not math.isfinite(value) or value <= 0:
            raise RatingsFormatError(f"line {lineno}: rating must be finite and positive, got {value}")
        users.append(parts[0])
        items.append(parts[1])
        ratings.append(value)

    if not ratings:
        raise RatingsFormatError("no ratings in input")

    user_ids, u_idx = _dense_ids(users)
    item_ids, i_idx = _dense_ids(items)

    # keep the last occurrence of each (user, item) pair
    keys = u_idx.astype(np.int64) * len(item_ids) + i_idx
    rev_keys = keys[::-1]
    _, first_rev = np.unique(rev_keys, return_index=True)
    keep = np.sort(len(keys) - 1 - first_rev)
    n_dup = len(keys) - len(keep)
    if n_dup:
        warnings.warn(f"{n_dup} duplicate (user, item) ratings; kept the last of each", stacklevel=2)

    m = sp.csr_matrix(
        (np.asarray(ratings)[keep], (u_idx[keep], i_idx[keep])),
        shape=(len(user_ids), len(item_ids)),
    )
    m.sort_indices()
    return RatingsMatrix(m, user_ids, item_ids)


@dataclass(frozen=True)
class SplitResult:
    train: RatingsMatrix
    test: RatingsMatrix
    seed: int


def split_train_test(m: RatingsMatrix, test_fraction: float, seed: int) -> SplitResult:
    """Uniform random partition of the rating triples.

    Exactly ``round(n * test_fraction)`` ratings go to the test half; which
    ones is decided by a PCG64 permutation seeded with ``seed``.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    users, items, ratings = m.triples()
    n = len(ratings)
    n_test = int(round(n * test_fraction))
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    test_mask = np.zeros(n, dtype=bool)
    test_mask[perm[:n_test]] = True
    train = m.with_triples(users[~test_mask], items[~test_mask], ratings[~test_mask])
    test = m.with_triples(users[test_mask], items[test_mask], ratings[test_mask])
    return SplitResult(train, test, seed)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense symmetric item x item similarity.

    When built over an item subset, ``items`` lists the covered item
    indices and lookups go through ``position``.
    """

    values: np.ndarray
    mode: str
    items: np.ndarray | None = None

    def position(self, item_idx):
        if self.items is None:
            return item_idx
        return np.searchsorted(self.items, item_idx)

    def sub(self, rows, cols) -> np.ndarray:
        r = self.position(np.asarray(rows))
        c = self.position(np.asarray(cols))
        return self.values[np.ix_(r, c)]

    def __call__(self, i: int, j: int) -> float:
        return float(self.values[self.position(i), self.position(j)])

    def to_csv(self, fh, item_ids: np.ndarray | None = None) -> None:
        """Debug dump as ``item_i,item_j,sim`` rows (upper triangle incl. diagonal)."""
        idx = self.items if self.items is not None else np.arange(self.values.shape[0])
        labels = item_ids[idx] if item_ids is not None else idx
        fh.write("item_i,item_j,sim\n")
        n = len(idx)
        for a in range(n):
            for b in range(a, n):
                fh.write(f"{labels[a]},{labels[b]},{float(self.values[a, b])!r}\n")


def item_similarity(
    train: RatingsMatrix, mode: str = "cosine", items: np.ndarray | None = None
) -> SimilarityMatrix:
    """Item-item similarity from training ratings.

    ``cosine`` uses raw item rating vectors. ``adjusted-cosine`` subtracts
    each user's mean rating and sums numerator and norms over co-rating
    users only. Degenerate pairs (zero norm, no co-raters) get 0.
    ``items`` restricts the computation to a subset (memory-constrained
    mode).
    """
    if mode not in SIMILARITY_MODES:
        raise ValueError(f"unknown similarity mode {mode!r}")
    if train.n_ratings == 0:
        raise ValueError("empty training matrix")

    m = train.matrix.astype(float)
    if items is not None:
        items = np.unique(np.asarray(items, dtype=np.int64))
        m = m[:, items]
    m = m.tocsc()

    if mode == "cosine":
        num = (m.T @ m).toarray()
        norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=0)).ravel())
        den = np.outer(norms, norms)
    else:
        full = train.matrix
        counts = np.diff(full.indptr)
        sums = np.asarray(full.sum(axis=1)).ravel()
        means = np.divide(sums, counts, out=np.zeros_like(sums, dtype=float), where=counts > 0)
        coo = m.tocoo()
        centered = sp.csc_matrix((coo.data - means[coo.row], (coo.row, coo.col)), shape=m.shape)
        indicator = sp.csc_matrix((np.ones_like(coo.data), (coo.row, coo.col)), shape=m.shape)
        num = (centered.T @ centered).toarray()
        # sq[i, j] = sum over users rating both i and j of centered_ui^2
        sq = (centered.multiply(centered).T @ indicator).toarray()
        den = np.sqrt(sq * sq.T)

    values = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    np.clip(values, -1.0, 1.0, out=values)
    values = (values + values.T) / 2.0
    if mode == "cosine":
        diag_ok = np.asarray(m.getnnz(axis=0)) > 0
        values[np.diag_indices_from(values)] = np.where(diag_ok, 1.0, 0.0)
    else:
        self_den = np.diag(den)
        values[np.diag_indices_from(values)] = np.where(self_den > 0, 1.0, 0.0)
    return SimilarityMatrix(values, mode, items)


class Prediction(NamedTuple):
    value: float
    no_signal: bool


def predict_rating(
    user: int, item: int, sim: SimilarityMatrix, train: RatingsMatrix, neighborhood: int = 20
) -> Prediction:
    """Weighted-sum prediction from the ``neighborhood`` most similar rated items."""
    if neighborhood < 1:
        raise ValueError("neighborhood must be >= 1")
    rated, ratings = train.user_row(user)
    if item in set(rated.tolist()):
        raise ValueError(f"item {item} already rated by user {user}")
    if len(rated) == 0:
        return Prediction(0.0, True)
    s = sim.sub([item], rated)[0]
    # stable sort on -s keeps ascending item index among ties
    order = np.argsort(-s, kind="stable")[:neighborhood]
    den = np.abs(s[order]).sum()
    if den == 0:
        return Prediction(0.0, True)
    return Prediction(float((s[order] * ratings[order]).sum() / den), False)


def predict_all(user: int, sim: SimilarityMatrix, train: RatingsMatrix, neighborhood: int = 20):
    """Predictions for every item the user has not rated.

    Returns (unrated item indices, predictions, no-signal mask).
    """
    rated, ratings = train.user_row(user)
    all_items = np.arange(train.n_items) if sim.items is None else sim.items
    unrated = np.setdiff1d(all_items, rated, assume_unique=True)
    if len(rated) == 0:
        raise ColdUserError(f"user {user} has no training ratings")
    s = sim.sub(unrated, rated)
    n = min(neighborhood, len(rated))
    order = np.argsort(-s, axis=1, kind="stable")[:, :n]
    top = np.take_along_axis(s, order, axis=1)
    den = np.abs(top).sum(axis=1)
    num = (top * ratings[order]).sum(axis=1)
    no_signal = den == 0
    pred = np.divide(num, den, out=np.zeros_like(num), where=~no_signal)
    return unrated, pred, no_signal


def top_k_candidates(
    user: int, k: int, sim: SimilarityMatrix, train: RatingsMatrix, neighborhood: int = 20
) -> list[int]:
    """The ``k`` unrated items with the highest predicted rating.

    Ties are broken by ascending item index.
    """
    if len(train.user_row(user)[0]) == 0:
        raise ColdUserError(f"cold user {user}: no training ratings")
    unrated, pred, _ = predict_all(user, sim, train, neighborhood)
    order = np.lexsort((unrated, -pred))
    return [int(i) for i in unrated[order][:k]]


def item_popularity(train: RatingsMatrix) -> np.ndarray:
    """Number of distinct training users who rated each item."""
    return np.diff(train.matrix.tocsc().indptr).astype(np.int64)
