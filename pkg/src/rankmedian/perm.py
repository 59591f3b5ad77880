"""Permutations in rank-vector form and the Kendall tau distance.

A permutation ``sigma`` over items ``1..n`` is stored as its rank vector:
``ranks[i - 1]`` is the rank of item ``i`` (rank 1 = most preferred).
Orderings such as ``"2>3>1"`` (best item first) are accepted at the I/O
boundary and converted.

Array helpers at the bottom work on ``(N, n)`` integer rank matrices and are
what the rest of the package uses for the heavy lifting.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidInput, OracleScaleExceeded

#: Largest n for which exhaustive enumeration of all n! permutations is allowed.
ORACLE_CAP = 8


@dataclass(frozen=True)
class Permutation:
    """A full ranking of ``n >= 2`` items in rank-vector form."""

    ranks: tuple[int, ...]

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        object.__setattr__(self, "ranks", ranks)
        n = len(ranks)
        if n < 2:
            raise InvalidInput(f"a ranking needs at least 2 items, got {n}")
        if sorted(ranks) != list(range(1, n + 1)):
            raise InvalidInput(f"ranks {ranks} are not a bijection of 1..{n}")

    @property
    def n(self) -> int:
        return len(self.ranks)

    def __call__(self, item: int) -> int:
        """Rank of ``item`` (1-based)."""
        return self.ranks[item - 1]

    def __str__(self) -> str:
        return ",".join(str(r) for r in self.ranks)

    def ordering(self) -> tuple[int, ...]:
        """Items sorted from best to worst."""
        order = [0] * self.n
        for item, r in enumerate(self.ranks, start=1):
            order[r - 1] = item
        return tuple(order)

    def ordering_str(self) -> str:
        return ">".join(str(i) for i in self.ordering())

    def reverse(self) -> "Permutation":
        return Permutation(tuple(self.n + 1 - r for r in self.ranks))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ranks, dtype=np.int64)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def from_ordering(cls, ordering: Sequence[int]) -> "Permutation":
        n = len(ordering)
        if sorted(int(i) for i in ordering) != list(range(1, n + 1)):
            raise InvalidInput(f"ordering {tuple(ordering)} is not a bijection of 1..{n}")
        ranks = [0] * n
        for pos, item in enumerate(ordering, start=1):
            ranks[int(item) - 1] = pos
        return cls(tuple(ranks))

    @classmethod
    def parse(cls, text: str) -> "Permutation":
        """Parse ``"1,3,2"`` (rank vector) or ``"1>3>2"`` (ordering)."""
        text = text.strip().strip('"')
        try:
            if ">" in text:
                return cls.from_ordering([int(t) for t in text.split(">")])
            return cls(tuple(int(t) for t in text.split(",")))
        except ValueError as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise InvalidInput(f"cannot parse ranking {text!r}") from exc


@dataclass(frozen=True, order=True)
class ItemPair:
    """Items ``i < j`` (1-based)."""

    i: int
    j: int

    def __post_init__(self):
        if not 1 <= self.i < self.j:
            raise InvalidInput(f"need 1 <= i < j, got ({self.i}, {self.j})")


def item_pairs(n: int) -> list[ItemPair]:
    """All pairs ``i < j`` in lexicographic order; the canonical pair indexing."""
    return [ItemPair(i, j) for i, j in itertools.combinations(range(1, n + 1), 2)]


def _check_same_n(a: Permutation, b: Permutation) -> None:
    if a.n != b.n:
        raise DimensionMismatch(f"permutations over {a.n} and {b.n} items")


def concordant(a: Permutation, pair: ItemPair) -> bool:
    """True iff ``a`` ranks ``pair.i`` ahead of ``pair.j``."""
    if pair.j > a.n:
        raise InvalidInput(f"pair {pair} out of range for n={a.n}")
    return a(pair.i) < a(pair.j)


def kendall_tau(a: Permutation, b: Permutation) -> int:
    """Number of item pairs ordered oppositely by ``a`` and ``b``."""
    _check_same_n(a, b)
    ra, rb = a.ranks, b.ranks
    n = a.n
    return sum(
        1
        for i in range(n)
        for j in range(i + 1, n)
        if (ra[i] - ra[j]) * (rb[i] - rb[j]) < 0
    )


def all_permutations(n: int) -> list[Permutation]:
    """Every permutation of ``n`` items, in lexicographic rank-vector order."""
    return [Permutation(tuple(r)) for r in all_rank_vectors(n)]


# --- array helpers -------------------------------------------------------------


@lru_cache(maxsize=None)
def pair_index_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based index arrays ``(I, J)`` of all pairs ``i < j`` in canonical order."""
    i, j = np.triu_indices(n, k=1)
    i.flags.writeable = False
    j.flags.writeable = False
    return i, j


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def concordance(ranks: np.ndarray) -> np.ndarray:
    """Pair indicators ``1{r(i) < r(j)}`` for an ``(N, n)`` rank matrix.

    Returns an ``(N, n(n-1)/2)`` uint8 array in canonical pair order. A 1-D
    rank vector gives a 1-D result.
    """
    ranks = np.asarray(ranks)
    i, j = pair_index_arrays(ranks.shape[-1])
    return (ranks[..., i] < ranks[..., j]).astype(np.uint8)


def kendall_tau_many(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Kendall distances between broadcastable rank arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatch(f"rank arrays over {a.shape[-1]} and {b.shape[-1]} items")
    ca = concordance(a).astype(np.int16)
    cb = concordance(b).astype(np.int16)
    return np.abs(ca - cb).sum(axis=-1)


@lru_cache(maxsize=None)
def all_rank_vectors(n: int) -> np.ndarray:
    """``(n!, n)`` array of all rank vectors, lexicographic order (read-only)."""
    if n < 2:
        raise InvalidInput(f"a ranking needs at least 2 items, got {n}")
    if n > ORACLE_CAP:
        raise OracleScaleExceeded(
            f"oracle scale exceeded: n={n} > {ORACLE_CAP} (n! enumeration refused)"
        )
    arr = np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.int64)
    arr.flags.writeable = False
    return arr


@lru_cache(maxsize=None)
def all_concordance(n: int) -> np.ndarray:
    """Pair indicators of :func:`all_rank_vectors` as float64 (read-only)."""
    c = concordance(all_rank_vectors(n)).astype(np.float64)
    c.flags.writeable = False
    return c


def as_rank_matrix(rankings: Iterable[Permutation | Sequence[int]] | np.ndarray) -> np.ndarray:
    """Stack permutations (or raw rank vectors) into a validated ``(N, n)`` array."""
    if isinstance(rankings, np.ndarray):
        arr = np.asarray(rankings, dtype=np.int64)
    else:
        rows = [r.ranks if isinstance(r, Permutation) else tuple(r) for r in rankings]
        if not rows:
            return np.zeros((0, 0), dtype=np.int64)
        lengths = {len(r) for r in rows}
        if len(lengths) != 1:
            raise DimensionMismatch(f"rankings over differing item counts {sorted(lengths)}")
        arr = np.array(rows, dtype=np.int64)
    if arr.ndim != 2:
        raise InvalidInput("expected a 2-D array of rank vectors")
    if arr.size:
        n = arr.shape[1]
        if n < 2:
            raise InvalidInput(f"a ranking needs at least 2 items, got {n}")
        if not np.array_equal(np.sort(arr, axis=1), np.broadcast_to(np.arange(1, n + 1), arr.shape)):
            raise InvalidInput("some rows are not permutations of 1..n")
    return arr
