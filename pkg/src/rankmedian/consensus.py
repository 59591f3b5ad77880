"""Empirical ranking distributions and Kemeny consensus.

Everything here is driven by the pairwise probabilities
``p[i, j] = P{sigma(i) < sigma(j)}`` for ``i < j``. The expected Kendall
distance of any candidate is linear in them, and when their majority relation
is strictly transitive the Copeland ranking reads the median straight off it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidInput, NotTransitiveError, OracleScaleExceeded
from .perm import (
    ORACLE_CAP,
    ItemPair,
    Permutation,
    all_concordance,
    all_rank_vectors,
    as_rank_matrix,
    concordance,
    kendall_tau_many,
    n_pairs,
    pair_index_arrays,
)

#: |p - 1/2| at or below this counts as an exact tie.
TIE_TOL = 1e-12
WEIGHT_TOL = 1e-9

METHODS = ("exact", "copeland", "borda")


@dataclass(frozen=True, eq=False)
class RankingSample:
    """Weighted multiset of rankings over the same ``n`` items.

    ``weights`` is ``None`` for the uniform empirical measure.
    """

    ranks: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        ranks = as_rank_matrix(self.ranks)
        object.__setattr__(self, "ranks", ranks)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (ranks.shape[0],):
                raise DimensionMismatch("one weight per ranking is required")
            if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
                raise InvalidInput("weights must be nonnegative and sum to 1")
            object.__setattr__(self, "weights", w)

    @classmethod
    def of(cls, rankings: Iterable[Permutation | Sequence[int]], weights=None) -> "RankingSample":
        return cls(as_rank_matrix(list(rankings)), weights)

    @property
    def size(self) -> int:
        return self.ranks.shape[0]

    @property
    def n(self) -> int:
        return self.ranks.shape[1]

    def __len__(self) -> int:
        return self.size

    def permutations(self) -> list[Permutation]:
        return [Permutation(tuple(r)) for r in self.ranks]

    def mean_ranks(self) -> np.ndarray:
        if self.weights is None:
            return self.ranks.sum(axis=0) / self.size
        return self.weights @ self.ranks


@dataclass(frozen=True, eq=False)
class PairwiseMatrix:
    """Probabilities ``p[i,j]`` for all pairs ``i < j`` in canonical order."""

    n: int
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).copy()
        if self.n < 2:
            raise InvalidInput("a pairwise matrix needs n >= 2")
        if p.shape != (n_pairs(self.n),):
            raise DimensionMismatch(f"expected {n_pairs(self.n)} pair probabilities, got {p.shape}")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise InvalidInput("pair probabilities must lie in [0, 1]")
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PairwiseMatrix):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.p, other.p)

    __hash__ = None

    @classmethod
    def from_pairs(cls, n: int, values: Mapping[tuple[int, int], float]) -> "PairwiseMatrix":
        """Build from ``{(i, j): p_ij}`` with 1-based ``i < j``; every pair is required."""
        I, J = pair_index_arrays(n)
        try:
            p = [values[(int(i) + 1, int(j) + 1)] for i, j in zip(I, J)]
        except KeyError as exc:
            raise InvalidInput(f"missing pair {exc.args[0]}") from None
        return cls(n, np.array(p, dtype=np.float64))

    @classmethod
    def constant(cls, n: int, value: float) -> "PairwiseMatrix":
        return cls(n, np.full(n_pairs(n), value))

    def __getitem__(self, pair: ItemPair | tuple[int, int]) -> float:
        """``p[i, j]`` for any ordered pair of distinct items, using ``p[j, i] = 1 - p[i, j]``."""
        i, j = (pair.i, pair.j) if isinstance(pair, ItemPair) else pair
        if i == j or not (1 <= i <= self.n and 1 <= j <= self.n):
            raise InvalidInput(f"bad item pair ({i}, {j}) for n={self.n}")
        if i < j:
            return float(self.p[_flat_index(self.n, i, j)])
        return 1.0 - float(self.p[_flat_index(self.n, j, i)])

    def square(self) -> np.ndarray:
        """Full ``n x n`` matrix with ``P[i, j] = p_ij`` and ``1/2`` on the diagonal."""
        I, J = pair_index_arrays(self.n)
        out = np.full((self.n, self.n), 0.5)
        out[I, J] = self.p
        out[J, I] = 1.0 - self.p
        return out

    def noise_margin(self) -> float:
        """``h = min_{i<j} |p_ij - 1/2|``."""
        return float(np.min(np.abs(self.p - 0.5)))

    def to_json(self) -> dict:
        I, J = pair_index_arrays(self.n)
        return {
            "n": self.n,
            "p": [[int(i) + 1, int(j) + 1, float(v)] for i, j, v in zip(I, J, self.p)],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PairwiseMatrix":
        n = int(obj["n"])
        return cls.from_pairs(n, {(int(i), int(j)): float(v) for i, j, v in obj["p"]})

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _flat_index(n: int, i: int, j: int) -> int:
    # 1-based i < j -> position in triu order
    i0, j0 = i - 1, j - 1
    return i0 * n - i0 * (i0 + 1) // 2 + (j0 - i0 - 1)


@dataclass(frozen=True)
class KemenyResult:
    median: Permutation
    cost: float
    method: str
    sst: bool


# --- pairwise probabilities and transitivity -----------------------------------


def pairwise_matrix(sample: RankingSample) -> PairwiseMatrix:
    if sample.size == 0:
        raise InvalidInput("empty sample")
    c = concordance(sample.ranks)
    if sample.weights is None:
        p = c.sum(axis=0, dtype=np.int64) / sample.size
    else:
        p = sample.weights @ c
    return PairwiseMatrix(sample.n, np.clip(p, 0.0, 1.0))


def find_transitivity_violation(m: PairwiseMatrix, strict: bool) -> str | None:
    """Describe the first violation of (strict) stochastic transitivity, or ``None``."""
    if strict:
        ties = np.flatnonzero(np.abs(m.p - 0.5) <= TIE_TOL)
        if ties.size:
            I, J = pair_index_arrays(m.n)
            k = ties[0]
            return f"pair ({I[k] + 1}, {J[k] + 1}) is tied at p = 1/2"
    P = m.square()
    geq = P >= 0.5 - TIE_TOL
    np.fill_diagonal(geq, False)
    # i >= j and j >= k but not i >= k, for distinct i, j, k
    bad = geq[:, :, None] & geq[None, :, :] & ~geq[:, None, :]
    idx = np.arange(m.n)
    bad[idx, :, idx] = False
    hits = np.argwhere(bad)
    if hits.size:
        i, j, k = (int(v) + 1 for v in hits[0])
        return (
            f"triple ({i}, {j}, {k}): p[{i},{j}] >= 1/2 and p[{j},{k}] >= 1/2 "
            f"but p[{i},{k}] = {m[i, k]:.6g} < 1/2"
        )
    return None


def is_stochastically_transitive(m: PairwiseMatrix, strict: bool = False) -> bool:
    return find_transitivity_violation(m, strict) is None


def _strict_copeland(m: PairwiseMatrix) -> np.ndarray | None:
    """Copeland rank vector if ``m`` is strictly SST, else ``None``.

    Without ties the majority relation is a tournament, and a tournament is
    transitive exactly when its loss counts are ``0..n-1``.
    """
    if np.any(np.abs(m.p - 0.5) <= TIE_TOL):
        return None
    losses = (m.square() < 0.5).sum(axis=1)
    ranks = 1 + losses
    if not np.array_equal(np.sort(ranks), np.arange(1, m.n + 1)):
        return None
    return ranks


# --- medians ---------------------------------------------------------------------


def copeland_median(m: PairwiseMatrix) -> Permutation:
    """Rank each item by ``1 + #{k : p[i,k] < 1/2}``; requires strict SST."""
    problem = find_transitivity_violation(m, strict=True)
    if problem is not None:
        raise NotTransitiveError(f"Copeland median needs strict stochastic transitivity: {problem}")
    P = m.square()
    ranks = 1 + (P < 0.5 - TIE_TOL).sum(axis=1)
    assert sorted(ranks.tolist()) == list(range(1, m.n + 1)), "transitivity check let a cycle through"
    return Permutation(tuple(ranks))


def expected_distance(m: PairwiseMatrix, sigma: Permutation) -> float:
    """``L_P(sigma)``: expected Kendall distance from ``sigma`` to a draw of ``P``."""
    if sigma.n != m.n:
        raise DimensionMismatch(f"matrix over {m.n} items, permutation over {sigma.n}")
    c = concordance(sigma.as_array())
    return float(np.sum(np.where(c == 1, 1.0 - m.p, m.p)))


def _costs_all(m: PairwiseMatrix) -> np.ndarray:
    c = all_concordance(m.n)
    # discordant with p costs p, concordant costs 1 - p
    return (1.0 - c) @ m.p + c @ (1.0 - m.p)


def exact_kemeny(m: PairwiseMatrix) -> KemenyResult:
    """Brute-force Kemeny median over all ``n!`` rankings (``n <= 8``).

    Ties go to the first minimizer in enumeration order.
    """
    costs = _costs_all(m)
    best = float(costs.min())
    k = int(np.flatnonzero(costs <= best + 1e-12)[0])
    median = Permutation(tuple(all_rank_vectors(m.n)[k]))
    return KemenyResult(
        median=median,
        cost=float(costs[k]),
        method="exact",
        sst=is_stochastically_transitive(m, strict=True),
    )


def optimal_cost(m: PairwiseMatrix) -> float:
    """``L*_P = sum min(p, 1 - p)``; valid only for stochastically transitive ``m``."""
    problem = find_transitivity_violation(m, strict=False)
    if problem is not None:
        raise NotTransitiveError(f"closed-form minimum needs stochastic transitivity: {problem}")
    return float(np.minimum(m.p, 1.0 - m.p).sum())


def borda_order(mean_ranks: np.ndarray) -> Permutation:
    """Rank items by increasing mean rank; ties go to the lower item index."""
    score = np.round(np.asarray(mean_ranks, dtype=np.float64), 10)
    order = np.lexsort((np.arange(score.size), score))
    ranks = np.empty(score.size, dtype=np.int64)
    ranks[order] = np.arange(1, score.size + 1)
    return Permutation(tuple(ranks))


def borda_median(sample: RankingSample) -> Permutation:
    if sample.size == 0:
        raise InvalidInput("empty sample")
    return borda_order(sample.mean_ranks())


def pseudo_median_from_stats(m: PairwiseMatrix, mean_ranks: np.ndarray) -> KemenyResult:
    """Copeland median when ``m`` is strictly SST, Borda order otherwise."""
    ranks = _strict_copeland(m)
    if ranks is not None:
        median, method, sst = Permutation(tuple(ranks)), "copeland", True
    else:
        median, method, sst = borda_order(mean_ranks), "borda", False
    return KemenyResult(median, expected_distance(m, median), method, sst)


def pseudo_median(sample: RankingSample) -> KemenyResult:
    """Empirical consensus that never fails: Copeland on strictly SST samples, Borda otherwise."""
    return pseudo_median_from_stats(pairwise_matrix(sample), sample.mean_ranks())


# --- dispersion and risk ------------------------------------------------------------


def gamma_dispersion(m: PairwiseMatrix) -> float:
    """``sum_{i<j} p (1 - p)``, half the expected distance between two independent draws."""
    return float(np.sum(m.p * (1.0 - m.p)))


def gamma_ustat(sample: RankingSample) -> float:
    """Half the mean Kendall distance over all unordered pairs of sample rankings."""
    if sample.weights is not None:
        raise InvalidInput("the U-statistic is defined for unweighted samples")
    N = sample.size
    if N < 2:
        raise InvalidInput("the U-statistic needs at least 2 rankings")
    # sum over pairs of d = sum over item pairs of c * (N - c), c = concordant count
    c = concordance(sample.ranks).sum(axis=0, dtype=np.int64)
    total = float(np.sum(c * (N - c)))
    return 0.5 * total / (N * (N - 1) / 2)


def empirical_mean_distance(sample: RankingSample, sigma: Permutation) -> float:
    """``(1/N) sum_k d(sigma, Sigma_k)`` computed directly from the rankings."""
    d = kendall_tau_many(sample.ranks, sigma.as_array()[None, :])
    if sample.weights is None:
        return float(d.mean())
    return float(sample.weights @ d)


def excess_risk_pointwise(m_true: PairwiseMatrix, predicted: Permutation) -> float:
    """``L_P(predicted) - L*_P = 2 sum |p - 1/2|`` over pairs ``predicted`` misorders."""
    problem = find_transitivity_violation(m_true, strict=True)
    if problem is not None:
        raise NotTransitiveError(f"excess risk formula needs strict stochastic transitivity: {problem}")
    if predicted.n != m_true.n:
        raise DimensionMismatch(f"matrix over {m_true.n} items, permutation over {predicted.n}")
    c = concordance(predicted.as_array()).astype(np.float64)
    d = (2.0 * c - 1.0) * (0.5 - m_true.p)  # > 0 where the prediction disagrees with the majority
    return float(2.0 * np.sum(np.abs(m_true.p - 0.5) * (d > 0)))


@dataclass(frozen=True)
class PerturbationReport:
    lower_slack: float
    upper_slack: float
    distance_slack: float | None
    median_a: Permutation
    median_b: Permutation

    @property
    def ok(self) -> bool:
        slacks = [self.lower_slack, self.upper_slack]
        if self.distance_slack is not None:
            slacks.append(self.distance_slack)
        return all(s >= -1e-12 for s in slacks)


def check_perturbation_bounds(mA: PairwiseMatrix, mB: PairwiseMatrix) -> PerturbationReport:
    """Slacks of the two perturbation bounds between the medians of ``mA`` and ``mB``.

    Part (i): ``L*_A <= L_A(median_B) <= L*_A + 2 sum |pA - pB|``.
    Part (ii), when both are strictly SST:
    ``d(median_A, median_B) <= sum |pA - pB| / min |pB - 1/2|``.
    """
    if mA.n != mB.n:
        raise DimensionMismatch(f"matrices over {mA.n} and {mB.n} items")
    if mA.n > ORACLE_CAP:
        raise OracleScaleExceeded(f"oracle scale exceeded: n={mA.n} > {ORACLE_CAP}")
    ra, rb = exact_kemeny(mA), exact_kemeny(mB)
    l1 = float(np.abs(mA.p - mB.p).sum())
    cross = expected_distance(mA, rb.median)
    lower = cross - ra.cost
    upper = ra.cost + 2.0 * l1 - cross
    dist_slack = None
    if is_stochastically_transitive(mA, strict=True) and is_stochastically_transitive(mB, strict=True):
        h = mB.noise_margin()
        d = int(kendall_tau_many(ra.median.as_array(), rb.median.as_array()))
        dist_slack = l1 / h - d
    return PerturbationReport(lower, upper, dist_slack, ra.median, rb.median)
