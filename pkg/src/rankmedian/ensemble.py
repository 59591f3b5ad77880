"""Bagged consensus trees.

Each tree is grown on a bootstrap resample with its own seed stream; a query
is answered by the pseudo-median of the ``B`` tree predictions. The same rule
can be materialized once as a single piecewise-constant predictor on the
common refinement of the trees' partitions.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .consensus import PairwiseMatrix, pseudo_median_from_stats
from .data import CATEGORICAL, UNSEEN, RankingDataset, Schema
from .errors import BudgetExceeded, InvalidInput, SchemaError
from .perm import Permutation, concordance
from .tree import CritNode, CritTree, GrowConfig, grow

DEFAULT_CELL_BUDGET = 100_000


def aggregate_rankings(preds: np.ndarray) -> np.ndarray:
    """Pseudo-median across axis 0 of a ``(B, M, n)`` stack of predictions."""
    B, M, n = preds.shape
    p = concordance(preds).mean(axis=0)
    mr = preds.mean(axis=0)
    out = np.empty((M, n), dtype=np.int64)
    for a in range(M):
        out[a] = pseudo_median_from_stats(PairwiseMatrix(n, np.clip(p[a], 0.0, 1.0)), mr[a]).median.ranks
    return out


class BaggedForest:
    def __init__(self, trees: list[CritTree], seed, config: GrowConfig, bootstrap: bool = True, fraction: float = 1.0):
        if not trees:
            raise InvalidInput("a forest needs at least one tree")
        first = trees[0]
        for t in trees[1:]:
            if t.n != first.n or t.schema != first.schema:
                raise InvalidInput("all trees must share schema and item count")
        self.trees = trees
        self.seed = seed
        self.config = config
        self.bootstrap = bootstrap
        self.fraction = fraction
        self.schema = first.schema
        self.n = first.n

    @property
    def B(self) -> int:
        return len(self.trees)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        preds = np.stack([t.predict_many(X) for t in self.trees])
        return aggregate_rankings(preds)

    def predict(self, x) -> Permutation:
        return Permutation(tuple(self.predict_many(np.asarray(x, dtype=np.float64)[None, :])[0]))

    def __len__(self) -> int:
        return self.B

    def to_json(self) -> dict:
        return {
            "model": "bagged",
            "B": self.B,
            "seed": self.seed,
            "config": {**self.config.to_json(), "bootstrap": self.bootstrap, "fraction": self.fraction},
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BaggedForest":
        cfg = obj["config"]
        trees = [CritTree.from_json(t) for t in obj["trees"]]
        return cls(trees, obj.get("seed"), GrowConfig.from_json(cfg), bool(cfg.get("bootstrap", True)), float(cfg.get("fraction", 1.0)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")


def fit_bagged(
    data: RankingDataset,
    B: int,
    config: GrowConfig | None = None,
    seed: int = 0,
    bootstrap: bool = True,
    fraction: float = 1.0,
    threads: int = 1,
) -> BaggedForest:
    """Grow ``B`` trees on with-replacement resamples of ``round(fraction * N)`` records.

    ``bootstrap=False`` grows every tree on the data itself (a test mode in
    which ``B = 1`` reproduces :func:`grow`). Per-tree seeds are spawned from
    ``seed``, so results do not depend on ``threads``.
    """
    if B < 1:
        raise InvalidInput("B must be >= 1")
    if not 0 < fraction <= 1:
        raise InvalidInput("bootstrap fraction must lie in (0, 1]")
    config = config or GrowConfig()
    streams = np.random.SeedSequence(seed).spawn(B)
    size = max(1, int(round(fraction * data.size)))

    def one(b):
        rng = np.random.default_rng(streams[b])
        sub = data.subset(rng.integers(0, data.size, size=size)) if bootstrap else data
        return grow(sub, config, rng=rng, seed=int(streams[b].generate_state(1)[0]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(one, range(B)))
    else:
        trees = [one(b) for b in range(B)]
    return BaggedForest(trees, seed, config, bootstrap, fraction)


def predict_aggregated(forest: BaggedForest, x) -> Permutation:
    """Pseudo-median of the ``B`` tree predictions at ``x``."""
    return forest.predict(x)


# --- the largest common subpartition -----------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Axis-parallel cell: ``lo < x <= hi`` per numeric feature, allowed codes per categorical one."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    codes: tuple[frozenset[int] | None, ...]

    @classmethod
    def everything(cls, schema: Schema) -> "Region":
        d = len(schema)
        codes = tuple(
            frozenset(range(UNSEEN, len(f.levels))) if f.kind == CATEGORICAL else None for f in schema.features
        )
        return cls((-math.inf,) * d, (math.inf,) * d, codes)

    def is_empty(self) -> bool:
        for lo, hi, c in zip(self.lo, self.hi, self.codes):
            if c is None and not lo < hi:
                return True
            if c is not None and not c:
                return True
        return False

    def restrict(self, rule, left: bool) -> "Region":
        k = rule.feature
        lo, hi, codes = list(self.lo), list(self.hi), list(self.codes)
        if rule.numeric:
            if left:
                hi[k] = min(hi[k], rule.threshold)
            else:
                lo[k] = max(lo[k], rule.threshold)
        else:
            codes[k] = codes[k] & rule.levels if left else codes[k] - rule.levels
        return Region(tuple(lo), tuple(hi), tuple(codes))

    def intersect(self, other: "Region") -> "Region":
        codes = tuple(a if a is None else a & b for a, b in zip(self.codes, other.codes))
        return Region(
            tuple(max(a, b) for a, b in zip(self.lo, other.lo)),
            tuple(min(a, b) for a, b in zip(self.hi, other.hi)),
            codes,
        )

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        ok = np.ones(X.shape[0], dtype=bool)
        for k, (lo, hi, c) in enumerate(zip(self.lo, self.hi, self.codes)):
            if c is None:
                ok &= (X[:, k] > lo) & (X[:, k] <= hi)
            else:
                ok &= np.isin(X[:, k], sorted(c))
        return ok


def leaf_regions(tree: CritTree) -> list[tuple[Region, Permutation]]:
    out = []

    def walk(node: CritNode, region: Region):
        if node.is_leaf:
            out.append((region, node.consensus))
            return
        walk(node.left, region.restrict(node.split, True))
        walk(node.right, region.restrict(node.split, False))

    walk(tree.root, Region.everything(tree.schema))
    return out


class PiecewiseRule:
    """Constant ranking on each cell of a partition."""

    def __init__(self, cells: list[tuple[Region, Permutation]], schema: Schema, n: int):
        self.cells = cells
        self.schema = schema
        self.n = n

    def __len__(self) -> int:
        return len(self.cells)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.schema):
            raise SchemaError(f"expected {len(self.schema)} features, got {X.shape[1]}")
        out = np.zeros((X.shape[0], self.n), dtype=np.int64)
        hit = np.zeros(X.shape[0], dtype=np.int64)
        for region, perm in self.cells:
            m = region.contains(X)
            out[m] = perm.ranks
            hit += m
        if np.any(hit != 1):
            raise AssertionError("cells do not partition the feature space")
        return out

    def predict(self, x) -> Permutation:
        return Permutation(tuple(self.predict_many(np.asarray(x, dtype=np.float64)[None, :])[0]))


def largest_subpartition_aggregate(forest: BaggedForest, max_cells: int = DEFAULT_CELL_BUDGET) -> PiecewiseRule:
    """Overlay the trees' partitions and label each nonempty cell with the
    pseudo-median of the ``B`` per-tree rankings valid on it."""
    cells: list[tuple[Region, list[Permutation]]] = [
        (r, [p]) for r, p in leaf_regions(forest.trees[0])
    ]
    for tree in forest.trees[1:]:
        leaves = leaf_regions(tree)
        refined = []
        for region, perms in cells:
            for r2, p2 in leaves:
                inter = region.intersect(r2)
                if not inter.is_empty():
                    refined.append((inter, perms + [p2]))
                    if len(refined) > max_cells:
                        raise BudgetExceeded(
                            f"overlay exceeds the budget of {max_cells} cells; use per-query aggregation"
                        )
        cells = refined
    out = []
    for region, perms in cells:
        stack = np.array([p.ranks for p in perms], dtype=np.int64)[:, None, :]
        out.append((region, Permutation(tuple(aggregate_rankings(stack)[0]))))
    return PiecewiseRule(out, forest.schema, forest.n)
