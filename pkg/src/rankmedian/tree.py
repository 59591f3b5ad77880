"""Consensus ranking trees (CRIT).

A node's impurity is the dispersion ``gamma = sum_{i<j} p_ij (1 - p_ij)`` of
the rankings falling in it; a split is scored by the weighted impurity of its
two children (weights are fractions of the *whole* training set), and a node
is only split when that strictly lowers its own weighted impurity. Leaves are
labelled with the local pseudo-median.

Splits are axis-parallel: ``x[m] <= s`` for numeric features (``<=`` goes
left) and ``x[m] in L`` for categorical ones (unseen levels go right).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .consensus import (
    PairwiseMatrix,
    RankingSample,
    expected_distance,
    gamma_dispersion,
    pairwise_matrix,
    pseudo_median_from_stats,
)
from .data import NUMERIC, RankingDataset, Schema
from .errors import InvalidInput, SchemaError
from .perm import Permutation, concordance

#: Exhaustive subset search up to this many observed levels; contiguous prefixes above it.
MAX_EXHAUSTIVE_LEVELS = 10
COST_TOL = 1e-12


def node_impurity(sample: RankingSample | None) -> float:
    """``sum p(1-p)`` of the sample's pairwise probabilities; 0 for an empty node."""
    if sample is None or sample.size == 0:
        return 0.0
    return gamma_dispersion(pairwise_matrix(sample))


def pairwise_gini(sample: RankingSample) -> float:
    """Pairwise Gini index, ``4 / (n (n-1))`` times :func:`node_impurity`."""
    n = sample.n
    return 4.0 / (n * (n - 1)) * node_impurity(sample)


def split_cost(left: RankingSample | None, right: RankingSample | None, total: int) -> float:
    """Weighted child impurity ``(N_l/N) gamma_l + (N_r/N) gamma_r`` with ``N = total``."""
    cost = 0.0
    for side in (left, right):
        if side is not None and side.size:
            cost += side.size / total * node_impurity(side)
    return cost


@dataclass(frozen=True)
class SplitRule:
    feature: int
    threshold: float | None = None
    levels: frozenset[int] | None = None

    def __post_init__(self):
        if (self.threshold is None) == (self.levels is None):
            raise InvalidInput("a split has either a threshold or a level subset")

    @property
    def numeric(self) -> bool:
        return self.threshold is not None

    def goes_left(self, X: np.ndarray) -> np.ndarray:
        col = np.atleast_2d(X)[:, self.feature]
        if self.numeric:
            return col <= self.threshold
        return np.isin(col, sorted(self.levels))

    def describe(self, schema: Schema) -> str:
        f = schema.features[self.feature]
        if self.numeric:
            return f"{f.name} <= {self.threshold:.6g}"
        labels = ", ".join(f.levels[c] for c in sorted(self.levels))
        return f"{f.name} in {{{labels}}}"

    def to_json(self, schema: Schema) -> dict:
        if self.numeric:
            return {"feature": self.feature, "threshold": self.threshold}
        f = schema.features[self.feature]
        return {"feature": self.feature, "levels": [f.levels[c] for c in sorted(self.levels)]}

    @classmethod
    def from_json(cls, obj: dict, schema: Schema) -> "SplitRule":
        k = int(obj["feature"])
        if "threshold" in obj:
            return cls(k, threshold=float(obj["threshold"]))
        f = schema.features[k]
        return cls(k, levels=frozenset(f.levels.index(v) for v in obj["levels"]))


@dataclass
class CritNode:
    id: tuple[int, int]
    count: int
    weight: float
    impurity: float
    pairwise: np.ndarray
    consensus: Permutation
    method: str
    split: SplitRule | None = None
    gain: float = 0.0  # weight * impurity - split cost, for internal nodes
    left: "CritNode | None" = field(default=None, repr=False)
    right: "CritNode | None" = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def weighted_impurity(self) -> float:
        return self.weight * self.impurity

    def walk(self) -> Iterator["CritNode"]:
        """Pre-order traversal."""
        yield self
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()


@dataclass(frozen=True)
class GrowConfig:
    max_depth: int = 8
    min_leaf: int = 5
    max_features: int | None = None  # per-node feature subsampling (random-forest style)

    def __post_init__(self):
        if self.max_depth < 0:
            raise InvalidInput("max_depth must be >= 0")
        if self.min_leaf < 1:
            raise InvalidInput("min_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise InvalidInput("max_features must be >= 1")

    def to_json(self) -> dict:
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf, "max_features": self.max_features}

    @classmethod
    def from_json(cls, obj: dict) -> "GrowConfig":
        mf = obj.get("max_features")
        return cls(int(obj["max_depth"]), int(obj["min_leaf"]), None if mf is None else int(mf))


# --- split search ---------------------------------------------------------------------


def _gamma_rows(sums: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """``count * gamma`` for rows of concordance sums (0 where count is 0)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        p = sums / counts[:, None]
    g = np.where(counts[:, None] > 0, p * (1.0 - p), 0.0).sum(axis=1)
    return counts * g


def _numeric_candidates(x, conc, min_leaf):
    m = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    csum = np.cumsum(conc[order], axis=0)
    n_left = np.arange(1, m)
    ok = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (m - n_left >= min_leaf)
    if not ok.any():
        return None
    t = np.flatnonzero(ok)
    left = csum[t]
    right = csum[-1] - left
    nl = n_left[t].astype(np.float64)
    cost = _gamma_rows(left, nl) + _gamma_rows(right, m - nl)
    thresholds = (xs[t] + xs[t + 1]) / 2.0
    return cost, [("threshold", float(s)) for s in thresholds]


def _level_order_by_borda(x, levels, ranks):
    overall = ranks.mean(axis=0)
    scores = []
    for lv in levels:
        mr = ranks[x == lv].mean(axis=0)
        if np.std(mr) == 0 or np.std(overall) == 0:
            scores.append(0.0)
        else:
            scores.append(float(np.corrcoef(mr, overall)[0, 1]))
    return [lv for _, lv in sorted(zip(scores, levels))]


def _categorical_candidates(x, conc, ranks, min_leaf):
    levels = [int(v) for v in np.unique(x)]
    L = len(levels)
    if L < 2:
        return None
    sums = np.stack([conc[x == lv].sum(axis=0) for lv in levels])
    counts = np.array([np.sum(x == lv) for lv in levels], dtype=np.float64)
    if L <= MAX_EXHAUSTIVE_LEVELS:
        subsets = []
        rest = levels[1:]
        for bits in range(2 ** (L - 1) - 1):
            subsets.append(frozenset([levels[0]] + [rest[b] for b in range(L - 1) if bits >> b & 1]))
    else:
        ordered = _level_order_by_borda(x, levels, ranks)
        subsets = [frozenset(ordered[:t]) for t in range(1, L)]
    mask = np.array([[lv in s for lv in levels] for s in subsets], dtype=np.float64)
    nl = mask @ counts
    nr = counts.sum() - nl
    ok = (nl >= min_leaf) & (nr >= min_leaf)
    if not ok.any():
        return None
    left = mask @ sums
    right = sums.sum(axis=0) - left
    cost = _gamma_rows(left[ok], nl[ok]) + _gamma_rows(right[ok], nr[ok])
    return cost, [("levels", s) for s, good in zip(subsets, ok) if good]


def best_split(
    X: np.ndarray,
    ranks: np.ndarray,
    schema: Schema,
    total: int | None = None,
    min_leaf: int = 1,
    features=None,
    conc: np.ndarray | None = None,
) -> tuple[SplitRule, float] | None:
    """Axis-parallel split minimizing the weighted child impurity, or ``None``.

    ``total`` is the size of the whole training set (defaults to the node's
    size). Returns ``None`` when no admissible split strictly lowers the node's
    weighted impurity. Ties go to the lowest feature index, then the smallest
    threshold or first subset in canonical order.
    """
    X = np.atleast_2d(X)
    m = X.shape[0]
    if m == 0:
        raise InvalidInput("cannot split an empty node")
    total = m if total is None else total
    if conc is None:
        conc = concordance(ranks).astype(np.float64)
    parent = _gamma_rows(conc.sum(axis=0)[None, :], np.array([float(m)]))[0]
    best = None
    best_cost = parent - COST_TOL * max(1.0, parent)
    features = range(len(schema)) if features is None else features
    for k in features:
        kind = schema.features[k].kind
        if kind == NUMERIC:
            found = _numeric_candidates(X[:, k], conc, min_leaf)
        else:
            found = _categorical_candidates(X[:, k], conc, ranks, min_leaf)
        if found is None:
            continue
        cost, cands = found
        j = int(np.argmin(cost))
        first = int(np.flatnonzero(cost <= cost[j] + COST_TOL * max(1.0, cost[j]))[0])
        if cost[first] < best_cost:
            best_cost = float(cost[first])
            what, value = cands[first]
            rule = SplitRule(k, threshold=value) if what == "threshold" else SplitRule(k, levels=value)
            best = rule
    if best is None:
        return None
    return best, best_cost / total


# --- the tree -------------------------------------------------------------------------


class CritTree:
    """A grown (or pruned) consensus ranking tree."""

    def __init__(self, root: CritNode, schema: Schema, n: int, config: GrowConfig, n_train: int, seed=None):
        self.root = root
        self.schema = schema
        self.n = n
        self.config = config
        self.n_train = n_train
        self.seed = seed

    # structure

    def nodes(self) -> list[CritNode]:
        return list(self.root.walk())

    def leaves(self) -> list[CritNode]:
        return [nd for nd in self.root.walk() if nd.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    @property
    def depth(self) -> int:
        return max(nd.id[0] for nd in self.root.walk())

    # prediction

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf position (index into :meth:`leaves`) for each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.schema):
            raise SchemaError(f"expected {len(self.schema)} features, got {X.shape[1]}")
        leaf_pos = {id(nd): k for k, nd in enumerate(self.leaves())}
        out = np.empty(X.shape[0], dtype=np.int64)

        def route(node, idx):
            if node.is_leaf:
                out[idx] = leaf_pos[id(node)]
                return
            go = node.split.goes_left(X[idx])
            route(node.left, idx[go])
            route(node.right, idx[~go])

        route(self.root, np.arange(X.shape[0]))
        return out

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        table = np.array([nd.consensus.ranks for nd in self.leaves()], dtype=np.int64)
        return table[self.apply(X)]

    def predict(self, x) -> Permutation:
        return Permutation(tuple(self.predict_many(np.asarray(x, dtype=np.float64)[None, :])[0]))

    # summaries

    def dispersion(self) -> float:
        """Weighted leaf impurity ``sum_leaves mu(C) gamma(C)``."""
        return float(sum(nd.weighted_impurity for nd in self.leaves()))

    def training_risk(self) -> float:
        """Mean Kendall distance between leaf consensus and training rankings, from leaf stats."""
        return float(
            sum(nd.weight * expected_distance(PairwiseMatrix(self.n, nd.pairwise), nd.consensus) for nd in self.leaves())
        )

    def variable_importance(self) -> np.ndarray:
        imp = np.zeros(len(self.schema))
        for nd in self.root.walk():
            if not nd.is_leaf:
                imp[nd.split.feature] += nd.gain
        return imp

    # pruning

    def pruning_sequence(self) -> list["CritTree"]:
        """Weakest-link subtrees from the full tree down to the root alone.

        Each step merges the sibling leaves whose parent has the smallest
        dispersion increase ``weight * impurity - cost(children)``.
        """
        seq = [self]
        current = self
        while not current.root.is_leaf:
            cands = [
                nd
                for nd in current.root.walk()
                if not nd.is_leaf and nd.left.is_leaf and nd.right.is_leaf
            ]
            weakest = min(cands, key=lambda nd: (nd.gain, nd.id))
            current = current._collapsed({weakest.id})
            seq.append(current)
        return seq

    def prune(self, lam: float) -> "CritTree":
        """Subtree of the weakest-link sequence minimizing ``dispersion + lam * n_leaves``.

        Ties go to the smaller tree.
        """
        if lam < 0:
            raise InvalidInput("lambda must be >= 0")
        seq = self.pruning_sequence()
        scores = np.array([t.dispersion() + lam * t.n_leaves for t in seq])
        best = scores.min()
        ok = np.flatnonzero(scores <= best + 1e-12 * max(1.0, abs(best)))
        return seq[int(ok[-1])]

    def _collapsed(self, ids: set) -> "CritTree":
        def copy(node):
            nd = replace(node, left=None, right=None)
            if node.id in ids or node.is_leaf:
                nd.split, nd.gain = None, 0.0
            else:
                nd.left, nd.right = copy(node.left), copy(node.right)
            return nd

        return CritTree(copy(self.root), self.schema, self.n, self.config, self.n_train, self.seed)

    # persistence

    def to_json(self) -> dict:
        nodes = []
        for nd in self.root.walk():
            rec = {
                "id": list(nd.id),
                "count": nd.count,
                "weight": nd.weight,
                "impurity": nd.impurity,
                "pairwise": nd.pairwise.tolist(),
                "consensus": str(nd.consensus),
                "method": nd.method,
            }
            if nd.is_leaf:
                rec["leaf"] = True
            else:
                rec["split"] = nd.split.to_json(self.schema)
                rec["gain"] = nd.gain
            nodes.append(rec)
        return {
            "model": "crit",
            "schema": self.schema.to_json(),
            "n": self.n,
            "config": self.config.to_json(),
            "impurity": "sum_{i<j} p_ij (1 - p_ij)",
            "training": {"N": self.n_train, "seed": self.seed},
            "nodes": nodes,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CritTree":
        schema = Schema.from_json(obj["schema"])
        recs = iter(obj["nodes"])

        def build():
            r = next(recs)
            nd = CritNode(
                id=tuple(r["id"]),
                count=int(r["count"]),
                weight=float(r["weight"]),
                impurity=float(r["impurity"]),
                pairwise=np.array(r["pairwise"], dtype=np.float64),
                consensus=Permutation.parse(r["consensus"]),
                method=r["method"],
            )
            if "split" in r:
                nd.split = SplitRule.from_json(r["split"], schema)
                nd.gain = float(r["gain"])
                nd.left = build()
                nd.right = build()
            return nd

        root = build()
        tr = obj.get("training", {})
        return cls(root, schema, int(obj["n"]), GrowConfig.from_json(obj["config"]), int(tr.get("N", root.count)), tr.get("seed"))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def to_dot(self) -> str:
        lines = ["digraph crit {", '  node [shape=box, fontname="Helvetica"];']
        for nd in self.root.walk():
            name = f"n{nd.id[0]}_{nd.id[1]}"
            stats = f"N={nd.count}\\ngamma={nd.impurity:.4g}"
            if nd.is_leaf:
                label = f"{nd.consensus.ordering_str()}\\n{stats}\\n({nd.method})"
                lines.append(f'  {name} [label="{label}", style=filled, fillcolor="#e8f0fe"];')
            else:
                lines.append(f'  {name} [label="{nd.split.describe(self.schema)}\\n{stats}"];')
                for child, tag in ((nd.left, "yes"), (nd.right, "no")):
                    lines.append(f'  {name} -> n{child.id[0]}_{child.id[1]} [label="{tag}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _make_node(node_id, idx, conc, ranks, n, total) -> CritNode:
    m = idx.size
    p = conc[idx].sum(axis=0) / m
    mean_ranks = ranks[idx].sum(axis=0) / m
    pm = PairwiseMatrix(n, np.clip(p, 0.0, 1.0))
    res = pseudo_median_from_stats(pm, mean_ranks)
    return CritNode(
        id=node_id,
        count=int(m),
        weight=m / total,
        impurity=float(np.sum(pm.p * (1.0 - pm.p))),
        pairwise=pm.p.copy(),
        consensus=res.median,
        method=res.method,
    )


def grow(data: RankingDataset, config: GrowConfig | None = None, rng: np.random.Generator | None = None, seed=None) -> CritTree:
    """Grow a tree depth-first to ``config.max_depth`` with early stopping.

    ``rng`` is only consulted when ``config.max_features`` asks for per-node
    feature subsampling.
    """
    config = config or GrowConfig()
    if data.size == 0:
        raise InvalidInput("cannot grow a tree on an empty dataset")
    if config.max_features is not None and rng is None:
        rng = np.random.default_rng(seed)
    X, ranks = data.X, data.ranks
    conc = concordance(ranks).astype(np.float64)
    total = data.size
    d = len(data.schema)

    def build(node_id, idx):
        node = _make_node(node_id, idx, conc, ranks, data.n, total)
        if node_id[0] >= config.max_depth or node.impurity == 0.0 or idx.size < 2 * config.min_leaf:
            return node
        feats = None
        if config.max_features is not None and config.max_features < d:
            feats = sorted(rng.choice(d, size=config.max_features, replace=False).tolist())
        found = best_split(X[idx], ranks[idx], data.schema, total, config.min_leaf, feats, conc[idx])
        if found is None:
            return node
        rule, cost = found
        go = rule.goes_left(X[idx])
        node.split = rule
        node.gain = node.weighted_impurity - cost
        j, k = node_id
        node.left = build((j + 1, 2 * k), idx[go])
        node.right = build((j + 1, 2 * k + 1), idx[~go])
        return node

    root = build((0, 0), np.arange(total))
    return CritTree(root, data.schema, data.n, config, total, seed)
