"""Mallows distributions and the piecewise-constant synthetic scenarios.

The Mallows model here is ``P(sigma) ∝ exp(-phi * d(sigma, center))``: ``phi = 0``
is uniform and larger ``phi`` concentrates mass on the center. Literature that
uses ``q = exp(-phi)`` (a dispersion in ``[0, 1]``) maps over by ``phi = -log q``.

Scenarios place ``K`` cells over the feature space, each with its own center.
Inside a cell a record's ranking is the center itself (noiseless, ``phi=None``,
written ``"inf"`` in JSON) or a Mallows draw around it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .consensus import PairwiseMatrix, RankingSample, optimal_cost
from .data import CATEGORICAL, NUMERIC, Feature, RankingDataset, Schema
from .errors import InvalidInput
from .perm import Permutation, all_concordance, all_rank_vectors, concordance

SETTINGS = ("numeric-numeric", "numeric-categorical", "categorical-categorical")
SETTING_ALIASES = {"1": SETTINGS[0], "2": SETTINGS[1], "3": SETTINGS[2]}


@dataclass(frozen=True)
class MallowsModel:
    center: Permutation
    phi: float

    def __post_init__(self):
        if not (self.phi >= 0 and math.isfinite(self.phi)):
            raise InvalidInput(f"phi must be a finite nonnegative number, got {self.phi}")

    @property
    def n(self) -> int:
        return self.center.n


class MallowsTable(NamedTuple):
    ranks: np.ndarray
    probs: np.ndarray
    pairwise: PairwiseMatrix


def _insertion_weights(j: int, phi: float) -> np.ndarray:
    w = np.exp(-phi * np.arange(j))
    return w / w.sum()


def sample_ranks(center: Permutation, phi: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``(count, n)`` rank matrix of i.i.d. Mallows draws by repeated insertion.

    The j-th item of the center's ordering is inserted with ``v`` earlier items
    after it, ``P(v) ∝ exp(-phi v)`` for ``v = 0..j-1``; the draw's distance
    to the center is the sum of the ``v``.
    """
    n = center.n
    if count < 1:
        raise InvalidInput("sample count must be >= 1")
    displacements = np.zeros((count, n), dtype=np.int64)
    for j in range(2, n + 1):
        displacements[:, j - 1] = rng.choice(j, size=count, p=_insertion_weights(j, phi))
    order0 = np.array(center.ordering()) - 1
    out = np.empty((count, n), dtype=np.int64)
    for a in range(count):
        seq: list[int] = []
        for j in range(n):
            seq.insert(j - displacements[a, j], j)
        items = order0[seq]
        out[a, items] = np.arange(1, n + 1)
    return out


def sample(model: MallowsModel, count: int, rng: np.random.Generator) -> RankingSample:
    """I.i.d. draws from ``model`` as a :class:`RankingSample`."""
    return RankingSample(sample_ranks(model.center, model.phi, count, rng))


def enumerate_distribution(model: MallowsModel) -> MallowsTable:
    """Exact probabilities over all ``n!`` rankings and the induced pairwise matrix."""
    ranks = all_rank_vectors(model.n)
    c = all_concordance(model.n)
    dist = np.abs(c - concordance(model.center.as_array())).sum(axis=1)
    w = np.exp(-model.phi * dist)
    probs = w / w.sum()
    return MallowsTable(ranks, probs, PairwiseMatrix(model.n, np.clip(probs @ c, 0.0, 1.0)))


def mallows_optimal_cost(n: int, phi: float | None) -> float:
    """Bayes risk ``L*`` of a Mallows model; it does not depend on the center."""
    if phi is None:
        return 0.0
    return optimal_cost(enumerate_distribution(MallowsModel(Permutation.identity(n), phi)).pairwise)


# --- scenarios ------------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    """Conjunction of per-feature constraints.

    ``bounds[k] = (lo, hi)`` keeps numeric feature ``k`` in ``[lo, hi]``;
    ``levels[k]`` keeps categorical feature ``k`` in a set of level codes.
    Unlisted features are unconstrained. Cells are tested in order and the
    first match wins, so shared boundaries (measure zero) are harmless.
    """

    bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    levels: dict[int, frozenset[int]] = field(default_factory=dict)

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        ok = np.ones(X.shape[0], dtype=bool)
        for k, (lo, hi) in self.bounds.items():
            ok &= (X[:, k] >= lo) & (X[:, k] <= hi)
        for k, lv in self.levels.items():
            ok &= np.isin(X[:, k], list(lv))
        return ok

    def mass(self, schema: Schema) -> float:
        m = 1.0
        for k, (lo, hi) in self.bounds.items():
            m *= max(0.0, min(hi, 1.0) - max(lo, 0.0))
        for k, lv in self.levels.items():
            m *= len(lv) / len(schema.features[k].levels)
        return m

    def to_json(self, schema: Schema) -> dict:
        out = {}
        for k, (lo, hi) in sorted(self.bounds.items()):
            out[schema.features[k].name] = {"interval": [lo, hi]}
        for k, lv in sorted(self.levels.items()):
            out[schema.features[k].name] = {"levels": [schema.features[k].levels[c] for c in sorted(lv)]}
        return out

    @classmethod
    def from_json(cls, obj: dict, schema: Schema) -> "Cell":
        names = [f.name for f in schema.features]
        bounds, levels = {}, {}
        for name, spec in obj.items():
            if name not in names:
                raise InvalidInput(f"cell refers to unknown feature {name!r}")
            k = names.index(name)
            f = schema.features[k]
            if "interval" in spec and f.kind == NUMERIC:
                lo, hi = spec["interval"]
                bounds[k] = (float(lo), float(hi))
            elif "levels" in spec and f.kind == CATEGORICAL:
                try:
                    levels[k] = frozenset(f.levels.index(str(v)) for v in spec["levels"])
                except ValueError:
                    raise InvalidInput(f"cell uses an unknown level of {name!r}") from None
            else:
                raise InvalidInput(f"bad constraint for feature {name!r}: {spec}")
        return cls(bounds, levels)


def setting_schema(setting: str) -> Schema:
    lv3 = ("L0", "L1", "L2")
    if setting == SETTINGS[0]:
        return Schema((Feature("x1", NUMERIC), Feature("x2", NUMERIC)))
    if setting == SETTINGS[1]:
        return Schema((Feature("x1", NUMERIC), Feature("g", CATEGORICAL, lv3)))
    if setting == SETTINGS[2]:
        return Schema((Feature("g1", CATEGORICAL, lv3), Feature("g2", CATEGORICAL, ("L0", "L1"))))
    raise InvalidInput(f"unknown setting {setting!r}; expected one of {SETTINGS}")


def setting_cells(setting: str) -> list[Cell]:
    """The frozen six-cell geometry of each setting.

    1: x1 cut at 0.4 and 0.7, x2 cut at 0.5 (cells of mass 0.2, 0.2, 0.15 x 4).
    2: x1 cut at 0.5 crossed with the three levels of g.
    3: the 3 x 2 level grid of (g1, g2).
    Each is representable by an axis-parallel tree of depth 3.
    """
    if setting == SETTINGS[0]:
        return [
            Cell(bounds={0: a, 1: b})
            for a in ((0.0, 0.4), (0.4, 0.7), (0.7, 1.0))
            for b in ((0.0, 0.5), (0.5, 1.0))
        ]
    if setting == SETTINGS[1]:
        return [
            Cell(bounds={0: a}, levels={1: frozenset({g})})
            for g in range(3)
            for a in ((0.0, 0.5), (0.5, 1.0))
        ]
    if setting == SETTINGS[2]:
        return [Cell(levels={0: frozenset({a}), 1: frozenset({b})}) for a in range(3) for b in range(2)]
    raise InvalidInput(f"unknown setting {setting!r}; expected one of {SETTINGS}")


def normalize_setting(setting: str | int) -> str:
    s = str(setting)
    s = SETTING_ALIASES.get(s, s)
    if s not in SETTINGS:
        raise InvalidInput(f"unknown setting {setting!r}; expected one of {SETTINGS} or 1-3")
    return s


def parse_phi(value) -> float | None:
    """``None`` encodes the noiseless case; accepts ``"inf"``/``null``/``inf``."""
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "noiseless"):
            return None
        value = float(value)
    value = float(value)
    if math.isinf(value) and value > 0:
        return None
    if not value >= 0:
        raise InvalidInput(f"phi must be >= 0 or 'inf', got {value}")
    return value


def format_phi(phi: float | None) -> str:
    return "inf" if phi is None else repr(float(phi))


def _distinct_centers(n: int, K: int, rng: np.random.Generator) -> list[Permutation]:
    out: list[Permutation] = []
    seen = set()
    cap = math.factorial(n)
    while len(out) < K:
        r = tuple(int(v) for v in rng.permutation(n) + 1)
        if r in seen and len(seen) < cap:
            continue
        seen.add(r)
        out.append(Permutation(r))
    return out


@dataclass(frozen=True)
class SyntheticScenario:
    setting: str
    n: int
    phi: float | None
    seed: int
    cells: tuple[Cell, ...]
    centers: tuple[Permutation, ...]
    schema: Schema

    def __post_init__(self):
        if len(self.cells) < 1:
            raise InvalidInput("a scenario needs at least one cell")
        if len(self.centers) != len(self.cells):
            raise InvalidInput(f"{len(self.cells)} cells but {len(self.centers)} centers")
        if any(c.n != self.n for c in self.centers):
            raise InvalidInput("every center must rank n items")
        total = sum(c.mass(self.schema) for c in self.cells)
        if abs(total - 1.0) > 1e-9:
            raise InvalidInput(f"cells must partition the feature space (total mass {total:.6g})")

    @property
    def K(self) -> int:
        return len(self.cells)

    @property
    def noiseless(self) -> bool:
        return self.phi is None

    @classmethod
    def preset(cls, setting: str | int, n: int, phi: float | None, seed: int, K: int = 6) -> "SyntheticScenario":
        """A setting's frozen geometry with ``K`` distinct random centers drawn from ``seed``.

        ``K = 1`` uses a single unconstrained cell.
        """
        setting = normalize_setting(setting)
        schema = setting_schema(setting)
        if K == 1:
            cells = [Cell()]
        elif K == 6:
            cells = setting_cells(setting)
        else:
            raise InvalidInput("preset geometries exist for K = 1 and K = 6 only; pass explicit cells")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        centers = _distinct_centers(n, K, rng)
        return cls(setting, n, phi, seed, tuple(cells), tuple(centers), schema)

    def cell_of(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.full(X.shape[0], -1, dtype=np.int64)
        for k, cell in enumerate(self.cells):
            hit = (out < 0) & cell.contains(X)
            out[hit] = k
        if np.any(out < 0):
            raise InvalidInput("some feature vectors fall outside every cell")
        return out

    def cell_masses(self) -> np.ndarray:
        return np.array([c.mass(self.schema) for c in self.cells])

    def to_json(self) -> dict:
        return {
            "setting": self.setting,
            "K": self.K,
            "n": self.n,
            "phi": format_phi(self.phi),
            "seed": self.seed,
            "schema": self.schema.to_json(),
            "cells": [c.to_json(self.schema) for c in self.cells],
            "centers": [str(c) for c in self.centers],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticScenario":
        try:
            setting = normalize_setting(obj["setting"])
            n = int(obj["n"])
            phi = parse_phi(obj.get("phi", "inf"))
            seed = int(obj["seed"])
        except KeyError as exc:
            raise InvalidInput(f"scenario is missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise InvalidInput(f"bad scenario field: {exc}") from None
        K = int(obj.get("K", len(obj["cells"]) if "cells" in obj else 6))
        if "cells" not in obj and "centers" not in obj:
            return cls.preset(setting, n, phi, seed, K)
        schema = Schema.from_json(obj["schema"]) if "schema" in obj else setting_schema(setting)
        if "cells" in obj:
            cells = tuple(Cell.from_json(c, schema) for c in obj["cells"])
        else:
            cells = tuple(cls.preset(setting, n, phi, seed, K).cells)
        if "centers" in obj:
            centers = tuple(Permutation.parse(str(c)) for c in obj["centers"])
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
            centers = tuple(_distinct_centers(n, len(cells), rng))
        if len(cells) != K:
            raise InvalidInput(f"K={K} but {len(cells)} cells given")
        return cls(setting, n, phi, seed, cells, centers, schema)

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticScenario":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{path}: invalid JSON ({exc})") from None
        return cls.from_json(obj)


def _draw_features(schema: Schema, N: int, rng: np.random.Generator) -> np.ndarray:
    X = np.empty((N, len(schema)))
    for k, f in enumerate(schema.features):
        if f.kind == NUMERIC:
            X[:, k] = rng.random(N)
        else:
            X[:, k] = rng.integers(0, len(f.levels), size=N)
    return X


def generate_scenario(s: SyntheticScenario, N: int, seed: int | None = None) -> RankingDataset:
    """``N`` records: uniform features, each ranking drawn from its cell.

    ``seed`` defaults to the scenario's own seed.
    """
    if N < s.K:
        raise InvalidInput(f"need N >= K ({s.K}), got {N}")
    seed = s.seed if seed is None else seed
    feat_ss, rank_ss = np.random.SeedSequence([seed, 1]).spawn(2)
    X = _draw_features(s.schema, N, np.random.default_rng(feat_ss))
    cells = s.cell_of(X)
    centers = np.array([c.ranks for c in s.centers], dtype=np.int64)
    if s.noiseless:
        ranks = centers[cells]
    else:
        # draw around the identity, then relabel by each record's center
        base = sample_ranks(Permutation.identity(s.n), s.phi, N, np.random.default_rng(rank_ss))
        ranks = _relabel(base, centers[cells])
    return RankingDataset(s.schema, X, ranks, groups=cells)


def _relabel(base: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Move draws centered at the identity onto per-row centers.

    A draw ``r`` around the identity assigns rank ``r[t]`` to the item the
    identity puts at position ``t``; around center ``c`` that item is the one
    ``c`` ranks ``t + 1``-th.
    """
    order = np.argsort(centers, axis=1)  # order[a, t] = item at rank t+1 in center a
    out = np.empty_like(base)
    rows = np.arange(base.shape[0])[:, None]
    out[rows, order] = base
    return out


def oracle_risk(s: SyntheticScenario) -> float:
    """Bayes risk of the scenario: ``sum_k mass_k * L*(Mallows(center_k, phi))``."""
    if s.noiseless:
        return 0.0
    floor = mallows_optimal_cost(s.n, s.phi)
    return float(np.sum(s.cell_masses()) * floor)


class OracleRule:
    """Predicts the center of the cell containing the query."""

    def __init__(self, scenario: SyntheticScenario):
        self.scenario = scenario
        self._centers = np.array([c.ranks for c in scenario.centers], dtype=np.int64)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return self._centers[self.scenario.cell_of(X)]

    def predict(self, x: Sequence[float]) -> Permutation:
        return Permutation(tuple(self.predict_many(np.asarray(x, dtype=np.float64)[None, :])[0]))
