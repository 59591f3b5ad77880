"""k-nearest-neighbour ranking median regression.

The prediction at ``x`` is the pseudo-median (Copeland when strictly
transitive, Borda otherwise) of the rankings of the ``k`` training points
closest to ``x``. Distance ties are broken by training-record index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .consensus import PairwiseMatrix, pseudo_median_from_stats
from .data import CATEGORICAL, RankingDataset, Schema
from .errors import InvalidInput, SchemaError
from .perm import Permutation, concordance, kendall_tau_many


@dataclass(frozen=True)
class Metric:
    """Euclidean on numeric columns, optionally standardized; 0/1 mismatch on categorical ones.

    ``mixed`` must be set for schemas with categorical features. The mismatch
    term enters the squared distance with weight 1.
    """

    standardize: bool = False
    mixed: bool = False

    def to_json(self) -> dict:
        return {"standardize": self.standardize, "mixed": self.mixed}

    @classmethod
    def from_json(cls, obj: dict) -> "Metric":
        return cls(bool(obj.get("standardize", False)), bool(obj.get("mixed", False)))


class KnnRanker:
    """k-NN ranking rule; ``fit`` only stores the data."""

    def __init__(self, k: int = 5, metric: Metric | None = None):
        self.k = k
        self.metric = metric or Metric()

    def fit(self, data: RankingDataset) -> "KnnRanker":
        if data.size == 0:
            raise InvalidInput("cannot fit on an empty dataset")
        if not 1 <= self.k <= data.size:
            raise InvalidInput(f"k must lie in [1, {data.size}], got {self.k}")
        if not data.schema.numeric_only and not self.metric.mixed:
            raise InvalidInput("categorical features need the mixed metric (mixed=True)")
        self.data_ = data
        self.schema_ = data.schema
        self.n_ = data.n
        self._cat = np.array([f.kind == CATEGORICAL for f in data.schema.features])
        num = ~self._cat
        self._scale = np.ones(len(data.schema))
        if self.metric.standardize and num.any():
            sd = data.X[:, num].std(axis=0)
            self._scale[num] = np.where(sd > 0, sd, 1.0)
        self._conc = concordance(data.ranks).astype(np.float64)
        return self

    @property
    def schema(self) -> Schema:
        return self.schema_

    @property
    def n(self) -> int:
        return self.n_

    def _distances(self, Q: np.ndarray) -> np.ndarray:
        X = self.data_.X
        num = ~self._cat
        d2 = np.zeros((Q.shape[0], X.shape[0]))
        if num.any():
            diff = (Q[:, None, num] - X[None, :, num]) / self._scale[num]
            d2 += np.einsum("qnk,qnk->qn", diff, diff)
        if self._cat.any():
            d2 += (Q[:, None, self._cat] != X[None, :, self._cat]).sum(axis=2)
        return d2

    def neighbors(self, Q: np.ndarray) -> np.ndarray:
        """Indices of the ``k`` nearest training records per query, nearest first."""
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if Q.shape[1] != len(self.schema_):
            raise SchemaError(f"expected {len(self.schema_)} features, got {Q.shape[1]}")
        d2 = self._distances(Q)
        # stable sort keeps ascending record index among equal distances
        return np.argsort(d2, axis=1, kind="stable")[:, : self.k]

    def predict_many(self, Q: np.ndarray, chunk: int = 512) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        out = np.empty((Q.shape[0], self.n_), dtype=np.int64)
        R = self.data_.ranks
        for start in range(0, Q.shape[0], chunk):
            nb = self.neighbors(Q[start : start + chunk])
            p = self._conc[nb].mean(axis=1)
            mr = R[nb].mean(axis=1)
            for a in range(nb.shape[0]):
                res = pseudo_median_from_stats(PairwiseMatrix(self.n_, p[a]), mr[a])
                out[start + a] = res.median.ranks
        return out

    def predict(self, x) -> Permutation:
        return Permutation(tuple(self.predict_many(np.asarray(x, dtype=np.float64)[None, :])[0]))

    def risk(self, test: RankingDataset) -> float:
        """Mean Kendall distance between predictions and ``test`` rankings."""
        test.check_compatible(self.schema_, self.n_)
        return float(kendall_tau_many(self.predict_many(test.X), test.ranks).mean())

    # --- persistence ---

    def to_json(self) -> dict:
        d = self.data_
        return {
            "model": "knn",
            "k": self.k,
            "metric": self.metric.to_json(),
            "schema": d.schema.to_json(),
            "n": d.n,
            "X": d.X.tolist(),
            "ranks": d.ranks.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KnnRanker":
        schema = Schema.from_json(obj["schema"])
        data = RankingDataset(schema, np.array(obj["X"], dtype=np.float64).reshape(-1, len(schema)), obj["ranks"])
        return cls(int(obj["k"]), Metric.from_json(obj["metric"])).fit(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")
