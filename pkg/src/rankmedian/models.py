"""Loading persisted models and the trivial constant rule."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import Schema
from .ensemble import BaggedForest
from .errors import InvalidInput
from .knn import KnnRanker
from .perm import Permutation
from .tree import CritTree


def load_model(path: str | Path):
    """Load any persisted model (crit, knn, bagged) by its ``model`` tag."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: invalid JSON ({exc})") from None
    kind = obj.get("model")
    if kind == "crit":
        return CritTree.from_json(obj)
    if kind == "knn":
        return KnnRanker.from_json(obj)
    if kind == "bagged":
        return BaggedForest.from_json(obj)
    if kind == "constant":
        return ConstantRule.from_json(obj)
    raise InvalidInput(f"{path}: unknown model type {kind!r}")


class ConstantRule:
    """Predicts the same ranking everywhere (baseline and hand-written model files)."""

    def __init__(self, ranking: Permutation, schema: Schema):
        self.ranking = ranking
        self.schema = schema
        self.n = ranking.n

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.tile(np.array(self.ranking.ranks, dtype=np.int64), (X.shape[0], 1))

    def predict(self, x) -> Permutation:
        return self.ranking

    def to_json(self) -> dict:
        return {"model": "constant", "schema": self.schema.to_json(), "ranking": str(self.ranking)}

    @classmethod
    def from_json(cls, obj: dict) -> "ConstantRule":
        return cls(Permutation.parse(obj["ranking"]), Schema.from_json(obj["schema"]))
