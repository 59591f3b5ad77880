"""Feature schemas and labelled ranking datasets, with their CSV form.

CSV layout: a header row; feature columns prefixed ``f_`` (numeric) or ``c_``
(categorical); one ``ranking`` column holding a rank vector ``"1,3,2"`` or an
ordering ``"1>3>2"``. Rankings are always written as rank vectors.

Internally a dataset is a float matrix ``X`` (categorical columns hold level
codes, ``-1`` for a level the schema has never seen) and an integer rank matrix.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput, SchemaError
from .perm import Permutation, as_rank_matrix

NUMERIC = "numeric"
CATEGORICAL = "categorical"
UNSEEN = -1


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL and not self.levels:
            raise SchemaError(f"categorical feature {self.name!r} has no levels")

    @property
    def column(self) -> str:
        return ("f_" if self.kind == NUMERIC else "c_") + self.name

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind == CATEGORICAL:
            out["levels"] = list(self.levels)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Feature":
        return cls(obj["name"], obj["kind"], tuple(obj.get("levels", ())))


@dataclass(frozen=True)
class Schema:
    features: tuple[Feature, ...]

    def __len__(self) -> int:
        return len(self.features)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(f.kind for f in self.features)

    @property
    def numeric_only(self) -> bool:
        return all(f.kind == NUMERIC for f in self.features)

    def encode(self, values: Sequence) -> np.ndarray:
        """Feature vector from raw values: floats for numeric, level labels or codes for categorical."""
        if len(values) != len(self.features):
            raise SchemaError(f"expected {len(self.features)} features, got {len(values)}")
        out = np.empty(len(values))
        for k, (f, v) in enumerate(zip(self.features, values)):
            if f.kind == NUMERIC:
                try:
                    out[k] = float(v)
                except (TypeError, ValueError):
                    raise SchemaError(f"feature {f.name!r} expects a number, got {v!r}") from None
            elif isinstance(v, str):
                out[k] = f.levels.index(v) if v in f.levels else UNSEEN
            else:
                out[k] = int(v) if 0 <= int(v) < len(f.levels) else UNSEEN
        return out

    def check(self, X: np.ndarray) -> None:
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise SchemaError(f"expected {len(self.features)} feature columns, got shape {X.shape}")
        for k, f in enumerate(self.features):
            col = X[:, k]
            if not np.all(np.isfinite(col)):
                raise SchemaError(f"feature {f.name!r} has non-finite values")
            if f.kind == CATEGORICAL:
                ok = (col == np.round(col)) & (col >= UNSEEN) & (col < len(f.levels))
                if not np.all(ok):
                    raise SchemaError(f"feature {f.name!r} has invalid level codes")

    def to_json(self) -> list:
        return [f.to_json() for f in self.features]

    @classmethod
    def from_json(cls, obj: list) -> "Schema":
        return cls(tuple(Feature.from_json(f) for f in obj))


@dataclass(frozen=True, eq=False)
class RankingDataset:
    """Feature vectors paired with full rankings over ``n`` items.

    ``groups`` optionally carries the ground-truth cell of each record for
    simulated data (used for stratified splits and oracle checks).
    """

    schema: Schema
    X: np.ndarray
    ranks: np.ndarray
    groups: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, len(self.schema))
        ranks = as_rank_matrix(self.ranks)
        if X.shape[0] != ranks.shape[0]:
            raise SchemaError("features and rankings have different record counts")
        self.schema.check(X)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "ranks", ranks)
        if self.groups is not None:
            object.__setattr__(self, "groups", np.asarray(self.groups, dtype=np.int64))

    @property
    def size(self) -> int:
        return self.ranks.shape[0]

    @property
    def n(self) -> int:
        return self.ranks.shape[1]

    def __len__(self) -> int:
        return self.size

    def subset(self, idx) -> "RankingDataset":
        idx = np.asarray(idx)
        groups = None if self.groups is None else self.groups[idx]
        return RankingDataset(self.schema, self.X[idx], self.ranks[idx], groups)

    def records(self) -> Iterable[tuple[np.ndarray, Permutation]]:
        for x, r in zip(self.X, self.ranks):
            yield x, Permutation(tuple(r))

    def check_compatible(self, schema: Schema, n: int) -> None:
        if [(f.name, f.kind) for f in schema.features] != [(f.name, f.kind) for f in self.schema.features]:
            raise SchemaError("dataset columns do not match the model schema")
        if self.n != n:
            raise SchemaError(f"dataset ranks {self.n} items, model expects {n}")


def train_test_split(
    data: RankingDataset, train_fraction: float, rng: np.random.Generator, stratify: bool = True
) -> tuple[RankingDataset, RankingDataset]:
    """Random split; stratified by ``data.groups`` when available and requested."""
    if stratify and data.groups is not None:
        train = []
        for g in np.unique(data.groups):
            members = np.flatnonzero(data.groups == g)
            members = members[rng.permutation(members.size)]
            train.append(members[: int(round(train_fraction * members.size))])
        train_idx = np.sort(np.concatenate(train))
    else:
        perm = rng.permutation(data.size)
        train_idx = np.sort(perm[: int(round(train_fraction * data.size))])
    mask = np.zeros(data.size, dtype=bool)
    mask[train_idx] = True
    return data.subset(np.flatnonzero(mask)), data.subset(np.flatnonzero(~mask))


# --- CSV ---------------------------------------------------------------------------


def _fmt_number(v: float) -> str:
    return repr(float(v))


def write_csv(data: RankingDataset, path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f.column for f in data.schema.features] + ["ranking"])
    for x, r in zip(data.X, data.ranks):
        row = []
        for f, v in zip(data.schema.features, x):
            if f.kind == NUMERIC:
                row.append(_fmt_number(v))
            else:
                code = int(v)
                row.append(f.levels[code] if code != UNSEEN else "")
        row.append(",".join(str(int(k)) for k in r))
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_csv(source: str | Path, schema: Schema | None = None) -> RankingDataset:
    """Read a dataset CSV.

    Without ``schema`` the feature kinds come from the column prefixes and the
    categorical levels are the sorted distinct labels. With ``schema`` (e.g. a
    trained model's) labels are coded against it, unknown labels becoming unseen.
    """
    text = Path(source).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidInput(f"{source}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if "ranking" not in header:
        raise InvalidInput(f"{source}: no 'ranking' column")
    rcol = header.index("ranking")
    fcols = [k for k, h in enumerate(header) if k != rcol]
    for k in fcols:
        if not (header[k].startswith("f_") or header[k].startswith("c_")):
            raise InvalidInput(f"{source}: column {header[k]!r} lacks an f_/c_ prefix")
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InvalidInput(f"{source}:{lineno}: expected {len(header)} fields, got {len(r)}")

    if schema is None:
        feats = []
        for k in fcols:
            name = header[k][2:]
            if header[k].startswith("f_"):
                feats.append(Feature(name, NUMERIC))
            else:
                levels = tuple(sorted({r[k] for r in body if r[k] != ""}))
                feats.append(Feature(name, CATEGORICAL, levels or ("",)))
        schema = Schema(tuple(feats))
    elif [f.column for f in schema.features] != [header[k] for k in fcols]:
        raise SchemaError(f"{source}: columns {[header[k] for k in fcols]} do not match the schema")

    X = np.empty((len(body), len(fcols)))
    ranks = []
    for a, r in enumerate(body):
        try:
            X[a] = schema.encode([r[k] for k in fcols])
        except SchemaError as exc:
            raise SchemaError(f"{source}:{a + 2}: {exc}") from None
        try:
            ranks.append(Permutation.parse(r[rcol]).ranks)
        except InvalidInput as exc:
            raise InvalidInput(f"{source}:{a + 2}: {exc}") from None
    if not ranks:
        raise InvalidInput(f"{source}: no records")
    try:
        R = as_rank_matrix(ranks)
    except InvalidInput as exc:
        raise InvalidInput(f"{source}: {exc}") from None
    return RankingDataset(schema, X, R)


def read_rankings(source: str | Path) -> np.ndarray:
    """Rankings from either a dataset CSV or a plain list (one ranking per line)."""
    text = Path(source).read_text(encoding="utf-8")
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    if "ranking" in next(csv.reader([first]), []):
        return read_csv(source).ranks
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise InvalidInput(f"{source}: no rankings")
    return as_rank_matrix([Permutation.parse(ln).ranks for ln in lines])
