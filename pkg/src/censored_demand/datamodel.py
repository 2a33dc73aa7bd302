"""Dataset schema, CSV I/O, the random three-way split and design-matrix encoding."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import independent_columns

CSV_COLUMNS = (
    "sku_id", "store_id", "date", "sales", "price", "weight", "promotion",
    "brand", "country", "colour", "form", "flour", "package_type", "store_type", "holiday",
)
CATEGORICAL = ("brand", "country", "colour", "form", "flour", "package_type", "store_type")
DERIVED_CATEGORICAL = ("year", "month", "day_of_week")
BINARY = ("promotion", "holiday")
NUMERIC = ("log_price", "weight", "promotion", "holiday")
PRICE_COLUMN = "log_price"
DEFAULT_FRACTIONS = (0.60, 0.15, 0.25)

_FIXED_DERIVED_LEVELS = {
    "month": tuple(str(m) for m in range(1, 13)),
    "day_of_week": tuple(str(d) for d in range(7)),
}


class DataValidationError(ValueError):
    """Raised when input rows violate the schema; ``problems`` holds (line, column, message)."""

    def __init__(self, problems: Sequence[tuple[int | None, str, str]], source: str = ""):
        self.problems = list(problems)
        shown = "; ".join(
            f"line {line}, column {col!r}: {msg}" if line is not None else f"column {col!r}: {msg}"
            for line, col, msg in self.problems[:20]
        )
        more = f" (+{len(self.problems) - 20} more)" if len(self.problems) > 20 else ""
        super().__init__(f"{source + ': ' if source else ''}{shown}{more}")


@dataclass(frozen=True)
class Dataset:
    """Validated observations plus the declared categorical vocabularies.

    ``frame`` holds the CSV columns with ``date`` parsed and the derived
    ``year``, ``month`` and ``day_of_week`` codes appended (as strings).
    """

    frame: pd.DataFrame
    vocabularies: Mapping[str, tuple[str, ...]]

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def sales(self) -> np.ndarray:
        return self.frame["sales"].to_numpy(dtype=np.float64)

    def take(self, rows) -> "Dataset":
        return Dataset(self.frame.iloc[np.asarray(rows)].reset_index(drop=True), self.vocabularies)


def add_calendar_columns(frame: pd.DataFrame) -> pd.DataFrame:
    dates = pd.to_datetime(frame["date"])
    frame = frame.copy()
    frame["date"] = dates
    frame["year"] = dates.dt.year.astype(str)
    frame["month"] = dates.dt.month.astype(str)
    frame["day_of_week"] = dates.dt.dayofweek.astype(str)
    return frame


def _read_vocabularies(schema) -> dict[str, tuple[str, ...]]:
    if isinstance(schema, Mapping):
        raw = schema
    else:
        path = Path(schema)
        if not path.exists():
            raise FileNotFoundError(f"vocabulary sidecar not found: {path}")
        raw = json.loads(path.read_text(encoding="utf-8"))
    missing = [c for c in CATEGORICAL if c not in raw]
    if missing:
        raise DataValidationError([(None, c, "no vocabulary declared") for c in missing], "schema")
    return {k: tuple(str(v) for v in levels) for k, levels in raw.items()}


def vocab_path_for(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".vocab.json")


def load_dataset(path, schema=None) -> Dataset:
    """Parse and validate a dataset CSV.

    ``schema`` is the vocabulary sidecar (path or mapping); by default
    ``<stem>.vocab.json`` next to the CSV. All violations are collected and
    reported together with their CSV line numbers.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    vocab = _read_vocabularies(vocab_path_for(path) if schema is None else schema)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if tuple(raw.columns) != CSV_COLUMNS:
        raise DataValidationError(
            [(1, ",".join(raw.columns), f"header must be {','.join(CSV_COLUMNS)}")], str(path))

    problems: list[tuple[int, str, str]] = []
    lines = np.arange(len(raw)) + 2  # header is line 1

    def flag(mask, column, message):
        for line in lines[np.asarray(mask)]:
            problems.append((int(line), column, message))

    for col in CSV_COLUMNS:
        flag(raw[col].str.strip() == "", col, "empty cell")

    sales = pd.to_numeric(raw["sales"], errors="coerce")
    bad = sales.isna() | (sales < 0) | (sales != np.floor(sales))
    flag(bad & (raw["sales"] != ""), "sales", "sales must be a nonnegative integer")
    for col in ("price", "weight"):
        val = pd.to_numeric(raw[col], errors="coerce")
        flag((val.isna() | ~(val > 0)) & (raw[col] != ""), col, f"{col} must be a positive number")
    for col in BINARY:
        flag(~raw[col].isin(["0", "1"]) & (raw[col] != ""), col, "expected 0 or 1")
    dates = pd.to_datetime(raw["date"], format="%Y-%m-%d", errors="coerce")
    flag(dates.isna() & (raw["date"] != ""), "date", "expected an ISO-8601 date (YYYY-MM-DD)")
    for col in CATEGORICAL:
        allowed = set(vocab[col])
        unknown = ~raw[col].isin(allowed) & (raw[col] != "")
        for line, level in zip(lines[unknown.to_numpy()], raw.loc[unknown, col]):
            problems.append((int(line), col, f"unknown level {level!r} (declared: {sorted(allowed)})"))
    if problems:
        problems.sort()
        raise DataValidationError(problems, str(path))

    frame = raw.copy()
    frame["sales"] = sales.astype(np.int64)
    frame["price"] = pd.to_numeric(raw["price"])
    frame["weight"] = pd.to_numeric(raw["weight"])
    for col in BINARY:
        frame[col] = raw[col].astype(np.int64)
    frame["date"] = dates
    frame = add_calendar_columns(frame)
    if "year" in vocab:
        unknown = ~frame["year"].isin(set(vocab["year"]))
        if unknown.any():
            raise DataValidationError(
                [(int(l), "date", f"year {y} not in declared vocabulary")
                 for l, y in zip(lines[unknown.to_numpy()], frame.loc[unknown, "year"])], str(path))
    return Dataset(frame, vocab)


def write_dataset(dataset: Dataset, path) -> tuple[Path, Path]:
    """Write the CSV and its vocabulary sidecar; returns both paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = dataset.frame.loc[:, list(CSV_COLUMNS)].copy()
    out["date"] = pd.to_datetime(out["date"]).dt.strftime("%Y-%m-%d")
    out["price"] = out["price"].map(lambda v: f"{v:.2f}")
    out["weight"] = out["weight"].map(lambda v: f"{v:g}")
    out.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    vpath = vocab_path_for(path)
    vpath.write_text(json.dumps({k: list(v) for k, v in dataset.vocabularies.items()}, indent=2)
                     + "\n", encoding="utf-8")
    return path, vpath


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("train", "validation", "test")}

    @classmethod
    def from_dict(cls, d) -> "SplitIndices":
        return cls(np.asarray(d["train"]), np.asarray(d["validation"]), np.asarray(d["test"]))


def make_split(n: int, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> SplitIndices:
    """Uniform random train/validation/test partition of ``range(n)``.

    Train and validation sizes are ``fraction * n`` rounded half-up; the test
    set takes the remainder. Indices within each set are sorted.
    """
    if n < 10:
        raise ValueError(f"need at least 10 rows to split, got {n}")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError("fractions must be three nonnegative numbers")
    if abs(sum(fractions) - 1.0) > 1e-12:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)!r}")
    n_train = math.floor(fractions[0] * n + 0.5)
    n_val = math.floor(fractions[1] * n + 0.5)
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                        np.sort(perm[n_train + n_val:]))


@dataclass(frozen=True)
class EncodingPlan:
    """How raw observations become standardized design columns.

    ``candidates`` lists every column before drop rules; ``columns`` the kept
    ones, with the training-split ``means`` and ``stds`` used to standardize
    them. ``dropped`` records (column, reason) for constant or collinear
    columns.
    """

    levels: Mapping[str, tuple[str, ...]]
    candidates: tuple[str, ...]
    columns: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    dropped: tuple[tuple[str, str], ...] = field(default=())

    @property
    def reference_levels(self) -> dict[str, str]:
        return {var: lv[0] for var, lv in self.levels.items()}

    def raw_matrix(self, frame: pd.DataFrame, columns: Sequence[str] | None = None) -> np.ndarray:
        """Unstandardized values (log-price, numerics, 0/1 dummies) for ``columns``."""
        columns = self.columns if columns is None else columns
        out = np.empty((len(frame), len(columns)))
        cache: dict[str, np.ndarray] = {}
        for j, name in enumerate(columns):
            if name == PRICE_COLUMN:
                out[:, j] = np.log(frame["price"].to_numpy(dtype=np.float64))
            elif name in ("weight",) + BINARY:
                out[:, j] = frame[name].to_numpy(dtype=np.float64)
            else:
                var, level = name.split("=", 1)
                if var not in cache:
                    cache[var] = frame[var].astype(str).to_numpy()
                out[:, j] = cache[var] == level
        return out

    def transform(self, frame: pd.DataFrame) -> np.ndarray:
        X = self.raw_matrix(frame)
        return (X - np.asarray(self.means)) / np.asarray(self.stds)

    def to_dict(self) -> dict:
        return {
            "levels": {k: list(v) for k, v in self.levels.items()},
            "candidates": list(self.candidates),
            "columns": list(self.columns),
            "means": list(self.means),
            "stds": list(self.stds),
            "dropped": [list(d) for d in self.dropped],
        }

    @classmethod
    def from_dict(cls, d) -> "EncodingPlan":
        return cls(
            levels={k: tuple(v) for k, v in d["levels"].items()},
            candidates=tuple(d["candidates"]),
            columns=tuple(d["columns"]),
            means=tuple(float(x) for x in d["means"]),
            stds=tuple(float(x) for x in d["stds"]),
            dropped=tuple(tuple(x) for x in d["dropped"]),
        )


def _levels_for(dataset: Dataset) -> dict[str, tuple[str, ...]]:
    levels = {}
    for var in CATEGORICAL:
        levels[var] = tuple(sorted(set(dataset.vocabularies[var])))
    if "year" in dataset.vocabularies:
        levels["year"] = tuple(sorted(set(dataset.vocabularies["year"])))
    else:
        levels["year"] = tuple(sorted(set(dataset.frame["year"].astype(str))))
    levels.update(_FIXED_DERIVED_LEVELS)
    levels["month"] = tuple(sorted(levels["month"]))
    levels["day_of_week"] = tuple(sorted(levels["day_of_week"]))
    return levels


class DesignEncoder(TransformerMixin, BaseEstimator):
    """Learns an :class:`EncodingPlan` on training observations.

    Dummies (one per non-reference level, the reference being the
    lexicographically first level) and numeric columns are standardized
    with the training mean and population standard deviation. Constant
    columns and columns in the span of earlier columns are dropped.
    """

    def fit(self, dataset: Dataset, y=None):
        frame = dataset.frame
        if len(frame) == 0:
            raise ValueError("empty training split")
        levels = _levels_for(dataset)
        candidates = list(NUMERIC)
        for var in CATEGORICAL + DERIVED_CATEGORICAL:
            candidates += [f"{var}={lv}" for lv in levels[var][1:]]
        probe = EncodingPlan(levels, tuple(candidates), tuple(candidates), (), ())
        X = probe.raw_matrix(frame)
        means = X.mean(axis=0)
        stds = X.std(axis=0)
        dropped = []
        constant = ~(stds > 1e-12 * np.maximum(1.0, np.abs(means)))
        for j in np.flatnonzero(constant):
            dropped.append((candidates[j], "constant"))
            if candidates[j] in NUMERIC:
                warnings.warn(f"numeric column {candidates[j]!r} is constant on the training "
                              "rows and was dropped", stacklevel=2)
        live = np.flatnonzero(~constant)
        Z = (X[:, live] - means[live]) / stds[live]
        keep_live = independent_columns(Z)
        for j in live[~keep_live]:
            dropped.append((candidates[j], "collinear"))
        kept = live[keep_live]
        order = {c: i for i, c in enumerate(candidates)}
        self.plan_ = EncodingPlan(
            levels=levels,
            candidates=tuple(candidates),
            columns=tuple(candidates[j] for j in kept),
            means=tuple(float(means[j]) for j in kept),
            stds=tuple(float(stds[j]) for j in kept),
            dropped=tuple(sorted(dropped, key=lambda d: order[d[0]])),
        )
        return self

    def transform(self, dataset: Dataset):
        check_is_fitted(self)
        return self.plan_.transform(dataset.frame)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self)
        return np.asarray(self.plan_.columns, dtype=object)


@dataclass(frozen=True)
class DesignMatrix:
    """Standardized regressors ``X``, sales ``y`` and censoring indicator ``d = 1{y == 0}``.

    ``rows`` are positions in the source dataset; ``row_keys`` holds the
    (sku_id, store_id, date) of each row.
    """

    X: np.ndarray
    y: np.ndarray
    d: np.ndarray
    row_keys: pd.DataFrame
    column_names: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        for name in ("X", "y", "d", "rows"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def groups(self) -> np.ndarray:
        """SKU identifier of each row (the panel-bootstrap unit)."""
        return self.row_keys["sku_id"].to_numpy()

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise KeyError(f"column {name!r} not in design") from None

    def take(self, positions) -> "DesignMatrix":
        positions = np.asarray(positions)
        return DesignMatrix(self.X[positions], self.y[positions], self.d[positions],
                            self.row_keys.iloc[positions].reset_index(drop=True),
                            self.column_names, self.rows[positions])

    def select_rows(self, dataset_rows) -> "DesignMatrix":
        """Subset by dataset row positions (e.g. one part of a :class:`SplitIndices`)."""
        lookup = np.full(int(self.rows.max()) + 1, -1, dtype=np.int64)
        lookup[self.rows] = np.arange(self.rows.size)
        pos = lookup[np.asarray(dataset_rows)]
        if np.any(pos < 0):
            raise KeyError("requested rows are not part of this design")
        return self.take(pos)


def build_design(dataset: Dataset, plan: EncodingPlan | str = "fit-on-train",
                 split: SplitIndices | None = None) -> tuple[DesignMatrix, EncodingPlan]:
    """Encode every row of ``dataset``; with ``"fit-on-train"`` the plan is learned on ``split.train``."""
    if isinstance(plan, str):
        if plan != "fit-on-train":
            raise ValueError(f"unknown plan {plan!r}")
        if split is None:
            raise ValueError('plan="fit-on-train" needs a split')
        if len(split.train) == 0:
            raise ValueError("empty training split")
        plan = DesignEncoder().fit(dataset.take(split.train)).plan_
    X = plan.transform(dataset.frame)
    y = dataset.sales
    keys = dataset.frame.loc[:, ["sku_id", "store_id", "date"]].reset_index(drop=True)
    design = DesignMatrix(X, y, (y == 0).astype(np.float64), keys, plan.columns,
                          np.arange(len(dataset)))
    return design, plan
