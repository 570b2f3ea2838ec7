"""Per-unit scalar covariates with standardization bookkeeping."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class CovariateTable:
    unit_ids: tuple
    numeric: dict = field(default_factory=dict)
    categorical: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    standardization: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = tuple(self.unit_ids)
        n = len(ids)
        if len(set(ids)) != n:
            raise ValueError("covariate unit ids must be unique")
        num = {}
        for name, v in self.numeric.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (n,):
                raise ValueError(f"column {name!r} has {v.size} values for {n} units")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"column {name!r} has non-finite values")
            v.setflags(write=False)
            num[name] = v
        cat, ref = {}, dict(self.reference)
        for name, v in self.categorical.items():
            v = np.asarray([str(s) for s in v], dtype=object)
            if v.shape != (n,):
                raise ValueError(f"column {name!r} has {v.size} values for {n} units")
            if name in num:
                raise ValueError(f"column {name!r} is both numeric and categorical")
            cat[name] = v
            if name not in ref:
                ref[name] = most_frequent(v)
            elif ref[name] not in set(v):
                raise ValueError(f"reference level {ref[name]!r} does not occur in {name!r}")
        for name, (mu, sd) in self.standardization.items():
            if not sd > 0:
                raise ValueError(f"column {name!r}: standard deviation must be positive")
        object.__setattr__(self, "unit_ids", ids)
        object.__setattr__(self, "numeric", num)
        object.__setattr__(self, "categorical", cat)
        object.__setattr__(self, "reference", ref)

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def columns(self) -> list[str]:
        return list(self.numeric) + list(self.categorical)

    def is_numeric(self, name: str) -> bool:
        if name in self.numeric:
            return True
        if name in self.categorical:
            return False
        raise KeyError(f"unknown covariate {name!r}")

    def is_standardized(self, name: str) -> bool:
        return name in self.standardization

    def levels(self, name: str) -> list[str]:
        """Levels of a categorical column, reference first, the rest sorted."""
        ref = self.reference[name]
        return [ref] + sorted(set(self.categorical[name]) - {ref})

    def standardize(self, columns: Iterable[str] | None = None) -> "CovariateTable":
        """Center and scale numeric columns to unit (population) sd.

        Raw values stay recoverable through ``standardization``. Columns
        already standardized are left alone.
        """
        cols = list(self.numeric) if columns is None else list(columns)
        num = dict(self.numeric)
        info = dict(self.standardization)
        for name in cols:
            if not self.is_numeric(name):
                raise ValueError(f"cannot standardize categorical column {name!r}")
            if name in info:
                continue
            v = num[name]
            mu, sd = float(v.mean()), float(v.std())
            if not sd > 1e-12 * max(1.0, abs(mu)):
                raise ValueError(f"column {name!r} has zero variance")
            num[name] = (v - mu) / sd
            info[name] = (mu, sd)
        return replace(self, numeric=num, standardization=info)

    def to_standard_scale(self, name: str, raw):
        mu, sd = self.standardization[name]
        return (np.asarray(raw, dtype=float) - mu) / sd

    def to_raw_scale(self, name: str, value):
        mu, sd = self.standardization.get(name, (0.0, 1.0))
        return np.asarray(value, dtype=float) * sd + mu

    def align(self, unit_ids: Sequence) -> "CovariateTable":
        """Reorder rows to ``unit_ids``; every id must be present."""
        index = {u: i for i, u in enumerate(self.unit_ids)}
        missing = [u for u in unit_ids if u not in index]
        if missing:
            raise KeyError(f"units without covariates: {missing[:5]}")
        rows = np.array([index[u] for u in unit_ids], dtype=int)
        return replace(
            self,
            unit_ids=tuple(unit_ids),
            numeric={k: v[rows] for k, v in self.numeric.items()},
            categorical={k: v[rows] for k, v in self.categorical.items()},
        )

    def with_column(self, name: str, values, categorical: bool = False) -> "CovariateTable":
        num, cat = dict(self.numeric), dict(self.categorical)
        info = {k: v for k, v in self.standardization.items() if k != name}
        if categorical:
            cat[name] = values
        else:
            num[name] = values
        return replace(self, numeric=num, categorical=cat, standardization=info)

    @classmethod
    def from_mapping(cls, data: Mapping, unit_ids=None, categorical: Iterable[str] = (),
                     reference: Mapping | None = None) -> "CovariateTable":
        """Build from ``name -> values``; non-numeric dtypes become categorical."""
        categorical = set(categorical)
        num, cat = {}, {}
        n = None
        for name in data:
            if name == "unit_id":
                continue
            v = np.asarray(data[name])
            n = v.shape[0]
            if name in categorical or v.dtype.kind in "OUSb":
                cat[name] = v
            else:
                num[name] = v.astype(float)
        if unit_ids is None:
            unit_ids = data["unit_id"] if "unit_id" in data else [str(i) for i in range(n or 0)]
        return cls(tuple(str(u) for u in unit_ids), num, cat, dict(reference or {}))

    @classmethod
    def read_csv(cls, path, categorical: Iterable[str] = (), reference: Mapping | None = None) -> "CovariateTable":
        """Read ``unit_id,<col>,...``; a column is numeric iff every value parses as float."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError(f"{path}: empty covariate file") from None
            if not header or header[0] != "unit_id":
                raise ValueError(f"{path}:1: first column must be unit_id")
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) != len(header):
                    raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
                rows.append(rec)
        ids = [r[0] for r in rows]
        if len(set(ids)) != len(ids):
            dup = [u for u, c in Counter(ids).items() if c > 1]
            raise ValueError(f"{path}: duplicate unit_id {dup[:5]}")
        categorical = set(categorical)
        num, cat = {}, {}
        for j, name in enumerate(header[1:], start=1):
            col = [r[j] for r in rows]
            if name not in categorical:
                try:
                    num[name] = np.array([float(s) for s in col])
                    continue
                except ValueError:
                    pass
            cat[name] = np.array(col, dtype=object)
        return cls(tuple(ids), num, cat, dict(reference or {}))

    def write_csv(self, path, raw: bool = True) -> None:
        cols = self.columns
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unit_id"] + cols)
            for i, uid in enumerate(self.unit_ids):
                row = [uid]
                for c in cols:
                    if c in self.numeric:
                        v = self.numeric[c][i]
                        if raw and c in self.standardization:
                            v = float(self.to_raw_scale(c, v))
                        row.append(repr(float(v)))
                    else:
                        row.append(self.categorical[c][i])
                w.writerow(row)


def most_frequent(values) -> str:
    """Most frequent label; ties resolved by sort order."""
    counts = Counter(values)
    best = max(counts.values())
    return sorted(k for k, c in counts.items() if c == best)[0]
