"""Functional data on a shared regular grid.

Curves are stored as sampled values; integrals use the composite trapezoid
rule on the grid, which is exact for piecewise-linear integrands.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class GridMismatchError(ValueError):
    """Two curves or datasets live on incompatible grids."""


@dataclass(frozen=True)
class TimeGrid:
    """Regular grid ``t_j = start + j * step`` in years.

    ``points_per_year`` is the length of one seasonal cycle (26 for 16-day
    composites), so ``step`` defaults to its reciprocal.
    """

    start: float = 0.0
    n_points: int = 182
    points_per_year: int = 26
    step: float | None = None

    def __post_init__(self):
        if self.points_per_year < 1:
            raise ValueError("points_per_year must be a positive integer")
        if self.step is None:
            object.__setattr__(self, "step", 1.0 / self.points_per_year)
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"a grid needs at least 2 points, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @classmethod
    def from_years(cls, years: int = 7, points_per_year: int = 26, start: float = 0.0) -> "TimeGrid":
        return cls(start=start, n_points=years * points_per_year, points_per_year=points_per_year)

    @property
    def values(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.n_points)

    @property
    def end(self) -> float:
        return self.start + self.step * (self.n_points - 1)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.n_points, self.step)
        w[0] = w[-1] = 0.5 * self.step
        return w

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "step": self.step,
            "points_per_year": self.points_per_year,
            "n_points": self.n_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimeGrid":
        return cls(
            start=float(d["start"]),
            n_points=int(d["n_points"]),
            points_per_year=int(d["points_per_year"]),
            step=float(d["step"]),
        )


@dataclass(frozen=True, eq=False)
class Curve:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] != self.grid.n_points:
            raise ValueError(
                f"curve has {v.size} values but the grid has {self.grid.n_points} points"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Curve") -> "Curve":
        _check_grids(self.grid, other.grid)
        return Curve(self.grid, self.values + other.values)

    def __sub__(self, other: "Curve") -> "Curve":
        _check_grids(self.grid, other.grid)
        return Curve(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Curve":
        return Curve(self.grid, self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """``n`` curves sampled on one grid, row ``i`` belonging to ``unit_ids[i]``."""

    grid: TimeGrid
    curves: np.ndarray
    unit_ids: tuple = field(default=())

    def __post_init__(self):
        Y = np.array(self.curves, dtype=float)
        if Y.ndim == 1:
            Y = Y[None, :]
        if Y.ndim != 2 or Y.shape[0] < 1:
            raise ValueError("a functional dataset needs at least one curve")
        if Y.shape[1] != self.grid.n_points:
            raise ValueError(
                f"curves have {Y.shape[1]} columns but the grid has {self.grid.n_points} points"
            )
        if not np.all(np.isfinite(Y)):
            bad = np.flatnonzero(~np.all(np.isfinite(Y), axis=1))
            raise ValueError(f"non-finite values in curve rows {bad.tolist()}")
        ids = tuple(self.unit_ids) if len(self.unit_ids) else tuple(str(i) for i in range(Y.shape[0]))
        if len(ids) != Y.shape[0]:
            raise ValueError(f"{len(ids)} unit ids for {Y.shape[0]} curves")
        if len(set(ids)) != len(ids):
            raise ValueError("unit ids must be unique")
        Y.setflags(write=False)
        object.__setattr__(self, "curves", Y)
        object.__setattr__(self, "unit_ids", ids)

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    def __len__(self) -> int:
        return self.n

    def curve(self, i: int) -> Curve:
        return Curve(self.grid, self.curves[i])

    def with_curves(self, curves: np.ndarray) -> "FunctionalDataset":
        return FunctionalDataset(self.grid, curves, self.unit_ids)

    def subset(self, unit_ids: Sequence) -> "FunctionalDataset":
        index = {u: i for i, u in enumerate(self.unit_ids)}
        rows = [index[u] for u in unit_ids]
        return FunctionalDataset(self.grid, self.curves[rows], tuple(unit_ids))


def _check_grids(a: TimeGrid, b: TimeGrid) -> None:
    if a != b:
        raise GridMismatchError(f"incompatible domains: {a} vs {b}")


def integrate(c: Curve) -> float:
    """Trapezoid approximation of the integral of ``c`` over its grid."""
    return float(c.grid.weights @ c.values)


def inner_product(a: Curve, b: Curve) -> float:
    _check_grids(a.grid, b.grid)
    return float(a.grid.weights @ (a.values * b.values))


def l2_norm(c: Curve) -> float:
    return float(np.sqrt(inner_product(c, c)))


def mean_function(ds: FunctionalDataset) -> Curve:
    return Curve(ds.grid, ds.curves.mean(axis=0))


def center(ds: FunctionalDataset) -> FunctionalDataset:
    return ds.with_curves(ds.curves - ds.curves.mean(axis=0))


def pairwise_l2_distances(ds: FunctionalDataset) -> np.ndarray:
    Y = ds.curves * np.sqrt(ds.grid.weights)
    sq = np.sum(Y**2, axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T
    # Gram-form cancellation can leave tiny negatives; recompute exactly for small n.
    if ds.n <= 500:
        diff = Y[:, None, :] - Y[None, :, :]
        D2 = np.einsum("ijk,ijk->ij", diff, diff)
    return np.sqrt(np.maximum(D2, 0.0))


def modal_depth(ds: FunctionalDataset, quantile: float = 15.0) -> np.ndarray:
    """h-modal depth of each curve with a Gaussian kernel.

    The bandwidth is the ``quantile``-th percentile of the nonzero pairwise
    L2 distances. Larger is deeper. A dataset of identical curves gives
    equal depths for every curve.
    """
    if ds.n < 2:
        raise ValueError("modal depth needs at least two curves")
    D = pairwise_l2_distances(ds)
    iu = np.triu_indices(ds.n, k=1)
    nonzero = D[iu][D[iu] > 0]
    if nonzero.size == 0:
        return np.full(ds.n, ds.n * _gauss(0.0))
    h = np.percentile(nonzero, quantile)
    return _gauss(D / h).sum(axis=1)


def deepest_curve(ds: FunctionalDataset, quantile: float = 15.0) -> int:
    """Row index of the modal median; ties go to the lowest index."""
    return int(np.argmax(modal_depth(ds, quantile)))


def _gauss(u):
    return np.exp(-0.5 * np.square(u)) / np.sqrt(2.0 * np.pi)


def write_dataset(ds: FunctionalDataset, path: str | Path) -> tuple[Path, Path]:
    """Write ``ds`` as CSV plus a ``.grid.json`` sidecar; returns both paths."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id"] + [f"t_{j}" for j in range(ds.grid.n_points)])
        for uid, row in zip(ds.unit_ids, ds.curves):
            w.writerow([uid] + [repr(float(v)) for v in row])
    sidecar = sidecar_path(path)
    sidecar.write_text(json.dumps(ds.grid.to_dict(), indent=2, sort_keys=True) + "\n")
    return path, sidecar


def read_dataset(path: str | Path) -> FunctionalDataset:
    path = Path(path)
    grid_meta = json.loads(sidecar_path(path).read_text())
    ids, rows = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "unit_id":
            raise ValueError(f"{path}: first column must be unit_id")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    grid_meta.setdefault("n_points", len(header) - 1)
    grid = TimeGrid.from_dict(grid_meta)
    return FunctionalDataset(grid, np.array(rows, dtype=float).reshape(len(rows), -1), tuple(ids))


def sidecar_path(path: Path) -> Path:
    return path.with_suffix(".grid.json")
