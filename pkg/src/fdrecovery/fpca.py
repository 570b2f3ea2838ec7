"""Functional principal component analysis on a regular grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .grid import Curve, FunctionalDataset, TimeGrid


@dataclass(frozen=True, eq=False)
class FpcaResult:
    grid: TimeGrid
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    scores: np.ndarray
    variance_share: np.ndarray
    total_variance: float
    degenerate: bool = False

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def principal_functions(self) -> list[Curve]:
        return [Curve(self.grid, g) for g in self.components]

    @property
    def mean_curve(self) -> Curve:
        return Curve(self.grid, self.mean)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "t": self.grid.values.tolist(),
            "mean": self.mean.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "variance_share": self.variance_share.tolist(),
            "total_variance": self.total_variance,
            "principal_functions": self.components.tolist(),
            "degenerate": self.degenerate,
        }


def covariance_surface(ds: FunctionalDataset) -> np.ndarray:
    """Sample covariance of the curves at grid points, divisor ``n``."""
    if ds.n < 2:
        raise ValueError("covariance needs at least two curves")
    Yc = ds.curves - ds.curves.mean(axis=0)
    return Yc.T @ Yc / ds.n


def fpca(ds: FunctionalDataset, q: int, degenerate_tol: float = 1e-14) -> FpcaResult:
    """Principal functions, eigenvalues and scores of ``ds``.

    The covariance operator is discretized with trapezoid weights ``w`` and
    symmetrized as ``W^1/2 C W^1/2``. Eigenfunctions are normalized to unit
    L2 norm and signed so that their integral is nonnegative.
    """
    max_q = min(ds.n - 1, ds.grid.n_points)
    if not 1 <= q <= max_q:
        raise ValueError(f"q must lie in [1, {max_q}], got {q}")
    w = ds.grid.weights
    sw = np.sqrt(w)
    mean = ds.curves.mean(axis=0)
    C = covariance_surface(ds)
    M = sw[:, None] * C * sw[None, :]
    evals, evecs = np.linalg.eigh(M)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = float(evals.sum())

    G = (evecs[:, :q] / sw[:, None]).T
    G /= np.sqrt(G**2 @ w)[:, None]
    for j in range(q):
        G[j] *= _sign(G[j], w)
    lam = evals[:q].copy()

    degenerate = total <= degenerate_tol * max(1.0, float(np.abs(ds.curves).max()) ** 2)
    if degenerate:
        lam[:] = 0.0
        total = 0.0
    scores = (ds.curves - mean) @ (G * w).T
    share = lam / total if total > 0 else np.zeros(q)
    return FpcaResult(ds.grid, mean, G, lam, scores, share, total, degenerate)


def _sign(g, w):
    integral = g @ w
    if abs(integral) > 1e-12 * np.sqrt(g**2 @ w):
        return 1.0 if integral > 0 else -1.0
    nz = np.flatnonzero(np.abs(g) > 1e-12 * np.abs(g).max())
    return 1.0 if nz.size == 0 or g[nz[0]] > 0 else -1.0


def reconstruct(r: FpcaResult, k: int | None = None, unit_ids=()) -> FunctionalDataset:
    k = r.n_components if k is None else k
    if not 1 <= k <= r.n_components:
        raise ValueError(f"k must lie in [1, {r.n_components}], got {k}")
    Y = r.mean + r.scores[:, :k] @ r.components[:k]
    return FunctionalDataset(r.grid, Y, unit_ids)


def mode_envelopes(r: FpcaResult, multiplier: float | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Mean plus/minus ``c * g_j`` per component; ``c`` defaults to ``2 sqrt(lambda_j)``."""
    out = []
    for lam, g in zip(r.eigenvalues, r.components):
        c = 2.0 * np.sqrt(lam) if multiplier is None else multiplier
        out.append((r.mean + c * g, r.mean - c * g))
    return out


class FPCA(TransformerMixin, BaseEstimator):
    """FPCA as a transformer: curves in, scores out.

    Parameters
    ----------
    n_components : int
        Number of principal functions to keep.
    grid : TimeGrid, optional
        Sampling grid of the input columns. Defaults to 26 points per year
        starting at zero, one point per input column.
    """

    def __init__(self, n_components=4, grid=None):
        self.n_components = n_components
        self.grid = grid

    def _as_dataset(self, X):
        if isinstance(X, FunctionalDataset):
            return X
        X = np.asarray(X, dtype=float)
        grid = self.grid if self.grid is not None else TimeGrid(n_points=X.shape[1])
        return FunctionalDataset(grid, X)

    def fit(self, X, y=None):
        ds = self._as_dataset(X)
        self.result_ = fpca(ds, self.n_components)
        self.grid_ = ds.grid
        self.mean_ = self.result_.mean
        self.components_ = self.result_.components
        self.explained_variance_ = self.result_.eigenvalues
        self.explained_variance_ratio_ = self.result_.variance_share
        self.n_features_in_ = ds.grid.n_points
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        Y = X.curves if isinstance(X, FunctionalDataset) else np.asarray(X, dtype=float)
        if Y.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} grid values, got {Y.shape[1]}")
        return (Y - self.mean_) @ (self.components_ * self.grid_.weights).T

    def inverse_transform(self, scores):
        check_is_fitted(self, "components_")
        return self.mean_ + np.asarray(scores) @ self.components_
