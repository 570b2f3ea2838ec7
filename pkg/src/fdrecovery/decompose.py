"""LOESS smoothing, STL decomposition and trend alignment.

The STL here follows the inner/outer loop of Cleveland et al.: cycle-subseries
smoothing, a low-pass filter to pull the trend out of the seasonal, a trend
LOESS, and bisquare robustness weights in the outer loop. Missing values
(NaN) are skipped by every local fit and filled by the fitted components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .basis import SplineBasis, bspline_design
from .grid import FunctionalDataset, TimeGrid

MAX_MISSING_FRACTION = 0.2


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RawSeries:
    """One unit's effect series on integer (16-day) calendar indices.

    ``event_index`` is the calendar index of the event start, not a position.
    Gaps in ``calendar_index`` and NaN values are both treated as missing.
    """

    unit_id: str
    calendar_index: np.ndarray
    values: np.ndarray
    event_index: int

    def __post_init__(self):
        idx = np.asarray(self.calendar_index, dtype=int)
        v = np.asarray(self.values, dtype=float)
        if idx.ndim != 1 or idx.shape != v.shape:
            raise ValueError(f"unit {self.unit_id}: calendar_index and values differ in length")
        if idx.size and np.any(np.diff(idx) <= 0):
            raise ValueError(f"unit {self.unit_id}: calendar_index must be strictly increasing")
        if idx.size == 0 or not idx[0] <= self.event_index <= idx[-1]:
            raise ValueError(f"unit {self.unit_id}: event_index {self.event_index} outside the series")
        object.__setattr__(self, "calendar_index", idx)
        object.__setattr__(self, "values", v)

    def regular(self) -> tuple[np.ndarray, np.ndarray]:
        """Calendar indices filled to a contiguous range, with NaN at gaps."""
        full = np.arange(self.calendar_index[0], self.calendar_index[-1] + 1)
        y = np.full(full.size, np.nan)
        y[self.calendar_index - full[0]] = self.values
        return full, y

    @property
    def event_position(self) -> int:
        return int(self.event_index - self.calendar_index[0])

    def n_post(self) -> int:
        return int(self.calendar_index[-1] - self.event_index + 1)

    def n_pre(self) -> int:
        return int(self.event_index - self.calendar_index[0])

    def missing_fraction(self) -> float:
        _, y = self.regular()
        return float(np.mean(~np.isfinite(y)))


@dataclass(frozen=True, eq=False)
class Decomposition:
    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    weights: np.ndarray = field(repr=False)


def _tricube(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - u**3) ** 3


def _bisquare(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - u**2) ** 2


def _local_fit(x, y, q, degree, x_eval, weights=None):
    """Evaluate a LOESS fit with window ``q`` points at ``x_eval``.

    ``weights`` (robustness times availability) may contain zeros; a zero
    weight drops the point from every neighborhood. When ``q`` exceeds the
    number of usable points the bandwidth is stretched by ``q / n``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    usable = w > 0
    xu, yu, wu = x[usable], y[usable], w[usable]
    n = xu.size
    if n == 0:
        raise InsufficientDataError("no usable points for local fit")
    x_eval = np.atleast_1d(np.asarray(x_eval, dtype=float))

    dist = np.abs(x_eval[:, None] - xu[None, :])
    if q <= n:
        h = np.partition(dist, q - 1, axis=1)[:, q - 1]
    else:
        h = dist.max(axis=1) * (q / n)
    h = np.maximum(h, 1e-12 * max(1.0, float(np.ptp(x)))) * 1.001
    K = _tricube(dist / h[:, None]) * wu[None, :]

    u = (xu[None, :] - x_eval[:, None]) / h[:, None]
    p = degree + 1
    powers = np.stack([u**k for k in range(2 * degree + 1)], axis=0)
    S = np.einsum("kmn,mn->mk", powers, K)
    T = np.einsum("kmn,mn,n->mk", powers[:p], K, yu)
    A = np.empty((x_eval.size, p, p))
    for a in range(p):
        for b in range(p):
            A[:, a, b] = S[:, a + b]
    coef = np.einsum("mij,mj->mi", np.linalg.pinv(A, rcond=1e-12, hermitian=True), T)
    return coef[:, 0]


def loess_smooth(x, y, span: float = 0.75, degree: int = 1, robust_iters: int = 0) -> np.ndarray:
    """Local polynomial regression with tricube neighborhood weights.

    Parameters
    ----------
    x, y : array_like
        Strictly increasing abscissae and their responses.
    span : float
        Fraction of points in each neighborhood, in ``(0, 1]``.
    degree : {0, 1, 2}
        Degree of the local polynomial.
    robust_iters : int
        Number of bisquare reweighting passes after the initial fit.

    Returns
    -------
    ndarray
        Fitted values at ``x``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("loess inputs must be finite")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    if degree not in (0, 1, 2):
        raise ValueError("degree must be 0, 1 or 2")
    if not 0 < span <= 1:
        raise ValueError("span must lie in (0, 1]")
    q = int(math.ceil(span * x.size))
    if q < degree + 1:
        raise InsufficientDataError(
            f"span {span} gives {q} points per window; degree {degree} needs {degree + 1}"
        )
    rw = np.ones_like(y)
    fit = _local_fit(x, y, q, degree, x, rw)
    for _ in range(robust_iters):
        rw = _robustness_weights(y - fit)
        fit = _local_fit(x, y, q, degree, x, rw)
    return fit


def _robustness_weights(resid):
    r = np.abs(resid)
    h = 6.0 * np.median(r)
    if not h > 1e-12 * max(1.0, float(r.max(initial=0.0))) or h < 1e-300:
        return np.ones_like(r)
    w = _bisquare(r / h)
    # Keep every point nominally present so neighborhoods stay well posed.
    return np.maximum(w, 1e-10)


def _odd_at_least(v: float) -> int:
    k = int(math.ceil(v))
    return k if k % 2 else k + 1


def stl_windows(n_obs: int, period: int, seasonal_span: float = 0.4, trend_span: float | None = None):
    """Resolve (seasonal, trend, low-pass) window lengths in points.

    Spans at or below one are fractions (of the cycle count for the seasonal
    window, of the series length for the trend window); larger values are
    taken as point counts.
    """
    n_cycles = n_obs / period
    ns = seasonal_span if seasonal_span > 1 else seasonal_span * n_cycles
    ns = max(3, _odd_at_least(ns))
    if trend_span is None:
        nt = 1.5 * period / (1.0 - 1.5 / ns)
        nt = _odd_at_least(nt + 1e-9) if float(nt).is_integer() else _odd_at_least(nt)
    else:
        nt = _odd_at_least(trend_span if trend_span > 1 else trend_span * n_obs)
    nl = _odd_at_least(period)
    return ns, max(3, nt), nl


def _moving_average(v, k):
    return np.convolve(v, np.full(k, 1.0 / k), mode="valid")


def stl_decompose(
    series,
    period: int = 26,
    seasonal_span: float = 0.4,
    trend_span: float | None = None,
    inner_iters: int = 2,
    robust_iters: int = 1,
    balance: bool = True,
) -> Decomposition:
    """Additive seasonal-trend decomposition by LOESS.

    ``series`` is a :class:`RawSeries` or a 1-d array (NaN marks missing).
    With ``balance`` the seasonal component is adjusted so that every
    complete cycle averages to zero; the adjustment is a smooth spline moved
    into the trend, which keeps ``trend + seasonal + remainder`` exact.
    """
    if isinstance(series, RawSeries):
        _, y = series.regular()
    else:
        y = np.asarray(series, dtype=float)
    N = y.size
    if period < 2:
        raise ValueError("period must be at least 2")
    if N < 2 * period:
        raise InsufficientDataError(f"series of length {N} is shorter than two periods ({2 * period})")
    avail = np.isfinite(y)
    if avail.sum() < 2 * period * (1 - MAX_MISSING_FRACTION) or avail.mean() < 1 - MAX_MISSING_FRACTION:
        raise InsufficientDataError(
            f"{100 * (1 - avail.mean()):.1f}% of observations are missing (limit {100 * MAX_MISSING_FRACTION:.0f}%)"
        )
    y0 = np.where(avail, y, 0.0)
    ns, nt, nl = stl_windows(N, period, seasonal_span, trend_span)

    pos = np.arange(N, dtype=float)
    trend = np.zeros(N)
    rho = np.ones(N)
    for outer in range(robust_iters + 1):
        for _ in range(inner_iters):
            detr = y0 - trend
            C = _cycle_subseries(detr, avail, rho, period, ns)
            L = _local_fit(
                np.arange(N, dtype=float),
                _moving_average(_moving_average(_moving_average(C, period), period), 3),
                nl,
                1,
                pos,
            )
            seasonal = C[period : period + N] - L
            trend = _local_fit(pos, y0 - seasonal, nt, 1, pos, rho * avail)
        if outer < robust_iters:
            resid = (y0 - trend - seasonal)[avail]
            rho = np.ones(N)
            rho[avail] = _robustness_weights(resid)

    if balance:
        shift = _cycle_balance(seasonal, period)
        seasonal = seasonal - shift
        trend = trend + shift
    remainder = np.where(avail, y - trend - seasonal, np.nan)
    return Decomposition(observed=y, trend=trend, seasonal=seasonal, remainder=remainder, weights=rho)


def _cycle_subseries(detr, avail, rho, period, ns):
    """Smooth each cycle-subseries and extend it one cycle on both ends."""
    N = detr.size
    C = np.full(N + 2 * period, np.nan)
    for k in range(period):
        idx = np.arange(k, N, period)
        w = rho[idx] * avail[idx]
        if not np.any(w > 0):
            continue
        m = idx.size
        x_eval = np.arange(-1, m + 1, dtype=float)
        fit = _local_fit(np.arange(m, dtype=float), detr[idx], ns, 1, x_eval, w)
        C[k + period * np.arange(m + 2)] = fit
    bad = ~np.isfinite(C)
    if bad.any():
        good = np.flatnonzero(~bad)
        C[bad] = np.interp(np.flatnonzero(bad), good, C[good])
    return C


def _cycle_balance(seasonal, period):
    """Smooth curve whose complete-cycle means equal those of ``seasonal``."""
    N = seasonal.size
    n_cycles = N // period
    if n_cycles < 1:
        return np.zeros(N)
    means = seasonal[: n_cycles * period].reshape(n_cycles, period).mean(axis=1)
    if np.all(np.abs(means) == 0):
        return np.zeros(N)
    degree = min(3, n_cycles - 1)
    basis = SplineBasis.uniform(0.0, N - 1.0, n_basis=n_cycles, degree=degree)
    B = bspline_design(np.arange(N, dtype=float), basis)
    M = B[: n_cycles * period].reshape(n_cycles, period, -1).mean(axis=1)
    coef = np.linalg.lstsq(M, means, rcond=None)[0]
    return B @ coef


def extract_trend(series: RawSeries, years: int = 7, points_per_year: int = 26,
                  window: str = "post", **stl_kwargs) -> np.ndarray:
    """Post-event trend segment of length ``years * points_per_year``.

    ``window="post"`` decomposes only the series from the event onward, so
    the abrupt level change at the event does not leak into the early trend;
    ``window="full"`` decomposes the whole series.
    """
    n_points = years * points_per_year
    if series.n_post() < n_points:
        raise InsufficientDataError(
            f"unit {series.unit_id}: {series.n_post()} post-event observations, need {n_points}"
        )
    if window not in ("post", "full"):
        raise ValueError("window must be 'post' or 'full'")
    stl_kwargs.setdefault("period", points_per_year)
    _, y = series.regular()
    start = series.event_position
    if window == "post":
        y, start = y[start:], 0
    dec = stl_decompose(y, **stl_kwargs)
    return dec.trend[start : start + n_points].copy()


def align_trends(trends: Sequence[tuple], grid: TimeGrid | None = None) -> FunctionalDataset:
    """Stack ``(unit_id, trend)`` pairs into a dataset on the event-relative grid."""
    grid = grid or TimeGrid.from_years(7, 26)
    ids, rows = [], []
    for uid, v in trends:
        v = np.asarray(v, dtype=float)
        if v.shape != (grid.n_points,):
            raise ValueError(f"unit {uid}: trend has length {v.size}, expected {grid.n_points}")
        ids.append(uid)
        rows.append(v)
    if not rows:
        raise ValueError("no trends to align")
    return FunctionalDataset(grid, np.vstack(rows), tuple(ids))


class STLTrendExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping raw series (rows, NaN = missing) to post-event trends.

    ``X`` is ``n_series x n_obs``; ``event_positions`` gives the column of the
    event start per row and defaults to zero.
    """

    def __init__(self, period=26, years=7, seasonal_span=0.4, trend_span=None,
                 inner_iters=2, robust_iters=1, window="post"):
        self.window = window
        self.period = period
        self.years = years
        self.seasonal_span = seasonal_span
        self.trend_span = trend_span
        self.inner_iters = inner_iters
        self.robust_iters = robust_iters

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("expected a 2-d array of series")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X, event_positions=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n_points = self.years * self.period
        positions = np.zeros(X.shape[0], dtype=int) if event_positions is None else np.asarray(event_positions)
        out = np.empty((X.shape[0], n_points))
        for i, (row, p) in enumerate(zip(X, positions)):
            if row.size - p < n_points:
                raise InsufficientDataError(f"row {i}: {row.size - p} post-event observations, need {n_points}")
            if self.window == "post":
                row, p = row[p:], 0
            dec = stl_decompose(row, self.period, self.seasonal_span, self.trend_span,
                                self.inner_iters, self.robust_iters)
            out[i] = dec.trend[p : p + n_points]
        return out
