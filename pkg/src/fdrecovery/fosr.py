"""Function-on-scalar regression.

Two fitters share one result type:

* :func:`fit_pointwise_linear` runs ordinary least squares separately at each
  grid point (no smoothing across time).
* :func:`fit_additive` stacks all ``(unit, t)`` evaluations into one penalized
  least-squares problem whose terms are built from B-spline bases in ``t``
  and/or in the covariate, with one smoothing parameter per penalized block.
  Smoothing parameters default to leave-one-curve-out cross-validation,
  since evaluations within a curve are correlated; pooled GCV is an option.

Identifiability follows the usual additive-model conventions: smooth
functions of a covariate sum to zero over the observed values, the smooth
part of the functional intercept sums to zero over the grid, and numeric
covariates are standardized, so the intercept describes a unit at the
covariate means and the reference factor level.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from .basis import (
    SplineBasis,
    bspline_design,
    difference_penalty,
    sum_to_zero_constraint,
    tensor_design,
    tensor_penalty,
)
from .covariates import CovariateTable
from .grid import Curve, FunctionalDataset, TimeGrid

log = logging.getLogger(__name__)


class TermKind(str, Enum):
    INTERCEPT = "intercept"
    CONSTANT_LINEAR = "linear"
    SMOOTH = "smooth"
    VARYING_LINEAR = "varying"
    VARYING_PLUS_SMOOTH = "varying+smooth"
    BIVARIATE = "bivariate"
    FACTOR = "factor"

    @property
    def label(self) -> str:
        return _KIND_LABELS[self]


_KIND_LABELS = {
    TermKind.INTERCEPT: "beta0(t)",
    TermKind.CONSTANT_LINEAR: "beta x",
    TermKind.SMOOTH: "s(x)",
    TermKind.VARYING_LINEAR: "beta(t) x",
    TermKind.VARYING_PLUS_SMOOTH: "beta(t) x + s(x)",
    TermKind.BIVARIATE: "gamma(t,x)",
    TermKind.FACTOR: "factor",
}

# Column order of the univariate sweep, simplest first.
SWEEP_KINDS = (
    TermKind.CONSTANT_LINEAR,
    TermKind.SMOOTH,
    TermKind.VARYING_LINEAR,
    TermKind.VARYING_PLUS_SMOOTH,
    TermKind.BIVARIATE,
)


class DesignError(ValueError):
    """The model cannot be identified from the supplied design."""


class StandardizationError(ValueError):
    pass


@dataclass(frozen=True)
class TermSpec:
    """One model term.

    ``lam`` fixes the smoothing parameter of every penalized block of the
    term (in units of the normalized penalty); ``None`` selects it by the
    fit criterion.
    """

    covariate: str
    kind: TermKind
    n_basis_t: int = 10
    n_basis_x: int = 10
    degree: int = 3
    degree_t: int | None = None
    penalty_order: int = 2
    lam: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TermKind(self.kind))

    def to_dict(self) -> dict:
        d = {"covariate": self.covariate, "kind": self.kind.value,
             "n_basis_t": self.n_basis_t, "n_basis_x": self.n_basis_x,
             "degree": self.degree, "penalty_order": self.penalty_order}
        if self.degree_t is not None:
            d["degree_t"] = self.degree_t
        if self.lam is not None:
            d["lam"] = self.lam
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TermSpec":
        return cls(**dict(d))


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple

    def __post_init__(self):
        terms = tuple(t if isinstance(t, TermSpec) else TermSpec.from_dict(t) for t in self.terms)
        n_int = sum(t.kind is TermKind.INTERCEPT for t in terms)
        if n_int != 1:
            raise ValueError(f"a model needs exactly one functional intercept, found {n_int}")
        seen = set()
        for t in terms:
            if t.kind is TermKind.INTERCEPT:
                continue
            if t.covariate in seen:
                raise ValueError(f"covariate {t.covariate!r} appears in more than one term")
            seen.add(t.covariate)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def build(cls, terms: Sequence[tuple] = (), n_basis_t: int = 10, n_basis_x: int = 10,
              intercept_lam: float | None = None) -> "ModelSpec":
        """Intercept plus ``(covariate, kind)`` pairs with shared basis sizes."""
        out = [TermSpec("intercept", TermKind.INTERCEPT, n_basis_t=n_basis_t, lam=intercept_lam)]
        for cov, kind in terms:
            out.append(TermSpec(cov, TermKind(kind), n_basis_t=n_basis_t, n_basis_x=n_basis_x))
        return cls(tuple(out))

    @property
    def covariates(self) -> list[str]:
        return [t.covariate for t in self.terms if t.kind is not TermKind.INTERCEPT]

    def to_json(self) -> str:
        return json.dumps({"terms": [t.to_dict() for t in self.terms]}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls(tuple(TermSpec.from_dict(d) for d in json.loads(text)["terms"]))

    @classmethod
    def read(cls, path) -> "ModelSpec":
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# design blocks


@dataclass(eq=False)
class _Block:
    """Columns of the stacked design contributed by one piece of a term."""

    label: str
    term: int
    role: str  # const | t_smooth | linear | factor | x_smooth | varying | bivariate
    covariate: str | None
    penalty: np.ndarray | None
    fixed_lam: float | None
    t_map: np.ndarray | None = None  # B_t -> block t-basis (constraint)
    x_basis: SplineBasis | None = None
    x_map: np.ndarray | None = None
    levels: list | None = None
    x_range: tuple | None = None

    @property
    def penalized(self) -> bool:
        return self.penalty is not None

    def unit_part(self, values) -> np.ndarray:
        """Per-unit factor of the block's design (``n_units x k``)."""
        if self.role == "factor":
            vals = np.asarray(values, dtype=object)
            unknown = set(vals) - set(self.levels)
            if unknown:
                raise ValueError(f"{self.covariate}: unknown levels {sorted(unknown)}")
            return np.column_stack([(vals == lev).astype(float) for lev in self.levels[1:]])
        x = np.asarray(values, dtype=float)
        if self.role in ("linear", "varying"):
            return x[:, None]
        return bspline_design(x, self.x_basis) @ self.x_map

    def rows(self, Bt: np.ndarray, n_units: int, values=None) -> np.ndarray:
        """Design rows for ``n_units`` units, unit-major, ``len(Bt)`` times each."""
        N = Bt.shape[0]
        if self.role == "const":
            return np.ones((n_units * N, 1))
        if self.role == "t_smooth":
            return np.tile(Bt @ self.t_map, (n_units, 1))
        U = self.unit_part(values)
        if self.role in ("linear", "factor", "x_smooth"):
            return np.repeat(U, N, axis=0)
        T = np.tile(Bt @ self.t_map, (n_units, 1))
        if self.role == "varying":
            return np.repeat(U, N, axis=0) * T
        if self.role == "bivariate":
            return tensor_design(T, np.repeat(U, N, axis=0))
        raise AssertionError(self.role)


def _build_blocks(spec: ModelSpec, X: CovariateTable, grid: TimeGrid) -> list[_Block]:
    blocks: list[_Block] = []
    for ti, term in enumerate(spec.terms):
        kind, cov = term.kind, term.covariate
        deg_t = term.degree if term.degree_t is None else term.degree_t
        Kt = term.n_basis_t
        Pt = difference_penalty(Kt, term.penalty_order)
        t_basis = SplineBasis.uniform(grid.start, grid.end, Kt, deg_t)
        Bt = bspline_design(grid.values, t_basis)

        if kind is TermKind.INTERCEPT:
            Zt = sum_to_zero_constraint(Bt)
            blocks.append(_Block("(Intercept)", ti, "const", None, None, None))
            blocks.append(_Block("Intercept(t)", ti, "t_smooth", None, Zt.T @ Pt @ Zt, term.lam, t_map=Zt))
            continue

        if kind is TermKind.FACTOR:
            if X.is_numeric(cov):
                raise DesignError(f"{cov!r} is numeric; factor terms need a categorical column")
            levels = X.levels(cov)
            if len(levels) < 2:
                raise DesignError(f"{cov!r} has a single level")
            blocks.append(_Block(f"{cov}", ti, "factor", cov, None, None, levels=levels))
            continue

        if not X.is_numeric(cov):
            raise DesignError(f"{cov!r} is categorical; only factor terms accept it")
        if not X.is_standardized(cov):
            raise StandardizationError(
                f"covariate {cov!r} is not standardized; call CovariateTable.standardize() before fitting"
            )
        x = X.numeric[cov]
        lo, hi = float(x.min()), float(x.max())
        if not hi - lo > 1e-12:
            raise DesignError(f"covariate {cov!r} has zero variance")

        def x_smooth(label):
            xb = SplineBasis.uniform(lo, hi, term.n_basis_x, term.degree)
            Bx = bspline_design(x, xb)
            Zx = sum_to_zero_constraint(Bx)
            Px = difference_penalty(term.n_basis_x, term.penalty_order)
            return _Block(label, ti, "x_smooth", cov, Zx.T @ Px @ Zx, term.lam,
                          x_basis=xb, x_map=Zx, x_range=(lo, hi))

        if kind is TermKind.CONSTANT_LINEAR:
            blocks.append(_Block(f"{cov}", ti, "linear", cov, None, None))
        elif kind is TermKind.SMOOTH:
            blocks.append(x_smooth(f"s({cov})"))
        elif kind is TermKind.VARYING_LINEAR:
            blocks.append(_Block(f"beta(t) {cov}", ti, "varying", cov, Pt, term.lam, t_map=np.eye(Kt)))
        elif kind is TermKind.VARYING_PLUS_SMOOTH:
            # The constant part of beta(t) is carried by s(x) to avoid aliasing.
            Zt = sum_to_zero_constraint(Bt)
            blocks.append(x_smooth(f"s({cov})"))
            blocks.append(_Block(f"beta(t) {cov}", ti, "varying", cov, Zt.T @ Pt @ Zt, term.lam, t_map=Zt))
        elif kind is TermKind.BIVARIATE:
            xb = SplineBasis.uniform(lo, hi, term.n_basis_x, term.degree)
            Zx = sum_to_zero_constraint(bspline_design(x, xb))
            Px = Zx.T @ difference_penalty(term.n_basis_x, term.penalty_order) @ Zx
            blocks.append(_Block(f"gamma(t, {cov})", ti, "bivariate", cov, tensor_penalty(Pt, Px), term.lam,
                                 t_map=np.eye(Kt), x_basis=xb, x_map=Zx, x_range=(lo, hi)))
        else:
            raise AssertionError(kind)
    return blocks


def _t_design(spec: ModelSpec, grid: TimeGrid, term: int, points=None) -> np.ndarray:
    ts = spec.terms[term]
    deg_t = ts.degree if ts.degree_t is None else ts.degree_t
    tb = SplineBasis.uniform(grid.start, grid.end, ts.n_basis_t, deg_t)
    return bspline_design(grid.values if points is None else points, tb)


def _column(X, name):
    if isinstance(X, CovariateTable):
        return X.numeric[name] if name in X.numeric else X.categorical[name]
    return X[name]


def _assemble(blocks, spec, grid, X, n_units):
    mats, slices, start = [], [], 0
    for b in blocks:
        vals = None if b.covariate is None else _column(X, b.covariate)
        M = b.rows(_t_design(spec, grid, b.term), n_units, vals)
        mats.append(M)
        slices.append(slice(start, start + M.shape[1]))
        start += M.shape[1]
    return np.hstack(mats), slices


# ---------------------------------------------------------------------------
# fitted model


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: ModelSpec
    grid: TimeGrid
    unit_ids: tuple
    observed: np.ndarray
    fitted: np.ndarray
    edf: dict
    edf_total: float
    lambdas: dict
    coefficients: dict
    sigma2: float
    method: str = "additive"
    block_edf: dict = field(default_factory=dict)
    block_stats: list = field(default_factory=list)
    covariates: CovariateTable | None = None
    _theta: np.ndarray | None = field(default=None, repr=False)
    _blocks: list | None = field(default=None, repr=False)
    _slices: list | None = field(default=None, repr=False)
    _cov_theta: np.ndarray | None = field(default=None, repr=False)

    @property
    def residuals(self) -> np.ndarray:
        return self.observed - self.fitted

    @property
    def n_obs(self) -> int:
        return self.observed.size

    @property
    def rss(self) -> float:
        return float(np.sum(self.residuals**2))

    @property
    def explained_variability(self) -> float:
        return explained_variability(self)

    @property
    def raw_r2(self) -> float:
        y = self.observed
        return 1.0 - self.rss / float(np.sum((y - y.mean()) ** 2))

    def to_dict(self, n_x: int = 100) -> dict:
        out = {
            "method": self.method,
            "spec": json.loads(self.spec.to_json()),
            "t": self.grid.values.tolist(),
            "explained_variability": self.explained_variability,
            "edf_total": self.edf_total,
            "sigma2": self.sigma2,
            "lambdas": self.lambdas,
            "edf": self.edf,
            "terms": {},
        }
        for label, c in self.coefficients.items():
            out["terms"][label] = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in c.items()}
        return out


def explained_variability(m: FittedModel) -> float:
    """100 times the adjusted R^2, pooled over all curve evaluations."""
    n_obs = m.observed.size
    if m.edf_total >= n_obs:
        raise ValueError(f"edf {m.edf_total:.2f} leaves no residual degrees of freedom ({n_obs} observations)")
    y = m.observed
    tss = float(np.sum((y - y.mean()) ** 2))
    rss = float(np.sum((y - m.fitted) ** 2))
    if tss == 0.0:
        return 100.0 if rss == 0.0 else 0.0
    return 100.0 * (1.0 - (rss / (n_obs - m.edf_total)) / (tss / (n_obs - 1)))


def _check_inputs(ds: FunctionalDataset, X: CovariateTable) -> CovariateTable:
    if not isinstance(ds, FunctionalDataset):
        raise TypeError("response must be a FunctionalDataset")
    if X.unit_ids != ds.unit_ids:
        X = X.align(ds.unit_ids)
    return X


# ---------------------------------------------------------------------------
# pointwise linear model


def fit_pointwise_linear(ds: FunctionalDataset, X: CovariateTable, terms: Sequence[str]) -> FittedModel:
    """OLS of each grid column on ``[1, x_1, ..., x_k]``.

    Covariates enter on the scale stored in ``X`` (standardized if ``X`` was).
    """
    X = _check_inputs(ds, X)
    terms = list(terms)
    for c in terms:
        if not X.is_numeric(c):
            raise DesignError(f"{c!r} is categorical; the pointwise linear model takes numeric columns")
    n, k = ds.n, len(terms)
    if n <= k + 1:
        raise DesignError(f"{n} units cannot support {k} covariates plus an intercept")
    D = np.column_stack([np.ones(n)] + [X.numeric[c] for c in terms])
    names = ["intercept"] + terms
    _check_rank(D, names)
    coef, *_ = np.linalg.lstsq(D, ds.curves, rcond=None)
    fitted = D @ coef
    N = ds.grid.n_points
    resid = ds.curves - fitted
    edf_total = float((k + 1) * N)
    sigma2 = float(np.sum(resid**2) / (n * N - edf_total))
    coefficients = {"beta0(t)": {"kind": TermKind.INTERCEPT.value, "curve": coef[0]}}
    for j, c in enumerate(terms, start=1):
        coefficients[f"beta(t) {c}"] = {"kind": TermKind.VARYING_LINEAR.value, "covariate": c, "curve": coef[j]}
    spec = ModelSpec(tuple([TermSpec("intercept", TermKind.INTERCEPT, lam=0.0)]
                           + [TermSpec(c, TermKind.VARYING_LINEAR, lam=0.0) for c in terms]))
    edf = {"beta0(t)": float(N), **{f"beta(t) {c}": float(N) for c in terms}}
    return FittedModel(spec, ds.grid, ds.unit_ids, ds.curves, fitted, edf, edf_total,
                       {}, coefficients, sigma2, method="pointwise", covariates=X, _theta=coef)


def _check_rank(D: np.ndarray, names: Sequence[str]) -> None:
    """Raise naming every column that lies in the span of the columns before it."""
    if np.linalg.matrix_rank(D) == D.shape[1]:
        return
    bad, rank = [], 0
    for j in range(D.shape[1]):
        r = np.linalg.matrix_rank(D[:, : j + 1])
        if r == rank:
            bad.append(names[j])
        rank = r
    raise DesignError(f"rank-deficient design; collinear columns: {bad}")


# ---------------------------------------------------------------------------
# penalized additive model


CRITERIA = ("loco", "gcv-curve", "gcv")
LAMBDA_GRID = np.logspace(-4, 4, 7)


def fit_additive(
    ds: FunctionalDataset,
    X: CovariateTable,
    spec: ModelSpec,
    lambda_grid: Sequence[float] = LAMBDA_GRID,
    n_sweeps: int = 2,
    criterion: str = "loco",
) -> FittedModel:
    """Penalized least-squares fit of an additive function-on-scalar model.

    Smoothing parameters of the penalized blocks without a fixed ``lam`` are
    chosen coordinate-wise over ``lambda_grid`` (relative to each block's
    penalty normalization), ``n_sweeps`` passes.

    Parameters
    ----------
    criterion : {"loco", "gcv-curve", "gcv"}
        ``"loco"`` is exact leave-one-curve-out cross-validation: a whole
        curve is the unit left out, so terms fitted from between-curve
        differences are charged at the curve count. ``"gcv-curve"`` is its
        generalized form, with the per-curve leverage blocks replaced by
        their average. ``"gcv"`` treats every evaluation as an independent
        point, which overfits covariates that only explain between-curve
        differences.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    X = _check_inputs(ds, X)
    grid = ds.grid
    n, N = ds.n, grid.n_points
    blocks = _build_blocks(spec, X, grid)
    B, slices = _assemble(blocks, spec, grid, X, n)
    y = ds.curves.reshape(-1)
    n_obs = y.size
    p = B.shape[1]
    if p >= n_obs:
        raise DesignError(f"{p} coefficients for {n_obs} observations")

    XtX = B.T @ B
    Xty = B.T @ y
    yty = float(y @ y)

    # Embed each penalty, scaled so that lambda = 1 balances fit and penalty.
    S = []
    for b, sl in zip(blocks, slices):
        if not b.penalized:
            S.append(None)
            continue
        E = np.zeros((p, p))
        scale = np.linalg.norm(XtX[sl, sl]) / max(np.linalg.norm(b.penalty), 1e-300)
        E[sl, sl] = b.penalty * scale
        S.append(E)

    _check_identifiable(XtX, S, blocks, slices)

    free = [i for i, b in enumerate(blocks) if b.penalized and b.fixed_lam is None]
    lam = {i: (1.0 if b.fixed_lam is None else float(b.fixed_lam)) for i, b in enumerate(blocks) if b.penalized}

    # Every curve's block B_i lies in one small column space; with Q an
    # orthonormal basis of it, B_i = Q C_i and leverages live in r dimensions.
    Bu = B.reshape(n, N, p)
    wide = Bu.transpose(1, 0, 2).reshape(N, n * p)
    ev, U = np.linalg.eigh(wide @ wide.T)
    Q = U[:, ev > ev[-1] * 1e-12]
    C = np.einsum("jr,ijp->irp", Q, Bu)
    QtY = ds.curves @ Q
    eye_r = np.eye(Q.shape[1])

    def solve(lams):
        A = XtX.copy()
        for i, v in lams.items():
            if v:
                A += v * S[i]
        try:
            c = linalg.cho_factor(A, lower=False, check_finite=False)
            Ainv = linalg.cho_solve(c, np.eye(p), check_finite=False)
        except linalg.LinAlgError:
            Ainv = np.linalg.pinv(A, hermitian=True)
        theta, F = Ainv @ Xty, Ainv @ XtX
        rss = max(yty - 2.0 * theta @ Xty + theta @ XtX @ theta, 0.0)
        return theta, F, rss, Ainv

    def score(lams):
        theta, F, rss, Ainv = solve(lams)
        edf = np.trace(F)
        if edf >= n_obs:
            return np.inf
        if criterion == "gcv":
            return n_obs * rss / (n_obs - edf) ** 2
        H = (C @ Ainv) @ C.transpose(0, 2, 1)  # per-curve leverage blocks
        if criterion == "gcv-curve":
            H = H.mean(axis=0)
        # (I - Q H Q^T)^{-1} r = r + Q K Q^T r with K = (I - H)^{-1} - I
        try:
            K = np.linalg.inv(eye_r - H) - eye_r
        except np.linalg.LinAlgError:
            return np.inf
        QtR = QtY - C @ theta
        KR = QtR @ K if K.ndim == 2 else np.einsum("irs,is->ir", K, QtR)
        return float(rss + 2.0 * np.sum(KR * QtR) + np.sum(KR**2)) / n_obs

    if free:
        for _ in range(n_sweeps):
            for i in free:
                scores = []
                for v in lambda_grid:
                    trial = dict(lam)
                    trial[i] = float(v)
                    scores.append(score(trial))
                lam[i] = float(lambda_grid[int(np.argmin(scores))])

    theta, F, _, _ = solve(lam)
    fitted = (B @ theta).reshape(n, N)
    edf_diag = np.diag(F)
    edf_total = float(edf_diag.sum())
    resid = ds.curves - fitted
    if edf_total >= n_obs:
        raise DesignError("no residual degrees of freedom")
    sigma2 = float(np.sum(resid**2) / (n_obs - edf_total))
    A = XtX + sum((v * S[i] for i, v in lam.items() if v), np.zeros((p, p)))
    cov_theta = sigma2 * np.linalg.pinv(A, hermitian=True)

    block_edf = {b.label: float(edf_diag[sl].sum()) for b, sl in zip(blocks, slices)}
    term_edf: dict = {}
    for b, sl in zip(blocks, slices):
        tlabel = _term_label(spec.terms[b.term])
        term_edf[tlabel] = term_edf.get(tlabel, 0.0) + float(edf_diag[sl].sum())

    block_stats = []
    for b, sl in zip(blocks, slices):
        contrib = B[:, sl] @ theta[sl]
        e = float(edf_diag[sl].sum())
        block_stats.append({
            "label": b.label,
            "role": b.role,
            "penalized": b.penalized,
            "edf": e,
            "ref_df": int(sl.stop - sl.start),
            "ss": float(contrib @ contrib),
        })

    coefficients = _term_functions(blocks, slices, theta, spec, grid, cov_theta)
    lambdas = {blocks[i].label: v for i, v in lam.items()}
    return FittedModel(spec, grid, ds.unit_ids, ds.curves, fitted, term_edf, edf_total, lambdas,
                       coefficients, sigma2, method="additive", block_edf=block_edf,
                       block_stats=block_stats, covariates=X, _theta=theta, _blocks=blocks,
                       _slices=slices, _cov_theta=cov_theta)


def _term_label(t: TermSpec) -> str:
    return "beta0(t)" if t.kind is TermKind.INTERCEPT else f"{t.kind.label} [{t.covariate}]"


def _check_identifiable(XtX, S, blocks, slices, tol=1e-9):
    """Error if the design is singular on the penalties' joint null space."""
    p = XtX.shape[0]
    Stot = np.zeros((p, p))
    for E, b in zip(S, blocks):
        if E is not None and b.fixed_lam != 0:
            Stot += E
    w, V = np.linalg.eigh(Stot)
    null = V[:, w <= tol * max(1.0, w.max(initial=0.0))]
    if null.shape[1] == 0:
        return
    G = null.T @ XtX @ null
    ev = np.linalg.eigvalsh(G)
    if ev.min() <= tol * max(ev.max(), 1e-300):
        weights = np.abs(null @ np.linalg.eigh(G)[1][:, 0])
        worst = {}
        for b, sl in zip(blocks, slices):
            worst[b.label] = float(weights[sl].max())
        culprits = [k for k, v in worst.items() if v > 1e-6]
        raise DesignError(f"rank-deficient design after constraints; involved blocks: {culprits}")


def _term_functions(blocks, slices, theta, spec, grid, cov_theta, n_x=100):
    out: dict = {}
    t = grid.values
    for b, sl in zip(blocks, slices):
        th = theta[sl]
        Bt = _t_design(spec, grid, b.term)
        if b.role == "const":
            out["(Intercept)"] = {"kind": "parametric", "estimate": float(th[0]),
                                  "se": float(np.sqrt(cov_theta[sl, sl][0, 0]))}
        elif b.role == "t_smooth":
            out["Intercept(t)"] = {"kind": "t_smooth", "curve": Bt @ b.t_map @ th}
        elif b.role == "linear":
            out[b.label] = {"kind": "parametric", "covariate": b.covariate, "estimate": float(th[0]),
                            "se": float(np.sqrt(cov_theta[sl, sl][0, 0]))}
        elif b.role == "factor":
            se = np.sqrt(np.diag(cov_theta[sl, sl]))
            out[b.label] = {"kind": "factor", "covariate": b.covariate, "reference": b.levels[0],
                            "levels": b.levels[1:], "estimate": th.copy(), "se": se}
        elif b.role == "x_smooth":
            xg = np.linspace(*b.x_range, n_x)
            out[b.label] = {"kind": "smooth", "covariate": b.covariate, "x": xg,
                            "values": bspline_design(xg, b.x_basis) @ b.x_map @ th}
        elif b.role == "varying":
            out[b.label] = {"kind": "varying", "covariate": b.covariate, "curve": Bt @ b.t_map @ th}
        elif b.role == "bivariate":
            xg = np.linspace(*b.x_range, n_x)
            Ux = bspline_design(xg, b.x_basis) @ b.x_map
            surf = (Bt @ b.t_map) @ th.reshape(Bt.shape[1], Ux.shape[1]) @ Ux.T
            out[b.label] = {"kind": "bivariate", "covariate": b.covariate, "x": xg, "surface": surf}
    if "(Intercept)" in out and "Intercept(t)" in out:
        out["beta0(t)"] = {"kind": "intercept",
                           "curve": out["(Intercept)"]["estimate"] + out["Intercept(t)"]["curve"]}
    return out


def intercept_curve(m: FittedModel) -> np.ndarray:
    return np.asarray(m.coefficients["beta0(t)"]["curve"])


def predict(m: FittedModel, x_row: Mapping) -> Curve:
    """Predicted curve for one unit; numeric values on the standardized scale."""
    return Curve(m.grid, predict_many(m, {k: [v] for k, v in x_row.items()})[0])


def predict_many(m: FittedModel, X: Mapping | CovariateTable) -> np.ndarray:
    """Predicted curves (rows) for the units described by ``X``."""
    if isinstance(X, CovariateTable):
        cols = {**X.numeric, **X.categorical}
    else:
        cols = {k: np.asarray(v) for k, v in X.items()}
    needed = m.spec.covariates
    missing = [c for c in needed if c not in cols]
    if missing:
        raise KeyError(f"missing covariates: {missing}")
    n_units = len(cols[needed[0]]) if needed else 1

    if m.method == "pointwise":
        pred = np.tile(m._theta[0], (n_units, 1))
        for j, c in enumerate(needed, start=1):
            pred = pred + np.asarray(cols[c], dtype=float)[:, None] * m._theta[j]
        return pred

    parts = []
    for b in m._blocks:
        if b.x_range is not None:
            x = np.asarray(cols[b.covariate], dtype=float)
            lo, hi = b.x_range
            slack = 1e-10 * max(1.0, hi - lo)
            if np.any(x < lo - slack) or np.any(x > hi + slack):
                raise ValueError(f"{b.covariate}: values outside the fitted range [{lo:.4g}, {hi:.4g}]")
        parts.append(b.rows(_t_design(m.spec, m.grid, b.term), n_units,
                            None if b.covariate is None else cols[b.covariate]))
    B = np.hstack(parts)
    return (B @ m._theta).reshape(n_units, m.grid.n_points)


def term_summary(m: FittedModel) -> dict:
    """Parametric and smooth-term tables.

    Parametric rows carry estimate, standard error and t value from the
    penalized normal-equations covariance. Smooth rows carry edf, reference
    df (block size after constraints) and an approximate F statistic
    ``||fitted block||^2 / edf / sigma^2``. These are approximations, not
    the p-value machinery of mixed-model software.
    """
    if m.method != "additive":
        raise ValueError("term_summary needs an additive fit")
    parametric, smooth = [], []
    for b, sl, st in zip(m._blocks, m._slices, m.block_stats):
        th = m._theta[sl]
        se = np.sqrt(np.diag(m._cov_theta[sl, sl]))
        if b.role in ("const", "linear"):
            parametric.append({"term": b.label, "estimate": float(th[0]), "std_error": float(se[0]),
                               "t_value": float(th[0] / se[0]) if se[0] > 0 else float("inf")})
        elif b.role == "factor":
            for lev, est, s in zip(b.levels[1:], th, se):
                parametric.append({"term": f"{b.covariate} {lev}", "estimate": float(est), "std_error": float(s),
                                   "t_value": float(est / s) if s > 0 else float("inf")})
        else:
            e = st["edf"]
            F = st["ss"] / e / m.sigma2 if e > 0 and m.sigma2 > 0 else float("inf")
            smooth.append({"term": b.label, "edf": e, "ref_df": st["ref_df"], "F": F})
    return {"parametric": parametric, "smooth": smooth, "approximate": True}
