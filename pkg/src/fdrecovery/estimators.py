"""scikit-learn style wrappers around the functional regression fitters.

``fit(X, Y)`` takes scalar covariates ``X`` (a :class:`CovariateTable` or a
mapping of columns) and curves ``Y`` (``n x n_points`` array or
:class:`FunctionalDataset`); ``predict(X)`` returns curves.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_covariates, check_curves, check_same_units
from .fosr import ModelSpec, TermKind, explained_variability, fit_additive, fit_pointwise_linear, predict_many
from .fosr import term_summary as _term_summary


class _FoSRBase(RegressorMixin, BaseEstimator):
    def _prepare(self, X, Y):
        X = check_covariates(X, self.categorical)
        ds = check_curves(Y, self.grid, X.unit_ids)
        return ds, check_same_units(ds, X)

    def _prepare_predict(self, X):
        check_is_fitted(self, "model_")
        X = check_covariates(X, self.categorical)
        info = getattr(self, "scaling_", {})
        if info:
            numeric = {k: ((v - info[k][0]) / info[k][1] if k in info else v) for k, v in X.numeric.items()}
            X = X.__class__(X.unit_ids, numeric, X.categorical, X.reference)
        return X

    def _standardize(self, table, cols):
        """Standardize ``cols``; remember the scaling applied here for ``predict``."""
        before = set(table.standardization)
        table = table.standardize(cols) if self.standardize else table
        self.scaling_ = {k: v for k, v in table.standardization.items() if k not in before}
        return table

    def predict(self, X):
        X = self._prepare_predict(X)
        return predict_many(self.model_, X)

    def score(self, X, Y, sample_weight=None):
        """R^2 pooled over every curve evaluation (not adjusted)."""
        pred = self.predict(X)
        Y = check_curves(Y, self.model_.grid).curves
        return 1.0 - float(np.sum((Y - pred) ** 2)) / float(np.sum((Y - Y.mean()) ** 2))

    @property
    def explained_variability_(self):
        check_is_fitted(self, "model_")
        return explained_variability(self.model_)


class PointwiseLinearFoSR(_FoSRBase):
    """Linear function-on-scalar regression fitted separately at each grid point."""

    def __init__(self, covariates=None, standardize=False, grid=None, categorical=()):
        self.covariates = covariates
        self.standardize = standardize
        self.grid = grid
        self.categorical = categorical

    def fit(self, X, Y):
        ds, table = self._prepare(X, Y)
        cols = list(self.covariates) if self.covariates is not None else list(table.numeric)
        table = self._standardize(table, cols)
        self.model_ = fit_pointwise_linear(ds, table, cols)
        self.coef_ = np.vstack([self.model_.coefficients[f"beta(t) {c}"]["curve"] for c in cols])
        self.intercept_ = self.model_.coefficients["beta0(t)"]["curve"]
        self.n_features_in_ = len(cols)
        return self


class AdditiveFoSR(_FoSRBase):
    """Penalized additive function-on-scalar regression.

    Parameters
    ----------
    spec : ModelSpec or sequence of (covariate, kind)
        Model terms. A functional intercept is added when ``spec`` is a
        sequence of pairs.
    n_basis_t, n_basis_x : int
        Basis sizes used when ``spec`` is given as pairs.
    standardize : bool
        Standardize numeric covariates on the training sample before fitting;
        ``predict`` applies the same transformation, so it takes covariates on
        the scale given to ``fit``.
    lambda_grid : sequence of float, optional
        Relative smoothing-parameter grid.
    criterion : {"loco", "gcv-curve", "gcv"}
        Smoothing-parameter selection criterion, see :func:`fit_additive`.
    """

    def __init__(self, spec=None, n_basis_t=10, n_basis_x=10, standardize=True,
                 lambda_grid=None, n_sweeps=2, criterion="loco", grid=None, categorical=()):
        self.spec = spec
        self.n_basis_t = n_basis_t
        self.n_basis_x = n_basis_x
        self.standardize = standardize
        self.lambda_grid = lambda_grid
        self.n_sweeps = n_sweeps
        self.criterion = criterion
        self.grid = grid
        self.categorical = categorical

    def _model_spec(self, table):
        if isinstance(self.spec, ModelSpec):
            return self.spec
        pairs = self.spec
        if pairs is None:
            pairs = [(c, TermKind.SMOOTH) for c in table.numeric] + [(c, TermKind.FACTOR) for c in table.categorical]
        return ModelSpec.build(pairs, self.n_basis_t, self.n_basis_x)

    def fit(self, X, Y):
        ds, table = self._prepare(X, Y)
        spec = self._model_spec(table)
        table = self._standardize(table, [c for c in spec.covariates if table.is_numeric(c)])
        kwargs = {"n_sweeps": self.n_sweeps, "criterion": self.criterion}
        if self.lambda_grid is not None:
            kwargs["lambda_grid"] = self.lambda_grid
        self.model_ = fit_additive(ds, table, spec, **kwargs)
        self.spec_ = spec
        self.edf_ = dict(self.model_.edf)
        self.lambdas_ = dict(self.model_.lambdas)
        self.n_features_in_ = len(spec.covariates)
        return self

    def term_summary(self):
        check_is_fitted(self, "model_")
        return _term_summary(self.model_)
