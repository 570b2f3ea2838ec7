"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .covariates import CovariateTable
from .grid import FunctionalDataset, TimeGrid


def check_curves(Y, grid: TimeGrid | None = None, unit_ids=()) -> FunctionalDataset:
    """Coerce ``Y`` (array or dataset) into a :class:`FunctionalDataset`."""
    if isinstance(Y, FunctionalDataset):
        if grid is not None and Y.grid != grid:
            raise ValueError("response grid differs from the estimator's grid")
        return Y
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError(f"expected curves as a 2-d array, got shape {Y.shape}")
    grid = grid if grid is not None else TimeGrid(n_points=Y.shape[1])
    return FunctionalDataset(grid, Y, unit_ids)


def check_covariates(X, categorical=(), reference=None) -> CovariateTable:
    """Accept a :class:`CovariateTable` or any ``name -> column`` mapping.

    Mappings cover dicts and data frames; object/string columns and names in
    ``categorical`` become factors.
    """
    if isinstance(X, CovariateTable):
        return X
    if hasattr(X, "to_dict") and hasattr(X, "columns"):
        X = {c: np.asarray(X[c]) for c in X.columns}
    if not hasattr(X, "keys"):
        raise TypeError("covariates must be a CovariateTable or a mapping of columns")
    return CovariateTable.from_mapping(X, categorical=categorical, reference=reference)


def check_same_units(ds: FunctionalDataset, X: CovariateTable) -> CovariateTable:
    if X.n != ds.n:
        raise ValueError(f"{X.n} covariate rows for {ds.n} curves")
    if set(X.unit_ids) == set(ds.unit_ids):
        return X.align(ds.unit_ids)
    # Positional pairing when ids were generated independently.
    return CovariateTable(ds.unit_ids, X.numeric, X.categorical, X.reference, X.standardization)
