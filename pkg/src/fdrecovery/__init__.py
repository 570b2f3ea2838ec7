"""Functional data analysis of post-event recovery curves.

Trend extraction by STL, functional PCA, and function-on-scalar regression
with linear, smooth, time-varying and bivariate terms.
"""

__version__ = "0.1.0"

from .basis import SplineBasis, bspline_design, difference_penalty, tensor_design
from .covariates import CovariateTable
from .decompose import (
    Decomposition,
    RawSeries,
    STLTrendExtractor,
    align_trends,
    extract_trend,
    loess_smooth,
    stl_decompose,
)
from .estimators import AdditiveFoSR, PointwiseLinearFoSR
from .fosr import (
    FittedModel,
    ModelSpec,
    TermKind,
    TermSpec,
    explained_variability,
    fit_additive,
    fit_pointwise_linear,
    predict,
    term_summary,
)
from .fpca import FPCA, FpcaResult, covariance_surface, fpca, reconstruct
from .grid import (
    Curve,
    FunctionalDataset,
    TimeGrid,
    center,
    integrate,
    inner_product,
    mean_function,
    modal_depth,
)
from .modelsel import CovariateGroup, SweepTable, build_full_spec, select_kind, sweep

__all__ = [
    "AdditiveFoSR",
    "CovariateGroup",
    "CovariateTable",
    "Curve",
    "Decomposition",
    "FPCA",
    "FittedModel",
    "FpcaResult",
    "FunctionalDataset",
    "ModelSpec",
    "PointwiseLinearFoSR",
    "RawSeries",
    "STLTrendExtractor",
    "SplineBasis",
    "SweepTable",
    "TermKind",
    "TermSpec",
    "TimeGrid",
    "align_trends",
    "build_full_spec",
    "bspline_design",
    "center",
    "covariance_surface",
    "difference_penalty",
    "explained_variability",
    "extract_trend",
    "fit_additive",
    "fit_pointwise_linear",
    "fpca",
    "inner_product",
    "integrate",
    "loess_smooth",
    "mean_function",
    "modal_depth",
    "predict",
    "reconstruct",
    "select_kind",
    "stl_decompose",
    "sweep",
    "tensor_design",
    "term_summary",
]
