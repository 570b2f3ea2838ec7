"""B-spline bases, difference penalties and tensor-product designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """B-spline basis on ``[knots[degree], knots[-degree - 1]]``.

    ``n_basis = len(knots) - degree - 1``. Clamped (repeated boundary) and
    extended knot vectors are both accepted.
    """

    knots: np.ndarray
    degree: int = 3

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or k.size < 2 * (self.degree + 1):
            raise ValueError("too few knots for the requested degree")
        if np.any(np.diff(k) < 0):
            raise ValueError("knots must be nondecreasing")
        if not k[self.degree + 1 - 1] < k[-self.degree - 1]:
            raise ValueError("knot range is empty")
        k.setflags(write=False)
        object.__setattr__(self, "knots", k)

    @classmethod
    def uniform(cls, lower: float, upper: float, n_basis: int = 10, degree: int = 3) -> "SplineBasis":
        """Equally spaced knots continued ``degree`` steps past each end.

        With equal spacing everywhere, coefficient sequences that are
        polynomial of order ``< m`` in the index give polynomial functions,
        so an order-``m`` difference penalty leaves exactly those unpenalized.
        """
        if n_basis < degree + 1:
            raise ValueError(f"n_basis={n_basis} is below degree + 1 = {degree + 1}")
        if not upper > lower:
            raise ValueError(f"empty range [{lower}, {upper}]")
        h = (upper - lower) / (n_basis - degree)
        knots = lower + h * np.arange(-degree, n_basis + 1)
        knots[degree], knots[n_basis] = lower, upper  # exact ends despite rounding
        return cls(knots, degree)

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def lower(self) -> float:
        return float(self.knots[self.degree])

    @property
    def upper(self) -> float:
        return float(self.knots[-self.degree - 1])

    def design(self, points) -> np.ndarray:
        return bspline_design(points, self)


def bspline_design(points, basis: SplineBasis, tol: float = 1e-10) -> np.ndarray:
    """Evaluate every basis function at ``points`` (Cox-de Boor recursion).

    Returns a ``len(points) x n_basis`` matrix whose rows sum to one.
    Points outside the knot range (beyond ``tol`` relative slack) raise.
    """
    x = np.atleast_1d(np.asarray(points, dtype=float))
    t = basis.knots
    p = basis.degree
    lo, hi = basis.lower, basis.upper
    slack = tol * max(1.0, hi - lo)
    if np.any(x < lo - slack) or np.any(x > hi + slack) or not np.all(np.isfinite(x)):
        bad = x[(x < lo - slack) | (x > hi + slack) | ~np.isfinite(x)]
        raise ValueError(f"points {bad[:5].tolist()} outside the basis range [{lo}, {hi}]")
    x = np.clip(x, lo, hi)

    # Degree-0 indicators; the right end belongs to the last nonempty span inside the range.
    n_spans = t.size - 1
    span = np.searchsorted(t, x, side="right") - 1
    last = np.flatnonzero(t[: basis.n_basis] < t[1 : basis.n_basis + 1])[-1]
    span = np.minimum(span, last)
    B = np.zeros((x.size, n_spans))
    B[np.arange(x.size), span] = 1.0

    for d in range(1, p + 1):
        nb = n_spans - d
        left_den = t[d : d + nb] - t[:nb]
        right_den = t[d + 1 : d + 1 + nb] - t[1 : 1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - t[:nb]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[d + 1 : d + 1 + nb] - x[:, None]) / right_den, 0.0)
        B = left * B[:, :nb] + right * B[:, 1 : nb + 1]
    return B


def difference_matrix(n_basis: int, order: int = 2) -> np.ndarray:
    if order < 1 or n_basis <= order:
        raise ValueError(f"need n_basis > order >= 1, got n_basis={n_basis}, order={order}")
    return np.diff(np.eye(n_basis), n=order, axis=0)


def difference_penalty(n_basis: int, order: int = 2) -> np.ndarray:
    """``D.T @ D`` for the ``order``-th forward difference operator ``D``."""
    D = difference_matrix(n_basis, order)
    return D.T @ D


def tensor_design(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product: row ``i`` is ``kron(A[i], B[i])``."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row-count mismatch: {A.shape[0]} vs {B.shape[0]}")
    return (A[:, :, None] * B[:, None, :]).reshape(A.shape[0], -1)


def tensor_penalty(PA: np.ndarray, PB: np.ndarray) -> np.ndarray:
    """Penalty ``PA kron I + I kron PB`` matching :func:`tensor_design`'s column order."""
    return np.kron(PA, np.eye(PB.shape[0])) + np.kron(np.eye(PA.shape[0]), PB)


def sum_to_zero_constraint(design: np.ndarray) -> np.ndarray:
    """Basis ``Z`` of the null space of ``1' design``.

    Reparametrizing a block as ``design @ Z`` forces its fitted values to
    sum to zero over the rows of ``design``.
    """
    c = design.sum(axis=0)[:, None]
    Q, _ = np.linalg.qr(c, mode="complete")
    return Q[:, 1:]
