import numpy as np
import pytest

from fdrecovery.basis import (
    SplineBasis,
    bspline_design,
    difference_matrix,
    difference_penalty,
    sum_to_zero_constraint,
    tensor_design,
    tensor_penalty,
)


def cox_de_boor(i, p, t, x, p_top=None):
    """Textbook recursive B-spline, right end closed on the last span inside the range."""
    p_top = p if p_top is None else p_top
    if p == 0:
        n_basis = len(t) - p_top - 1
        last = max(k for k in range(n_basis) if t[k] < t[k + 1])
        if i <= last and t[i] <= x < t[i + 1]:
            return 1.0
        return 1.0 if (i == last and x == t[i + 1]) else 0.0
    a = 0.0 if t[i + p] == t[i] else (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(i, p - 1, t, x, p_top)
    b = 0.0
    if t[i + p + 1] != t[i + 1]:
        b = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(i + 1, p - 1, t, x, p_top)
    return a + b


def test_degree_zero_indicator():
    basis = SplineBasis(np.array([0.0, 1.0, 2.0]), degree=0)
    np.testing.assert_array_equal(bspline_design([0.5], basis), [[1.0, 0.0]])


def test_clamped_knots_match_recursive_oracle():
    knots = np.r_[[0.0] * 3, np.linspace(0, 1, 6), [1.0] * 3]
    basis = SplineBasis(knots, 3)
    x = np.linspace(0, 1, 23)
    oracle = np.array([[cox_de_boor(i, 3, knots, xi) for i in range(basis.n_basis)] for xi in x])
    assert np.max(np.abs(bspline_design(x, basis) - oracle)) <= 1e-12
    np.testing.assert_allclose(oracle.sum(axis=1), 1.0, atol=1e-12)


def test_difference_penalty_null_space_is_linear_in_x():
    basis = SplineBasis.uniform(-1.0, 3.0, 10)
    x = np.linspace(-1, 3, 41)
    coef = 0.7 - 0.2 * np.arange(10)  # in the null space of the order-2 penalty
    values = bspline_design(x, basis) @ coef
    np.testing.assert_allclose(np.diff(values, 2), 0.0, atol=1e-12)


def test_matches_recursive_oracle():
    basis = SplineBasis.uniform(-1.3, 2.2, n_basis=10)
    x = np.linspace(-1.3, 2.2, 50)
    got = bspline_design(x, basis)
    oracle = np.array([[cox_de_boor(i, 3, basis.knots, xi) for i in range(10)] for xi in x])
    assert got.shape == (50, 10)
    assert np.max(np.abs(got - oracle)) <= 1e-12


@pytest.mark.parametrize("n_basis,degree", [(4, 3), (10, 3), (7, 2), (5, 1)])
def test_partition_of_unity_and_nonnegative(n_basis, degree):
    basis = SplineBasis.uniform(0, 7, n_basis, degree)
    assert basis.n_basis == n_basis
    B = bspline_design(np.random.default_rng(0).uniform(0, 7, 200), basis)
    assert np.all(B >= 0)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)


def test_outside_range_raises():
    basis = SplineBasis.uniform(0, 1, 6)
    with pytest.raises(ValueError):
        bspline_design([1.01], basis)
    with pytest.raises(ValueError):
        bspline_design([-0.5], basis)


def test_design_is_continuous():
    basis = SplineBasis.uniform(0, 7, 10)
    eps = 1e-7
    for x in np.linspace(0.3, 6.7, 17):
        d = np.abs(bspline_design([x + eps], basis) - bspline_design([x], basis)).max()
        assert d < 1e-5  # O(eps) with a bounded derivative


def test_difference_penalty_hand_example():
    np.testing.assert_array_equal(difference_matrix(3, 1), [[-1, 1, 0], [0, -1, 1]])
    np.testing.assert_array_equal(difference_penalty(3, 1), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


@pytest.mark.parametrize("order", [1, 2, 3])
def test_penalty_null_space(order):
    P = difference_penalty(8, order)
    assert np.ones(8) @ P @ np.ones(8) == pytest.approx(0.0, abs=1e-12)
    ev = np.linalg.eigvalsh(P)
    assert int(np.sum(np.abs(ev) < 1e-10)) == order


def test_penalty_requires_more_basis_than_order():
    with pytest.raises(ValueError):
        difference_penalty(2, 2)


def test_tensor_design_examples():
    np.testing.assert_array_equal(tensor_design(np.ones((4, 1)), np.ones((4, 1))), np.ones((4, 1)))
    a, b = np.array([[2.0, 3.0]]), np.array([[5.0, 7.0, 11.0]])
    np.testing.assert_array_equal(tensor_design(a, b), [[10, 14, 22, 15, 21, 33]])
    with pytest.raises(ValueError):
        tensor_design(np.ones((2, 1)), np.ones((3, 1)))


def test_tensor_partition_of_unity():
    x = np.random.default_rng(1).uniform(0, 1, (30, 2))
    A = bspline_design(x[:, 0], SplineBasis.uniform(0, 1, 6))
    B = bspline_design(x[:, 1], SplineBasis.uniform(0, 1, 5))
    np.testing.assert_allclose(tensor_design(A, B).sum(axis=1), 1.0, atol=1e-12)


def test_tensor_penalty_structure():
    PA, PB = difference_penalty(4, 2), difference_penalty(3, 1)
    P = tensor_penalty(PA, PB)
    # a function constant in the second margin and linear in the first is unpenalized
    v = np.kron(np.arange(4.0), np.ones(3))
    assert v @ P @ v == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(P, P.T)


def test_sum_to_zero_constraint():
    X = bspline_design(np.random.default_rng(2).uniform(0, 1, 40), SplineBasis.uniform(0, 1, 8))
    Z = sum_to_zero_constraint(X)
    assert Z.shape == (8, 7)
    np.testing.assert_allclose(np.ones(40) @ X @ Z, 0.0, atol=1e-12)
    np.testing.assert_allclose(Z.T @ Z, np.eye(7), atol=1e-12)
