import numpy as np
import pytest

from knntest.genotype import GenotypeMatrix
from knntest.kernels import (
    ComponentBasis,
    build_basis,
    hadamard_square,
    intercept_design,
    normalize_kernel,
    product_kernel,
)


def test_product_kernel_identity():
    k = product_kernel(np.eye(2), np.ones(2), center=False)
    np.testing.assert_array_equal(k, [[0.5, 0], [0, 0.5]])


def test_product_kernel_hand_example():
    x = np.array([[1, 0], [0, 1], [1, 1]], float)
    k = product_kernel(x, np.ones(2), center=False)
    expected = 0.5 * np.array([[1, 0, 1], [0, 1, 1], [1, 1, 2]])
    np.testing.assert_allclose(k, expected, atol=1e-15)


def test_product_kernel_weights_and_centering():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 3, (6, 4)).astype(float)
    w = np.array([1.0, 2.0, 0.5, 3.0])
    xc = x - x.mean(axis=0)
    np.testing.assert_allclose(product_kernel(x, w), (xc * w) @ (xc * w).T / 4, atol=1e-13)
    np.testing.assert_allclose(product_kernel(x, w) @ np.ones(6), 0, atol=1e-12)


@pytest.mark.parametrize("w", [np.zeros(2), np.array([1.0, -1.0]), np.array([1.0, np.nan]), np.ones(3)])
def test_product_kernel_rejects_bad_weights(w):
    with pytest.raises(ValueError):
        product_kernel(np.eye(2), w)


def test_product_kernel_rejects_missing():
    with pytest.raises(ValueError, match="impute"):
        product_kernel(np.array([[np.nan, 1.0], [0.0, 1.0]]), np.ones(2))


def test_hadamard_square():
    np.testing.assert_array_equal(hadamard_square(np.diag([0.5, 0.5])), np.diag([0.25, 0.25]))
    np.testing.assert_array_equal(hadamard_square(np.ones((3, 3))), np.ones((3, 3)))
    np.testing.assert_array_equal(hadamard_square(np.array([[2, 1], [1, 2]])), [[4, 1], [1, 4]])


def test_normalize_kernel():
    np.testing.assert_array_equal(normalize_kernel(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(normalize_kernel(np.diag([2.0, 2.0])), np.eye(2))
    k = np.array([[0.5, 0.1], [0.1, 0.3]])
    np.testing.assert_allclose(normalize_kernel(k), 2.5 * k)
    with pytest.raises(ValueError):
        normalize_kernel(np.zeros((2, 2)))


def test_build_basis_small():
    g = GenotypeMatrix.from_array(np.eye(2))
    b = build_basis(g, np.ones(2), center=False)
    np.testing.assert_array_equal(b.V[0], np.ones((2, 2)))
    np.testing.assert_array_equal(b.V[1], 0.5 * np.eye(2))
    np.testing.assert_array_equal(b.V[2], 0.25 * np.eye(2))
    np.testing.assert_array_equal(b.V[3], np.eye(2))
    np.testing.assert_array_equal(b.Z, np.ones((2, 1)))


def test_build_basis_hand_example_square():
    x = np.array([[1, 0], [0, 1], [1, 1]], float)
    b = build_basis(x, np.ones(2), center=False)
    assert b.V[2][0, 2] == pytest.approx(0.25)


def test_build_basis_normalize_square_first():
    rng = np.random.default_rng(3)
    x = rng.integers(0, 3, (8, 5)).astype(float)
    raw = build_basis(x, np.ones(5))
    nb = build_basis(x, np.ones(5), normalize=True)
    assert np.trace(nb.V[1]) == pytest.approx(8)
    assert np.trace(nb.V[2]) == pytest.approx(8)
    np.testing.assert_allclose(nb.V[2], normalize_kernel(raw.V[1] ** 2))


def test_intercept_design_drops_constant_columns():
    z = np.column_stack([np.ones(4), [1.0, 2.0, 3.0, 5.0]])
    d = intercept_design(4, z)
    assert d.shape == (4, 2)
    np.testing.assert_array_equal(d[:, 0], 1.0)
    with pytest.raises(ValueError):
        intercept_design(3, z)
    with pytest.raises(ValueError):
        intercept_design(2, np.array([[np.nan], [1.0]]))


def test_component_basis_validation():
    v = (np.ones((2, 2)), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        ComponentBasis(v[:3], np.ones((2, 1)))
    with pytest.raises(ValueError):
        ComponentBasis(v, np.ones((2, 2)))
    b = ComponentBasis(v, np.zeros((2, 0)))
    np.testing.assert_array_equal(b.combine([1, 0, 0, 2]), np.ones((2, 2)) + 2 * np.eye(2))
