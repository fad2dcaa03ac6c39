import numpy as np
import pytest

from app.core.exceptions import NumericError
from app.utils.power_iteration import power_iteration


def test_identity_has_unit_eigenvalue():
    mu, v, _ = power_iteration(np.eye(4))
    assert mu == pytest.approx(1.0)
    assert v.sum() == pytest.approx(1.0)


def test_symmetric_two_by_two():
    mu, v, _ = power_iteration(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert mu == pytest.approx(3.0)
    assert np.allclose(v, [0.5, 0.5])


def test_weighted_normalization_and_random_positive_matrix():
    rng = np.random.default_rng(7)
    matrix = rng.uniform(0.1, 1.0, size=(6, 6))
    weights = rng.uniform(0.5, 2.0, size=6)
    mu, v, _ = power_iteration(matrix, weights, tol=1e-12)
    assert mu == pytest.approx(max(abs(np.linalg.eigvals(matrix))), rel=1e-9)
    assert weights @ v == pytest.approx(1.0)
    assert np.all(v > 0)


def test_zero_matrix_gives_zero():
    mu, _, iterations = power_iteration(np.zeros((3, 3)))
    assert mu == 0.0
    assert iterations == 1


def test_stalled_iteration_raises():
    with pytest.raises(NumericError):
        power_iteration(np.array([[3.0, 1.0], [1.0, 1.0]]), max_iter=2, start=np.array([1.0, 0.0]))
