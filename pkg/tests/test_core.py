import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tr4denkf.core import (
    ConfigurationError,
    DiagonalCovariance,
    DimensionError,
    IllConditionedError,
    Observation,
    ObservationOperator,
    apply_operator,
    as_state,
    weighted_sq_norm,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_weighted_norm_examples():
    assert weighted_sq_norm(np.zeros(3), DiagonalCovariance([1.0, 2.0, 3.0])) == 0.0
    assert weighted_sq_norm([3.0, 4.0], DiagonalCovariance.identity(2)) == 25.0
    C = DiagonalCovariance([4.0, 1.0])
    v = np.array([2.0, 3.0])
    dense = v @ np.linalg.inv(np.diag([4.0, 1.0])) @ v
    assert weighted_sq_norm(v, C) == pytest.approx(dense) == pytest.approx(10.0)


def test_weighted_norm_dimension_mismatch():
    with pytest.raises(DimensionError):
        weighted_sq_norm([1.0, 2.0, 3.0], DiagonalCovariance.identity(2))


@given(arrays(float, 6, elements=finite))
def test_weighted_norm_symmetric_and_euclidean(v):
    C = DiagonalCovariance(np.linspace(0.5, 3.0, 6))
    assert weighted_sq_norm(v, C) == weighted_sq_norm(-v, C)
    assert weighted_sq_norm(v, DiagonalCovariance.identity(6)) == pytest.approx(v @ v, rel=1e-14, abs=1e-300)


def test_covariance_validation_and_scaling():
    with pytest.raises(ConfigurationError):
        DiagonalCovariance([1.0, 0.0])
    with pytest.raises(ConfigurationError):
        DiagonalCovariance([1.0], scale=-1.0)
    C = DiagonalCovariance.identity(3, std=0.05)
    assert np.allclose(C.diagonal, 0.0025)
    assert C.scaled(0.5).trace() == pytest.approx(0.5 * C.trace())
    zero = C.scaled(0.0)
    assert zero.trace() == 0.0
    with pytest.raises(IllConditionedError):
        zero.inverse_diagonal


def test_operator_examples():
    x = np.array([7.0, 8.0, 9.0])
    assert np.array_equal(apply_operator(ObservationOperator.full(3), x), x)
    # 0-based indices
    assert np.array_equal(ObservationOperator([0])(x), [7.0])
    assert np.array_equal(ObservationOperator([0, 2])(x), [7.0, 9.0])
    assert np.array_equal(ObservationOperator([0, 2], 3).matrix() @ x, [7.0, 9.0])


def test_operator_validation():
    with pytest.raises(ConfigurationError):
        ObservationOperator([2, 1])
    with pytest.raises(ConfigurationError):
        ObservationOperator([0, 3], n=3)
    with pytest.raises(DimensionError):
        ObservationOperator([0, 1], n=3)(np.ones(4))


@given(arrays(float, 5, elements=finite), arrays(float, 5, elements=finite), finite, finite)
def test_operator_is_linear(x, y, a, b):
    H = ObservationOperator([1, 3, 4])
    assert np.array_equal(H(a * x + b * y), a * x[[1, 3, 4]] + b * y[[1, 3, 4]])
    assert np.array_equal(H(a * x + b * y), (a * x + b * y)[[1, 3, 4]])


def test_operator_on_matrix():
    X = np.arange(12.0).reshape(4, 3)
    assert np.array_equal(ObservationOperator([1, 3])(X), X[[1, 3]])


def test_observation_misfit():
    H = ObservationOperator([0, 2], 3)
    ob = Observation(0, [1.0, 2.0], H, DiagonalCovariance([0.5, 2.0]))
    assert ob.misfit([0.0, 5.0, 0.0]) == pytest.approx(1 / 0.5 + 4 / 2.0)
    with pytest.raises(DimensionError):
        Observation(0, [1.0], H, DiagonalCovariance([1.0, 1.0]))


def test_as_state():
    with pytest.raises(DimensionError):
        as_state(np.ones((2, 2)))
    with pytest.raises(FloatingPointError):
        as_state([1.0, np.nan])
