import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tr4denkf.core import ConfigurationError, DivergenceError
from tr4denkf.models import LinearModel, Lorenz96Model, forecast, lorenz96_rhs


def test_rhs_fixed_points():
    assert np.array_equal(lorenz96_rhs(8.0 * np.ones(10), 8.0), np.zeros(10))
    assert np.array_equal(lorenz96_rhs(np.zeros(6), 8.0), 8.0 * np.ones(6))


def test_rhs_componentwise(rng):
    x = rng.standard_normal(5)
    F = 8.0
    n = 5
    expected = [(x[(i + 1) % n] - x[(i - 2) % n]) * x[(i - 1) % n] - x[i] + F for i in range(n)]
    assert np.allclose(lorenz96_rhs(x, F), expected, rtol=1e-14, atol=1e-14)


def test_rhs_needs_four_components():
    with pytest.raises(ConfigurationError):
        lorenz96_rhs(np.ones(3))


def test_equilibrium_is_kept():
    m = Lorenz96Model(n=12, steps_per_window=3)
    x = 8.0 * np.ones(12)
    assert np.array_equal(m.step(x), x)


def test_linear_model_examples():
    assert np.array_equal(LinearModel(np.eye(3)).step(np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
    assert np.array_equal(LinearModel(2 * np.eye(2)).step(np.ones(2)), [2.0, 2.0])


@given(arrays(float, 3, elements=st.integers(-100, 100).map(float)),
       arrays(float, 3, elements=st.integers(-100, 100).map(float)),
       st.integers(-5, 5), st.integers(-5, 5))
def test_linear_model_is_linear(x, y, a, b):
    # integer data keeps the arithmetic exact
    M = LinearModel(np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0], [4.0, 0.0, 1.0]]))
    assert np.array_equal(M.step(a * x + b * y), a * M.step(x) + b * M.step(y))


def test_step_is_deterministic(rng):
    m = Lorenz96Model()
    x = 8.0 + rng.standard_normal(40)
    assert np.array_equal(m.step(x), m.step(x.copy()))


def test_rk4_fourth_order(rng):
    x0 = 8.0 + rng.standard_normal(40)
    T = 0.4
    ref = Lorenz96Model(dt=T / 1600).integrate(x0, 1600)
    errs = [np.linalg.norm(Lorenz96Model(dt=T / s).integrate(x0, s) - ref) for s in (20, 40)]
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.3)


def test_columns_are_members(rng):
    m = Lorenz96Model(n=8, steps_per_window=2)
    X = 8.0 + rng.standard_normal((8, 5))
    out = m.step(X)
    for j in range(5):
        assert np.array_equal(out[:, j], m.step(X[:, j]))


def test_forecast_shape_and_start():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    traj = forecast(LinearModel(A), np.array([1.0, 0.0]), 4)
    assert traj.shape == (5, 2)
    assert np.allclose(traj[4], [1.0, 0.0])


def test_blow_up_raises():
    with pytest.raises(DivergenceError):
        Lorenz96Model(n=6, dt=5.0).integrate(1e150 * np.arange(6.0), 3)
