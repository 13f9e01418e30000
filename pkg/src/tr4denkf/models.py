"""Discrete-time model solution operators x_{k+1} = M(x_k).

Both models accept either a single state (n,) or a matrix of states (n, k)
with one state per column; columns never interact, so propagating an ensemble
in one call is bitwise identical to propagating each member separately.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, DimensionError, DivergenceError


def lorenz96_rhs(x, F: float = 8.0) -> np.ndarray:
    """Lorenz-96 tendency ``(x[i+1] - x[i-2]) * x[i-1] - x[i] + F`` (cyclic)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 4:
        raise ConfigurationError(f"Lorenz-96 needs n >= 4, got {x.shape[0]}")
    xp1 = np.roll(x, -1, axis=0)
    xm1 = np.roll(x, 1, axis=0)
    xm2 = np.roll(x, 2, axis=0)
    return (xp1 - xm2) * xm1 - x + F


def rk4_step(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_input(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[0] != n:
        raise DimensionError(f"expected state(s) with leading dimension {n}, got {x.shape}")
    return x


def _check_output(x):
    if not np.all(np.isfinite(x)):
        raise DivergenceError("model integration produced non-finite values")
    return x


@dataclass(frozen=True)
class Lorenz96Model:
    """Lorenz-96 integrated with classical RK4.

    One call to :meth:`step` advances ``steps_per_window`` RK4 steps of size
    ``dt``, i.e. from one observation time to the next.
    """

    n: int = 40
    forcing: float = 8.0
    dt: float = 0.05
    steps_per_window: int = 1

    def __post_init__(self):
        if self.n < 4:
            raise ConfigurationError(f"Lorenz-96 needs n >= 4, got {self.n}")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.steps_per_window < 1:
            raise ConfigurationError("steps_per_window must be >= 1")

    def rhs(self, x):
        return lorenz96_rhs(x, self.forcing)

    def integrate(self, x, n_steps: int):
        """Advance ``n_steps`` raw RK4 steps (used for spin-up)."""
        x = _check_input(x, self.n)
        # overflow surfaces as DivergenceError below
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(n_steps):
                x = rk4_step(self.rhs, x, self.dt)
        return _check_output(x)

    def step(self, x):
        return self.integrate(x, self.steps_per_window)


@dataclass(frozen=True)
class LinearModel:
    """x_{k+1} = A x_k."""

    A: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigurationError(f"A must be square, got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ConfigurationError("A must be finite")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def step(self, x):
        x = _check_input(x, self.n)
        return _check_output(self.A @ x)


def forecast(model, x0, n_steps: int) -> np.ndarray:
    """Trajectory ``[x_0, M(x_0), ..., M^N(x_0)]`` as an (N+1, n) array."""
    x = np.asarray(x0, dtype=float)
    traj = np.empty((n_steps + 1,) + x.shape)
    traj[0] = x
    for k in range(n_steps):
        x = model.step(x)
        traj[k + 1] = x
    return traj
