"""Shared numeric types: diagonal covariances, index-selection observation
operators, observations, and the weighted norm used by every cost function."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AssimilationError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AssimilationError, ValueError):
    pass


class ConfigurationError(AssimilationError, ValueError):
    pass


class DivergenceError(AssimilationError, FloatingPointError):
    """A model integration produced non-finite values."""


class IllConditionedError(AssimilationError, np.linalg.LinAlgError):
    pass


class DegenerateBasisError(AssimilationError):
    """The ensemble or POD basis carries no usable directions."""


class SubproblemError(AssimilationError):
    """The trust-region subproblem could not be solved."""


def as_state(values, n: int | None = None) -> np.ndarray:
    """Return ``values`` as a 1-D float array, checking length and finiteness."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"state must be 1-D, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise DimensionError(f"state length {x.shape[0]} != {n}")
    if not np.all(np.isfinite(x)):
        raise DivergenceError("state has non-finite entries")
    return x


@dataclass(frozen=True)
class DiagonalCovariance:
    """Covariance ``scale * diag(variances)``.

    A zero ``scale`` is accepted so that degenerate (noise-free) ensembles can
    be built in tests; such a covariance has no inverse.
    """

    variances: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        v = np.array(self.variances, dtype=float, ndmin=1)
        if v.ndim != 1:
            raise DimensionError("variances must be a vector")
        if not np.all(v > 0) or not np.all(np.isfinite(v)):
            raise ConfigurationError("all variances must be positive and finite")
        if not (self.scale >= 0 and np.isfinite(self.scale)):
            raise ConfigurationError(f"scale must be >= 0, got {self.scale}")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def identity(cls, n: int, std: float = 1.0) -> "DiagonalCovariance":
        """``std**2 * I_n``."""
        return cls(np.ones(n), std**2)

    @property
    def dim(self) -> int:
        return self.variances.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.scale * self.variances

    @property
    def inverse_diagonal(self) -> np.ndarray:
        if self.scale == 0:
            raise IllConditionedError("zero-scale covariance has no inverse")
        return 1.0 / self.diagonal

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.diagonal)

    def trace(self) -> float:
        return float(np.sum(self.diagonal))

    def scaled(self, factor: float) -> "DiagonalCovariance":
        return DiagonalCovariance(self.variances, self.scale * factor)

    def subset(self, indices) -> "DiagonalCovariance":
        return DiagonalCovariance(self.variances[np.asarray(indices)], self.scale)

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal)


def weighted_sq_norm(v, cov: DiagonalCovariance) -> float:
    """Return ``v^T C^{-1} v`` for a diagonal covariance ``C``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (cov.dim,):
        raise DimensionError(f"vector shape {v.shape} does not match covariance dim {cov.dim}")
    return float(np.dot(v * cov.inverse_diagonal, v))


@dataclass(frozen=True)
class ObservationOperator:
    """Linear observation operator that selects ``observed_indices`` of the
    state (0-based, strictly increasing)."""

    observed_indices: np.ndarray
    n: int | None = None

    def __post_init__(self):
        idx = np.array(self.observed_indices, dtype=np.intp, ndmin=1)
        if idx.ndim != 1 or idx.size == 0:
            raise ConfigurationError("an operator needs at least one observed index")
        if np.any(np.diff(idx) <= 0):
            raise ConfigurationError("observed indices must be strictly increasing")
        if idx[0] < 0 or (self.n is not None and idx[-1] >= self.n):
            raise ConfigurationError(f"observed index out of range for n={self.n}")
        idx.setflags(write=False)
        object.__setattr__(self, "observed_indices", idx)

    @classmethod
    def full(cls, n: int) -> "ObservationOperator":
        return cls(np.arange(n), n)

    @property
    def m(self) -> int:
        return self.observed_indices.shape[0]

    def __call__(self, x) -> np.ndarray:
        return apply_operator(self, x)

    def matrix(self, n: int | None = None) -> np.ndarray:
        """Dense 0/1 matrix form (m x n); for oracles and small problems."""
        n = self.n if n is None else n
        H = np.zeros((self.m, n))
        H[np.arange(self.m), self.observed_indices] = 1.0
        return H


def apply_operator(H: ObservationOperator, x) -> np.ndarray:
    """Select the observed components of ``x``.

    ``x`` may also be an (n, k) matrix, in which case rows are selected
    column-wise (used to project whole anomaly matrices at once).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if H.n is not None and n != H.n:
        raise DimensionError(f"operator built for n={H.n}, got state of length {n}")
    if H.observed_indices[-1] >= n:
        raise ConfigurationError(f"observed index {H.observed_indices[-1]} out of range for n={n}")
    return x[H.observed_indices]


@dataclass(frozen=True)
class Observation:
    """Data ``value`` observed at time index ``time_index`` through
    ``operator`` with noise covariance ``noise``."""

    time_index: int
    value: np.ndarray
    operator: ObservationOperator
    noise: DiagonalCovariance = field(repr=False)

    def __post_init__(self):
        y = np.array(self.value, dtype=float, ndmin=1)
        if y.shape != (self.operator.m,):
            raise DimensionError(f"observation length {y.shape} != operator output {self.operator.m}")
        if self.noise.dim != self.operator.m:
            raise DimensionError("noise covariance dim does not match observation length")
        if self.time_index < 0:
            raise ConfigurationError("time_index must be >= 0")
        y.setflags(write=False)
        object.__setattr__(self, "value", y)
        object.__setattr__(self, "time_index", int(self.time_index))

    def misfit(self, x) -> float:
        """``||y - H x||^2_{R^{-1}}``."""
        return weighted_sq_norm(self.value - apply_operator(self.operator, x), self.noise)
