"""Ensembles, their empirical moments and snapshot propagation.

An ensemble of ``n_ens + 1`` members is stored as an (n, n_ens + 1) matrix
whose columns are the members.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, DiagonalCovariance, DimensionError, as_state


def stream(seed, *keys: int) -> np.random.Generator:
    """Independent, reproducible generator keyed by ``(seed, *keys)``.

    ``seed`` may be an int or a sequence of ints, so streams can be nested
    (experiment -> method -> iteration -> member).
    """
    words = list(seed) if isinstance(seed, Sequence) else [seed]
    words += list(keys)
    if any(int(w) < 0 for w in words):
        raise ConfigurationError("seed words must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(w) for w in words]))


@dataclass(frozen=True)
class Ensemble:
    members: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        X = np.array(self.members, dtype=float)
        if X.ndim != 2 or X.shape[1] < 2:
            raise DimensionError(f"ensemble needs shape (n, n_ens+1) with n_ens >= 1, got {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "members", X)

    @property
    def n(self) -> int:
        return self.members.shape[0]

    @property
    def n_ens(self) -> int:
        """N_ens; the ensemble holds N_ens + 1 members."""
        return self.members.shape[1] - 1


@dataclass(frozen=True)
class SnapshotMatrix:
    """Member states at times t_0..t_N, stored as an (N+1, n, n_ens+1) array."""

    blocks: np.ndarray

    def __post_init__(self):
        b = np.array(self.blocks, dtype=float)
        if b.ndim != 3 or b.shape[2] < 2:
            raise DimensionError(f"snapshot blocks need shape (N+1, n, n_ens+1), got {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def n_times(self) -> int:
        return self.blocks.shape[0]

    @property
    def n(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_ens(self) -> int:
        return self.blocks.shape[2] - 1

    def ensemble(self, k: int) -> Ensemble:
        return Ensemble(self.blocks[k], time_index=k)

    def means(self) -> np.ndarray:
        """Ensemble mean at each time, (N+1, n)."""
        return self.blocks.mean(axis=2)

    def anomalies(self) -> np.ndarray:
        """Anomaly matrices Psi_k stacked as (N+1, n, n_ens)."""
        return (self.blocks - self.blocks.mean(axis=2, keepdims=True))[:, :, :-1]

    def stacked(self) -> np.ndarray:
        """The ((N+1) n, n_ens+1) snapshot matrix, time blocks stacked by row."""
        return self.blocks.reshape(-1, self.blocks.shape[2])


@dataclass(frozen=True)
class CovarianceFactor:
    """Sample covariance held as ``S = L L^T`` with ``L = dX / sqrt(n_ens)``."""

    factor: np.ndarray

    def matvec(self, v) -> np.ndarray:
        return self.factor @ (self.factor.T @ np.asarray(v, dtype=float))

    def trace(self) -> float:
        return float(np.sum(self.factor**2))

    def dense(self) -> np.ndarray:
        return self.factor @ self.factor.T


def sample_ensemble(mean, B: DiagonalCovariance, n_ens: int, seed) -> Ensemble:
    """Draw ``n_ens + 1`` members from N(mean, B).

    Member ``i`` is generated from its own stream keyed by ``(seed, i)``, so a
    member does not depend on how many others are drawn or in what order.
    """
    if n_ens < 1:
        raise ConfigurationError(f"n_ens must be >= 1, got {n_ens}")
    mean = as_state(mean, B.dim)
    std = B.std
    X = np.empty((mean.shape[0], n_ens + 1))
    for i in range(n_ens + 1):
        X[:, i] = mean + std * stream(seed, i).standard_normal(mean.shape[0])
    return Ensemble(X)


def recenter(E: Ensemble, mean) -> Ensemble:
    """Shift all members so the empirical mean equals ``mean``; anomalies and
    sample covariance are unchanged."""
    mean = as_state(mean, E.n)
    X = E.members - empirical_mean(E)[:, None] + mean[:, None]
    return Ensemble(X, E.time_index)


def empirical_mean(E: Ensemble) -> np.ndarray:
    return E.members.mean(axis=1)


def deviations(E: Ensemble) -> np.ndarray:
    """All ``n_ens + 1`` deviations from the mean (these sum to zero)."""
    return E.members - empirical_mean(E)[:, None]


def anomaly_matrix(E: Ensemble) -> np.ndarray:
    """Psi: the first ``n_ens`` deviations, an (n, n_ens) matrix.

    The last deviation is linearly dependent on the others and is dropped.
    """
    return deviations(E)[:, :-1]


def sample_covariance(E: Ensemble) -> CovarianceFactor:
    """S = dX dX^T / n_ens over all n_ens + 1 deviations, in factored form."""
    return CovarianceFactor(deviations(E) / np.sqrt(E.n_ens))


def propagate_ensemble(model, E0: Ensemble, n_steps: int) -> SnapshotMatrix:
    """Propagate every member through ``n_steps`` model steps and keep all
    N + 1 snapshots (block 0 is ``E0``)."""
    if n_steps < 0:
        raise ConfigurationError("n_steps must be >= 0")
    blocks = np.empty((n_steps + 1,) + E0.members.shape)
    blocks[0] = E0.members
    X = E0.members
    for k in range(n_steps):
        X = model.step(X)
        blocks[k + 1] = X
    return SnapshotMatrix(blocks)
