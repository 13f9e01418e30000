"""Stochastic (perturbed-observation) EnKF analysis step."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import DimensionError, IllConditionedError, Observation, apply_operator
from .ensemble import Ensemble, sample_covariance, stream

COND_WARN = 1e12


@dataclass(frozen=True)
class KalmanGainFactors:
    """K = L (HL)^T (HL (HL)^T + R)^{-1}, with S = L L^T never formed."""

    factor: np.ndarray
    projected: np.ndarray
    innovation_cho: tuple

    def apply(self, d) -> np.ndarray:
        """K @ d for an m-vector or an (m, k) matrix."""
        return self.factor @ (self.projected.T @ cho_solve(self.innovation_cho, d))


def kalman_gain_factors(E: Ensemble, obs: Observation) -> KalmanGainFactors:
    L = sample_covariance(E).factor
    HL = apply_operator(obs.operator, L)
    C = HL @ HL.T + np.diag(obs.noise.diagonal)
    cond = np.linalg.cond(C)
    if not np.isfinite(cond):
        raise IllConditionedError("innovation covariance is singular")
    if cond > COND_WARN:
        warnings.warn(f"innovation covariance condition number {cond:.3g} exceeds {COND_WARN:g}",
                      RuntimeWarning, stacklevel=3)
    try:
        cho = cho_factor(C, lower=True)
    except LinAlgError as exc:
        raise IllConditionedError("innovation covariance is not positive definite") from exc
    return KalmanGainFactors(L, HL, cho)


def enkf_analysis(E: Ensemble, obs: Observation, seed, perturb: bool = True) -> Ensemble:
    """Update every member with its own perturbed copy of the observation.

    Member ``i`` receives ``y + eps_i`` with ``eps_i ~ N(0, R)`` drawn from the
    stream ``(seed, i)``. ``perturb=False`` sets every ``eps_i`` to zero, which
    turns the update into the plain Kalman update of each member.
    """
    if obs.operator.n is not None and obs.operator.n != E.n:
        raise DimensionError("observation operator does not match ensemble state size")
    gain = kalman_gain_factors(E, obs)
    X = E.members
    m = obs.operator.m
    D = np.repeat(obs.value[:, None], X.shape[1], axis=1)
    if perturb:
        r_std = obs.noise.std
        for i in range(X.shape[1]):
            D[:, i] += r_std * stream(seed, i).standard_normal(m)
    D -= apply_operator(obs.operator, X)
    return Ensemble(X + gain.apply(D), E.time_index)
