"""Trust-region machinery: quadratic model, the P-metric constrained
subproblem, acceptance ratio, solution / radius updates, the radius-driven
background covariance scaling, and a generic trust-region minimizer."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from .core import ConfigurationError, DegenerateBasisError, SubproblemError
from .reduced import ReducedProblem

RIDGE_RTOL = 1e-12
SECULAR_RTOL = 1e-10
# rho within this of 1 counts as exact agreement (rounding in the linear case)
RHO_ONE_TOL = 1e-8


@dataclass(frozen=True)
class TRParams:
    """Trust-region constants. Radii are in model-space units (the norm of a
    change in the initial state)."""

    delta_max: float = 100.0
    delta0: float = 0.1
    eta: float = 0.1
    theta1: float = 0.25
    theta2: float = 0.75
    gamma_inc: float = 1.4
    gamma_dec: float = 0.5

    def __post_init__(self):
        if not 0 < self.delta0 <= self.delta_max:
            raise ConfigurationError("need 0 < delta0 <= delta_max")
        if not 0 < self.theta1 < self.theta2 < 1:
            raise ConfigurationError("need 0 < theta1 < theta2 < 1")
        if not 0 < self.gamma_dec < 1:
            raise ConfigurationError("gamma_dec must lie in (0, 1)")
        if not self.gamma_inc > 1:
            raise ConfigurationError("gamma_inc must exceed 1")
        if not 0 < self.eta < 2:
            raise ConfigurationError("eta must lie in (0, 2)")


@dataclass
class TRState:
    radius: float
    iteration: int = 0
    last_rho: float = float("nan")


@dataclass(frozen=True)
class SubproblemSolution:
    step: np.ndarray
    multiplier: float
    on_boundary: bool

    def predicted_decrease(self, grad, hess) -> float:
        s = self.step
        return float(-(grad @ s + 0.5 * s @ hess @ s))


def quadratic_model(P: ReducedProblem, W, s) -> float:
    """m(s) = J(W) + s^T grad J(W) + 0.5 s^T hess J s."""
    s = np.asarray(s, dtype=float)
    return P.cost(W) + float(s @ P.grad(W)) + 0.5 * float(s @ P.hessian() @ s)


def subspace_metric(psi0) -> np.ndarray:
    """P = Psi_0^T Psi_0, so that ||Psi_0 z|| = ||z||_P."""
    psi0 = np.asarray(psi0, dtype=float)
    return psi0.T @ psi0


def _metric_factor(P):
    """Lower Cholesky factor of P, ridged if P is (nearly) singular."""
    r = P.shape[0]
    tr = np.trace(P)
    if not tr > 0:
        raise DegenerateBasisError("subspace metric is zero")
    try:
        L = cholesky(P, lower=True)
        if np.min(np.diag(L)) ** 2 > RIDGE_RTOL * tr / r:
            return L
    except LinAlgError:
        pass
    return cholesky(P + RIDGE_RTOL * tr / r * np.eye(r), lower=True)


def solve_subproblem(grad, hess, W, P, delta: float) -> SubproblemSolution:
    """Minimize m(s) = g^T s + 0.5 s^T H s subject to ||W + s||_P <= delta.

    With ``z = W + s`` the stationarity conditions read
    ``(H + 2 lam P) z = H W - g`` with ``lam >= 0`` and
    ``lam (||z||_P - delta) = 0``. Whitening by the Cholesky factor of P and
    diagonalising the whitened Hessian turns ``phi(lam) = ||z(lam)||_P - delta``
    into a scalar function that is solved by bracketed bisection.
    """
    if not delta > 0:
        raise ConfigurationError("radius must be positive")
    g = np.asarray(grad, dtype=float)
    H = np.asarray(hess, dtype=float)
    W = np.asarray(W, dtype=float)
    P = np.asarray(P, dtype=float)
    L = _metric_factor(P)

    # whitened problem: min b~^T u + 0.5 u^T Ht u, ||u|| <= delta, z = L^{-T} u
    b = g - H @ W
    Linv_H = solve_triangular(L, H, lower=True)
    Ht = solve_triangular(L, Linv_H.T, lower=True)
    Ht = 0.5 * (Ht + Ht.T)
    bt = solve_triangular(L, b, lower=True)
    mu, Qm = np.linalg.eigh(Ht)
    a = Qm.T @ bt
    scale = max(np.max(np.abs(mu)), 1e-300)

    def u_norm(nu):
        return np.sqrt(np.sum((a / (mu + nu)) ** 2))

    def finish(u, nu, boundary):
        z = solve_triangular(L.T, u, lower=False)
        s = z - W
        if not np.all(np.isfinite(s)):
            raise SubproblemError("non-finite subproblem step")
        return SubproblemSolution(s, 0.5 * nu, boundary)

    if mu[0] > 1e-14 * scale and u_norm(0.0) <= delta:
        return finish(-Qm @ (a / mu), 0.0, False)

    nu_lo = max(0.0, -mu[0])
    hard = np.abs(mu - mu[0]) <= 1e-12 * scale
    if nu_lo > 0 or mu[0] <= 1e-14 * scale:
        # the secular function may stay below zero as nu -> nu_lo (hard case)
        easy = ~hard
        a_soft = a[easy] / (mu[easy] + nu_lo) if np.any(easy) else np.zeros(0)
        if np.all(np.abs(a[hard]) <= 1e-14 * max(np.linalg.norm(a), 1e-300)) \
                and np.linalg.norm(a_soft) <= delta:
            coef = np.zeros_like(a)
            coef[easy] = -a_soft
            tau = np.sqrt(max(delta**2 - np.sum(a_soft**2), 0.0))
            coef[np.flatnonzero(hard)[0]] = tau
            return finish(Qm @ coef, nu_lo, True)

    # bracket: phi(nu_lo+) > 0, grow nu_hi geometrically until phi(nu_hi) < 0
    width = max(np.linalg.norm(bt) / delta, 1e-12 * scale, 1e-300)
    nu_hi = nu_lo + width
    for _ in range(200):
        if u_norm(nu_hi) < delta:
            break
        width *= 2.0
        nu_hi = nu_lo + width
    else:
        raise SubproblemError("could not bracket the secular equation")
    lo, hi = nu_lo, nu_hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if u_norm(mid) > delta:
            lo = mid
        else:
            hi = mid
        if abs(u_norm(hi) - delta) <= SECULAR_RTOL * delta:
            break
    # the upper end of the bracket is always feasible
    return finish(-Qm @ (a / (mu + hi)), hi, True)


def prediction_ratio(J_old: float, J_new: float, JE_old: float, JE_new: float) -> float:
    """Actual over predicted decrease; 0 when the predicted decrease vanishes."""
    denom = JE_old - JE_new
    if not np.isfinite(denom) or abs(denom) <= 1e-14 * (1.0 + abs(JE_old)):
        return 0.0
    if not np.isfinite(J_new):
        return float("-inf")
    return float((J_old - J_new) / denom)


def update_solution(x_current, x_trial, rho: float, eta: float):
    """Keep ``x_current`` when rho <= eta, otherwise accept ``x_trial``."""
    return x_current if rho <= eta else x_trial


def update_radius(delta: float, rho: float, params: TRParams, cap: bool = True) -> float:
    """Radius update.

    rho < theta1 shrinks by gamma_dec; theta2 <= rho <= 1 grows by gamma_inc
    (capped at delta_max unless ``cap=False``); everything else, including
    rho > 1, keeps the radius. The upper edge of the growth band is widened
    by ``RHO_ONE_TOL`` so a model that is exact up to rounding still grows.
    """
    if rho < params.theta1:
        return delta * params.gamma_dec
    if params.theta2 <= rho <= 1.0 + RHO_ONE_TOL:
        grown = delta * params.gamma_inc
        return min(grown, params.delta_max) if cap else grown
    return delta


def covariance_scale(delta: float, delta_max: float) -> float:
    """lambda_B = delta_max / (delta_max + delta), from 1 at delta = 0 down to 1/2 at delta_max."""
    if delta < 0 or delta_max <= 0:
        raise ConfigurationError("need delta >= 0 and delta_max > 0")
    return delta_max / (delta_max + delta)


@dataclass
class TrustRegionResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list)


def generic_trust_region(fun: Callable, grad: Callable, hess: Callable, x0,
                         params: TRParams | None = None, tol: float = 1e-8,
                         max_iter: int = 500) -> TrustRegionResult:
    """Basic trust-region minimization with a Euclidean ball constraint.

    The radius grows without the ``delta_max`` cap and is left unchanged when
    rho > 1. Stops when ``||grad|| <= tol``, or when an interior (Newton) step
    predicts a decrease below rounding level, i.e. the model minimum has been
    reached to machine precision. After ``max_iter`` iterations ``converged``
    is False and the current point is returned.
    """
    params = params or TRParams()
    x = np.array(x0, dtype=float)
    f = float(fun(x))
    delta = params.delta0
    history = []
    eye = np.eye(x.size)
    zero = np.zeros(x.size)
    for j in range(max_iter):
        g = np.asarray(grad(x), dtype=float)
        if np.linalg.norm(g) <= tol:
            return TrustRegionResult(x, f, True, j, history)
        G = np.asarray(hess(x), dtype=float)
        sol = solve_subproblem(g, G, zero, eye, delta)
        pred = sol.predicted_decrease(g, G)
        if not sol.on_boundary and pred <= 1e-14 * (1.0 + abs(f)):
            return TrustRegionResult(x, f, True, j, history)
        f_trial = float(fun(x + sol.step))
        rho = prediction_ratio(f, f_trial, f, f - pred)
        history.append({"f": f, "rho": rho, "radius": delta})
        if rho > params.eta:
            x, f = x + sol.step, f_trial
        delta = update_radius(delta, rho, params, cap=False)
    g = np.asarray(grad(x), dtype=float)
    return TrustRegionResult(x, f, bool(np.linalg.norm(g) <= tol), max_iter, history)
