"""Reduced-space 4D-Var: ensemble-space and POD surrogate costs, their exact
derivatives and minimizers, and a compass-search inner solver.

A state along the assimilation window is written ``x_k = xref_k + Psi_k W``
where ``Psi_k`` holds the ensemble anomalies (or POD modes) at time ``k`` and
``xref_k`` is the reference trajectory, by default the ensemble mean. With a
linear model and index-selection operators the surrogate cost is exactly the
full 4D-Var cost restricted to that affine subspace.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import (
    ConfigurationError,
    DegenerateBasisError,
    DiagonalCovariance,
    DimensionError,
    IllConditionedError,
    Observation,
    apply_operator,
    as_state,
)
from .ensemble import SnapshotMatrix

ANOMALY = "anomaly"
POD = "pod"
POD_SCALINGS = ("sqrt", "normalized")
ZERO_SV_RTOL = 1e-12
# reciprocal condition estimate (squared Cholesky pivot ratio) below which
# the reduced Hessian is treated as singular
SINGULAR_RTOL = 1e-13


def build_deviation_snapshots(S: SnapshotMatrix) -> np.ndarray:
    """Stack the per-time anomaly matrices into dX^s = [Psi_0; ...; Psi_N] / sqrt(n_ens)."""
    return S.anomalies().reshape(-1, S.n_ens) / np.sqrt(S.n_ens)


@dataclass(frozen=True)
class PodBasis:
    """POD modes at every time of the window.

    ``bases`` has shape (N+1, n, n_modes); ``singular_values`` holds all
    n_ens singular values of the deviation snapshots in nonincreasing order,
    including those of truncated modes.
    """

    bases: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray
    scaling: str = "sqrt"

    @property
    def n_modes(self) -> int:
        return self.bases.shape[2]

    def truncated(self, n_modes: int) -> "PodBasis":
        if not 1 <= n_modes <= self.n_modes:
            raise ConfigurationError(f"cannot keep {n_modes} of {self.n_modes} modes")
        return PodBasis(self.bases[:, :, :n_modes], self.singular_values,
                        self.right_vectors[:, :n_modes], self.scaling)

    def stacked(self) -> np.ndarray:
        return self.bases.reshape(-1, self.n_modes)


def pod_decompose(dXs, n_times: int, scaling: str = "sqrt") -> PodBasis:
    """POD basis by the method of snapshots.

    With ``dXs = U diag(sigma) V^T`` (so that ``dXs^T dXs = V diag(sigma^2) V^T``
    is the n_ens x n_ens Gram eigendecomposition) the per-time modes are

    * ``scaling="sqrt"``:        Phi_k = Psi_k V Sigma^{-1/2}
    * ``scaling="normalized"``:  Phi_k = Psi_k V Sigma^{-1} / sqrt(n_ens),
      whose stacked columns are the orthonormal left singular vectors.

    The thin SVD of the tall snapshot matrix costs the same as forming and
    diagonalising the Gram matrix but keeps small singular values accurate,
    which the truncation below relies on. Modes with
    ``sigma <= 1e-12 * sigma_1`` are dropped.
    """
    if scaling not in POD_SCALINGS:
        raise ConfigurationError(f"unknown POD scaling {scaling!r}")
    dXs = np.asarray(dXs, dtype=float)
    n_ens = dXs.shape[1]
    if n_ens < 1 or dXs.shape[0] % n_times:
        raise DimensionError(f"deviation snapshots of shape {dXs.shape} do not split into {n_times} times")
    U, sigma, Vt = np.linalg.svd(dXs, full_matrices=False)
    if sigma.size < n_ens:
        sigma = np.concatenate([sigma, np.zeros(n_ens - sigma.size)])
    if sigma[0] == 0.0:
        raise DegenerateBasisError("all singular values are zero")
    keep = np.flatnonzero(sigma[:U.shape[1]] > ZERO_SV_RTOL * sigma[0])
    U_kept, s_kept = U[:, keep], sigma[keep]
    if scaling == "sqrt":
        # Psi V Sigma^{-1/2} = sqrt(n_ens) dXs V Sigma^{-1/2} = sqrt(n_ens) U Sigma^{1/2}
        modes = np.sqrt(n_ens) * U_kept * np.sqrt(s_kept)
    else:
        modes = U_kept
    n = dXs.shape[0] // n_times
    return PodBasis(modes.reshape(n_times, n, -1), sigma, Vt[keep].T, scaling)


def select_num_modes(sigma, gamma: float = 0.95) -> int:
    """Smallest p with sum(sigma[:p]) / sum(sigma) > gamma."""
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"gamma must lie in (0, 1), got {gamma}")
    sigma = np.asarray(sigma, dtype=float)
    total = sigma.sum()
    if not total > 0:
        raise DegenerateBasisError("all singular values are zero")
    above = np.flatnonzero(np.cumsum(sigma) / total > gamma)
    # the full ratio is 1 up to rounding, so fall back to keeping everything
    return int(above[0] + 1) if above.size else int(sigma.size)


@dataclass(frozen=True)
class ReducedProblem:
    """Quadratic surrogate of the 4D-Var cost in a reduced basis.

    For ``kind == "anomaly"`` the background term is
    ``0.5 ||d_b - Psi_0 W||^2_{B^{-1}}``; for ``kind == "pod"`` it is the
    ridge ``0.5 * n_ens * ||beta||^2``. Observation terms are
    ``0.5 ||d_k - Q_k W||^2_{R_k^{-1}}`` in both cases.
    """

    kind: str
    obs_innovations: tuple
    obs_bases: tuple
    obs_precisions: tuple
    basis0: np.ndarray | None = None
    background_innovation: np.ndarray | None = None
    background_precision: np.ndarray | None = None
    ridge: float = 0.0
    width_: int | None = None

    @property
    def width(self) -> int:
        if self.basis0 is not None:
            return self.basis0.shape[1]
        if self.obs_bases:
            return self.obs_bases[0].shape[1]
        return int(self.width_)

    def _check(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        if W.shape != (self.width,):
            raise DimensionError(f"weights of shape {W.shape}, expected ({self.width},)")
        return W

    def cost(self, W) -> float:
        W = self._check(W)
        if self.kind == ANOMALY:
            r = self.background_innovation - self.basis0 @ W
            J = 0.5 * np.dot(r * self.background_precision, r)
        else:
            J = 0.5 * self.ridge * np.dot(W, W)
        for d, Q, p in zip(self.obs_innovations, self.obs_bases, self.obs_precisions):
            r = d - Q @ W
            J += 0.5 * np.dot(r * p, r)
        return float(J)

    def hessian(self) -> np.ndarray:
        if self.kind == ANOMALY:
            H = self.basis0.T @ (self.background_precision[:, None] * self.basis0)
        else:
            H = self.ridge * np.eye(self.width)
        for Q, p in zip(self.obs_bases, self.obs_precisions):
            H += Q.T @ (p[:, None] * Q)
        return 0.5 * (H + H.T)

    def rhs(self) -> np.ndarray:
        """c such that grad J(W) = hessian() @ W - c."""
        c = np.zeros(self.width)
        if self.kind == ANOMALY:
            c += self.basis0.T @ (self.background_precision * self.background_innovation)
        for d, Q, p in zip(self.obs_innovations, self.obs_bases, self.obs_precisions):
            c += Q.T @ (p * d)
        return c

    def grad(self, W) -> np.ndarray:
        return self.hessian() @ self._check(W) - self.rhs()

    def solve(self) -> np.ndarray:
        H = self.hessian()
        try:
            cho = cho_factor(H, lower=True)
        except LinAlgError as exc:
            raise IllConditionedError("reduced Hessian is not positive definite") from exc
        diag = np.abs(np.diag(cho[0]))
        if diag.min() ** 2 <= SINGULAR_RTOL * diag.max() ** 2:
            raise IllConditionedError("reduced Hessian is numerically singular")
        return cho_solve(cho, self.rhs())


def _obs_terms(observations, bases, reference):
    n_times = bases.shape[0]
    innov, proj, prec = [], [], []
    for ob in observations:
        k = ob.time_index
        if k >= n_times:
            raise ConfigurationError(f"observation at time {k} outside window 0..{n_times - 1}")
        innov.append(ob.value - apply_operator(ob.operator, reference[k]))
        proj.append(apply_operator(ob.operator, bases[k]))
        prec.append(ob.noise.inverse_diagonal)
    return tuple(innov), tuple(proj), tuple(prec)


def _reference(S: SnapshotMatrix, reference):
    if reference is None:
        return S.means()
    reference = np.asarray(reference, dtype=float)
    if reference.shape != (S.n_times, S.n):
        raise DimensionError(f"reference trajectory shape {reference.shape} != {(S.n_times, S.n)}")
    return reference


def build_ensemble_problem(S: SnapshotMatrix, observations: list[Observation], background,
                           B: DiagonalCovariance, reference=None, bases=None) -> ReducedProblem:
    """Ensemble-space problem with ``Q_k = H_k Psi_k``,
    ``d_b = x_b - xref_0`` and ``d_k = y_k - H_k xref_k``.

    ``bases`` replaces the anomalies by any other (N+1, n, r) basis spanning
    (part of) the same space, e.g. POD modes.
    """
    ref = _reference(S, reference)
    psi = S.anomalies() if bases is None else np.asarray(bases, dtype=float)
    if psi.shape[:2] != (S.n_times, S.n):
        raise DimensionError(f"basis shape {psi.shape} does not match the snapshots")
    background = as_state(background, S.n)
    innov, proj, prec = _obs_terms(observations, psi, ref)
    return ReducedProblem(ANOMALY, innov, proj, prec, basis0=psi[0],
                          background_innovation=background - ref[0],
                          background_precision=B.inverse_diagonal)


def build_pod_problem(S: SnapshotMatrix, observations: list[Observation], pod: PodBasis,
                      reference=None) -> ReducedProblem:
    """POD problem with ``Z_k = H_k Phi_k`` and the ``0.5 n_ens ||beta||^2`` ridge."""
    ref = _reference(S, reference)
    innov, proj, prec = _obs_terms(observations, pod.bases, ref)
    return ReducedProblem(POD, innov, proj, prec, ridge=float(S.n_ens), width_=pod.n_modes)


def _require(P: ReducedProblem, kind: str):
    if P.kind != kind:
        raise ConfigurationError(f"expected a {kind!r} problem, got {P.kind!r}")


def ensemble_cost(P: ReducedProblem, W) -> float:
    _require(P, ANOMALY)
    return P.cost(W)


def ensemble_grad(P: ReducedProblem, W) -> np.ndarray:
    _require(P, ANOMALY)
    return P.grad(W)


def ensemble_hessian(P: ReducedProblem) -> np.ndarray:
    _require(P, ANOMALY)
    return P.hessian()


def solve_weights(P: ReducedProblem) -> np.ndarray:
    """Closed-form minimizer W* = H^{-1} c of the ensemble-space cost."""
    _require(P, ANOMALY)
    return P.solve()


def pod_cost(P: ReducedProblem, beta) -> float:
    _require(P, POD)
    return P.cost(beta)


def pod_grad(P: ReducedProblem, beta) -> np.ndarray:
    _require(P, POD)
    return P.grad(beta)


def pod_hessian(P: ReducedProblem) -> np.ndarray:
    _require(P, POD)
    return P.hessian()


def solve_beta(P: ReducedProblem) -> np.ndarray:
    _require(P, POD)
    return P.solve()


def reconstruct_state(bases, reference, k: int, W) -> np.ndarray:
    """``reference[k] + bases[k] @ W``; ``bases`` is (N+1, n, r)."""
    bases = np.asarray(bases)
    if not 0 <= k < bases.shape[0]:
        raise ConfigurationError(f"time index {k} outside 0..{bases.shape[0] - 1}")
    return np.asarray(reference)[k] + bases[k] @ np.asarray(W, dtype=float)


def coordinate_search(objective: Callable[[np.ndarray], float], x0, step0: float = 1.0,
                      budget: int | None = None, tol: float = 1e-6) -> np.ndarray:
    """Compass search.

    Probes ``x +/- step * e_i`` coordinate by coordinate and moves to the
    first point that improves the objective; when a whole sweep fails the
    step is halved. Stops once ``step < tol`` or after ``budget`` objective
    evaluations (default ``100 * dim``). The returned point is never worse
    than ``x0``.
    """
    x = np.array(x0, dtype=float)
    dim = x.size
    budget = 100 * dim if budget is None else budget
    if budget < 1:
        raise ConfigurationError("budget must be >= 1")
    fx = objective(x)
    evals = 1
    step = float(step0)
    start = 0
    while step >= tol and evals < budget:
        improved = False
        for j in range(2 * dim):
            i = (start + j // 2) % dim
            trial = x.copy()
            trial[i] += step if j % 2 == 0 else -step
            ft = objective(trial)
            evals += 1
            if ft < fx:
                x, fx, improved = trial, ft, True
                start = i
                break
            if evals >= budget:
                break
        if not improved:
            step *= 0.5
    return x
