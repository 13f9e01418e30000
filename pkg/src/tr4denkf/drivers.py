"""End-to-end assimilation drivers: POD-4D-EnKF, iterative subspace
minimization (ISM) and the trust-region 4D-EnKF."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AssimilationError,
    ConfigurationError,
    DiagonalCovariance,
    DivergenceError,
    Observation,
    as_state,
    weighted_sq_norm,
)
from .ensemble import propagate_ensemble, recenter, sample_ensemble
from .models import forecast
from .reduced import (
    build_deviation_snapshots,
    build_ensemble_problem,
    build_pod_problem,
    coordinate_search,
    pod_cost,
    pod_decompose,
    reconstruct_state,
    select_num_modes,
    solve_beta,
)
from .trustregion import (
    TRParams,
    TRState,
    covariance_scale,
    prediction_ratio,
    solve_subproblem,
    subspace_metric,
    update_radius,
    update_solution,
)


@dataclass(frozen=True)
class AssimilationProblem:
    """A single-window strong-constraint 4D-Var problem.

    ``observations`` may hold any number of entries with time indices in
    ``0..n_steps``. ``seed`` keys every random draw made by the drivers.
    """

    model: object
    background: np.ndarray
    B: DiagonalCovariance
    observations: tuple
    n_steps: int
    n_ens: int
    seed: object = 0

    def __post_init__(self):
        xb = as_state(self.background, self.B.dim)
        object.__setattr__(self, "background", xb)
        object.__setattr__(self, "observations", tuple(self.observations))
        if self.n_ens < 1:
            raise ConfigurationError("n_ens must be >= 1")
        for ob in self.observations:
            if not 0 <= ob.time_index <= self.n_steps:
                raise ConfigurationError(f"observation time {ob.time_index} outside 0..{self.n_steps}")

    @property
    def seed_words(self) -> tuple:
        s = self.seed
        return tuple(s) if isinstance(s, (tuple, list)) else (s,)


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    reduced_cost_old: float = float("nan")
    reduced_cost_new: float = float("nan")
    rho: float = float("nan")
    radius: float = float("nan")
    lambda_b: float = float("nan")
    accepted: bool = True
    n_modes: int = 0


@dataclass
class AnalysisResult:
    method: str
    x0: np.ndarray
    trajectory: np.ndarray
    iterates: np.ndarray
    diagnostics: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.diagnostics)


def cost_and_trajectory(problem: AssimilationProblem, x0):
    """Full 4D-Var cost of ``x0`` together with its model trajectory."""
    x0 = np.asarray(x0, dtype=float)
    traj = forecast(problem.model, x0, problem.n_steps)
    J = 0.5 * weighted_sq_norm(x0 - problem.background, problem.B)
    for ob in problem.observations:
        J += 0.5 * ob.misfit(traj[ob.time_index])
    return float(J), traj


def full_cost(problem: AssimilationProblem, x0) -> float:
    """J(x0) = 0.5 ||x0 - xb||^2_{B^-1} + 0.5 sum_k ||y_k - H_k x_k||^2_{R_k^-1}."""
    return cost_and_trajectory(problem, x0)[0]


def _snapshots(problem, center, B, iteration, recentre):
    E = sample_ensemble(center, B, problem.n_ens, problem.seed_words + (iteration,))
    if recentre:
        E = recenter(E, center)
    return propagate_ensemble(problem.model, E, problem.n_steps)


def _pod_step(problem, center, iteration, gamma, scaling, inner, recentre, csm):
    S = _snapshots(problem, center, problem.B, iteration, recentre)
    pod = pod_decompose(build_deviation_snapshots(S), S.n_times, scaling)
    pod = pod.truncated(min(select_num_modes(pod.singular_values, gamma), pod.n_modes))
    P = build_pod_problem(S, problem.observations, pod)
    if inner == "closed_form":
        beta = solve_beta(P)
    elif inner == "coordinate_search":
        beta = coordinate_search(lambda b: pod_cost(P, b), np.zeros(pod.n_modes), **csm)
    else:
        raise ConfigurationError(f"unknown inner solver {inner!r}")
    x_new = reconstruct_state(pod.bases, S.means(), 0, beta)
    return x_new, pod.n_modes, P.cost(np.zeros(pod.n_modes)), P.cost(beta)


def run_ism(problem: AssimilationProblem, gamma: float = 0.95, iters: int = 5,
            inner: str = "closed_form", scaling: str = "sqrt", recentre: bool = True,
            csm: dict | None = None, method: str = "ism") -> AnalysisResult:
    """Iterative subspace minimization.

    Each iteration samples a fresh ensemble about the current iterate with the
    fixed background covariance, builds a truncated POD basis, minimizes the
    POD surrogate (closed form or compass search) and moves the iterate to the
    reconstructed initial state.
    """
    if iters < 1:
        raise ConfigurationError("iters must be >= 1")
    csm = {"step0": 1.0, "budget": None, "tol": 1e-6} | (csm or {})
    t0 = time.perf_counter()
    x = problem.background.copy()
    iterates, records = [], []
    for j in range(iters):
        x, n_modes, je_old, je_new = _pod_step(problem, x, j, gamma, scaling, inner, recentre, csm)
        J = full_cost(problem, x)
        iterates.append(x)
        records.append(IterationRecord(j, J, je_old, je_new, n_modes=n_modes))
    traj = forecast(problem.model, x, problem.n_steps)
    return AnalysisResult(method, x, traj, np.array(iterates), records, time.perf_counter() - t0)


def run_pod_4denkf(problem: AssimilationProblem, gamma: float = 0.95, scaling: str = "sqrt",
                   recentre: bool = True) -> AnalysisResult:
    """One-shot POD-4D-EnKF: a single closed-form ISM iteration."""
    return run_ism(problem, gamma, 1, "closed_form", scaling, recentre, method="pod")


@dataclass(frozen=True)
class StopCriteria:
    max_iters: int = 5
    min_trace_b: float = 0.0
    min_radius: float = 1e-6


def run_tr_4denkf(problem: AssimilationProblem, params: TRParams | None = None,
                  stop: StopCriteria | None = None, basis: str = "anomaly",
                  gamma: float = 0.95, recentre: bool = True) -> AnalysisResult:
    """Trust-region 4D-EnKF.

    Per iteration: sample an ensemble about the current iterate with the
    current (shrinking) background covariance, build the ensemble-space
    quadratic model of J around the iterate's own trajectory, solve the
    subproblem in the model-space ball of radius Delta, evaluate the trial
    initial state with a full model run, accept or reject on rho, update the
    radius and scale the sampling covariance by lambda_B(Delta).

    The cost J itself always uses the original background and covariance.
    """
    params = params or TRParams()
    stop = stop or StopCriteria()
    if basis not in ("anomaly", "pod"):
        raise ConfigurationError(f"unknown basis {basis!r}")
    t0 = time.perf_counter()
    x = problem.background.copy()
    J_x, traj_x = cost_and_trajectory(problem, x)
    B_j = problem.B
    state = TRState(params.delta0)
    iterates, records = [], []
    while state.iteration < stop.max_iters:
        if state.radius < stop.min_radius or B_j.trace() <= stop.min_trace_b:
            break
        j = state.iteration
        S = _snapshots(problem, x, B_j, j, recentre)
        if basis == "anomaly":
            bases = S.anomalies()
        else:
            pod = pod_decompose(build_deviation_snapshots(S), S.n_times, "normalized")
            bases = pod.truncated(min(select_num_modes(pod.singular_values, gamma), pod.n_modes)).bases
        rp = build_ensemble_problem(S, problem.observations, problem.background, problem.B,
                                    reference=traj_x, bases=bases)
        W = np.zeros(bases.shape[2])
        je_old = rp.cost(W)
        rec = IterationRecord(j, J_x, je_old, radius=state.radius, n_modes=bases.shape[2])
        try:
            sol = solve_subproblem(rp.grad(W), rp.hessian(), W, subspace_metric(bases[0]), state.radius)
            W_trial = W + sol.step
            x_trial = reconstruct_state(bases, traj_x, 0, W_trial)
            je_new = rp.cost(W_trial)
            try:
                J_trial, traj_trial = cost_and_trajectory(problem, x_trial)
            except DivergenceError:
                J_trial, traj_trial = float("inf"), None
            rho = prediction_ratio(J_x, J_trial, je_old, je_new)
        except AssimilationError:
            je_new, rho = je_old, 0.0
            x_trial = x
        accepted = update_solution(False, True, rho, params.eta)
        if accepted:
            x, J_x, traj_x = x_trial, J_trial, traj_trial
        state.radius = update_radius(state.radius, rho, params)
        state.last_rho = rho
        lam = covariance_scale(state.radius, params.delta_max)
        B_j = B_j.scaled(lam)
        rec.cost, rec.reduced_cost_new, rec.rho, rec.accepted, rec.lambda_b = J_x, je_new, rho, accepted, lam
        records.append(rec)
        iterates.append(x.copy())
        state.iteration += 1
    return AnalysisResult("tr", x, traj_x, np.array(iterates).reshape(-1, x.size), records,
                          time.perf_counter() - t0)
