"""Twin experiments: a known truth generates observations, every selected
method assimilates them, and errors are measured against the truth."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import AssimilationError, DiagonalCovariance, Observation, ObservationOperator, ConfigurationError
from ..drivers import AnalysisResult, AssimilationProblem, StopCriteria, run_ism, run_pod_4denkf, run_tr_4denkf
from ..ensemble import stream
from ..models import LinearModel, Lorenz96Model, forecast
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# stream tags under the experiment seed
TRUTH, OBS_NOISE, BACKGROUND, ENSEMBLES = 0, 1, 2, 3


def rmse(truth, analysis) -> float:
    """sqrt( (1/N) sum_{k=0}^{N} ||x_true_k - x_a_k||^2 ) over N+1 states.

    The normalization is 1/N for N+1 terms; a single-state trajectory
    (N = 0) uses N = 1.
    """
    truth = np.asarray(truth, dtype=float)
    analysis = np.asarray(analysis, dtype=float)
    if truth.shape != analysis.shape or truth.ndim != 2:
        raise ConfigurationError(f"trajectory shapes differ: {truth.shape} vs {analysis.shape}")
    N = max(truth.shape[0] - 1, 1)
    return math.sqrt(float(np.sum((truth - analysis) ** 2)) / N)


def rmse_per_time(truth, analysis) -> np.ndarray:
    """Root mean square over state components at each time."""
    return np.sqrt(np.mean((np.asarray(truth) - np.asarray(analysis)) ** 2, axis=1))


def make_observation_cycle(n: int, fraction: float, count: int, seed=None) -> list[ObservationOperator]:
    """``count`` masks each observing floor(fraction * n) components.

    Mask ``c`` takes a contiguous run of an index ordering (the identity, or
    a seeded permutation) starting at ``c * n // count``, so the masks are
    disjoint whenever ``count * m <= n`` and spread evenly otherwise.
    Observation time ``k`` uses mask ``k % count``.
    """
    m = int(math.floor(fraction * n + 1e-12))
    if m < 1 or fraction > 1:
        raise ConfigurationError(f"fraction {fraction} observes nothing (or too much) for n={n}")
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    order = np.arange(n) if seed is None else stream(seed).permutation(n)
    masks = []
    for c in range(count):
        start = c * n // count
        idx = np.sort(order[(start + np.arange(m)) % n])
        masks.append(ObservationOperator(idx, n))
    return masks


def build_model(config: ExperimentConfig):
    mc = config.model
    if mc.kind == "lorenz96":
        return Lorenz96Model(mc.n, mc.forcing, mc.dt, mc.steps_per_window)
    if mc.kind == "linear":
        return LinearModel(np.eye(mc.n) if mc.matrix is None else np.array(mc.matrix))
    raise ConfigurationError(f"unknown model kind {mc.kind!r}")


@dataclass
class TwinSetup:
    model: object
    truth: np.ndarray
    observations: list
    background: np.ndarray
    B: DiagonalCovariance

    def problem(self, config: ExperimentConfig) -> AssimilationProblem:
        return AssimilationProblem(self.model, self.background, self.B, self.observations,
                                   config.n_steps, config.n_ens, (config.seed, ENSEMBLES))


def spin_up(model, seed, n_steps: int = 500) -> np.ndarray:
    """True initial state: Lorenz-96 is run ``n_steps`` RK4 steps from a
    random perturbation of its equilibrium; other models start from a
    standard normal draw."""
    rng = stream(seed, TRUTH)
    if isinstance(model, Lorenz96Model):
        x = model.forcing * np.ones(model.n) + rng.standard_normal(model.n)
        return model.integrate(x, n_steps)
    return rng.standard_normal(model.n)


def make_twin(config: ExperimentConfig) -> TwinSetup:
    model = build_model(config)
    n, seed = config.model.n, config.seed
    x0 = spin_up(model, seed, config.model.spinup_steps)
    truth = forecast(model, x0, config.n_steps)

    oc = config.observations
    masks = make_observation_cycle(n, oc.fraction, oc.n_masks, oc.mask_seed)
    observations = []
    for k in range(config.n_steps + 1):
        H = masks[k % len(masks)]
        R = DiagonalCovariance.identity(H.m, oc.std)
        noise = oc.std * stream(seed, OBS_NOISE, k).standard_normal(H.m)
        observations.append(Observation(k, H(truth[k]) + noise, H, R))

    B = DiagonalCovariance.identity(n, config.background_std)
    background = x0 + config.background_std * stream(seed, BACKGROUND).standard_normal(n)
    return TwinSetup(model, truth, observations, background, B)


def run_method(name: str, problem: AssimilationProblem, config: ExperimentConfig) -> AnalysisResult:
    if name == "pod":
        return run_pod_4denkf(problem, config.gamma, config.pod_scaling)
    if name == "ism":
        return run_ism(problem, config.gamma, config.iterations, config.ism_inner, config.pod_scaling)
    if name == "tr":
        tc = config.tr
        stop = StopCriteria(config.iterations, tc.min_trace_b, tc.min_radius)
        return run_tr_4denkf(problem, tc.params(), stop, tc.basis, config.gamma)
    raise ConfigurationError(f"unknown method {name!r}")


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    truth: np.ndarray
    background_trajectory: np.ndarray
    results: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def rmse(self, method: str) -> float:
        if method == "background":
            return rmse(self.truth, self.background_trajectory)
        return rmse(self.truth, self.results[method].trajectory)

    def rmse_per_time(self, method: str) -> np.ndarray:
        traj = self.background_trajectory if method == "background" else self.results[method].trajectory
        return rmse_per_time(self.truth, traj)

    def rmse_per_iteration(self, method: str) -> list[float]:
        """Window RMSE of the trajectory started from each iterate."""
        res = self.results[method]
        model = build_model(ExperimentConfig.from_dict(self.config))
        n_steps = self.truth.shape[0] - 1
        return [rmse(self.truth, forecast(model, x, n_steps)) for x in res.iterates]

    def summary(self) -> dict:
        out = {"background": self.rmse("background")}
        out.update({m: self.rmse(m) for m in self.results})
        return out


def run_twin_experiment(config: ExperimentConfig) -> RunRecord:
    """Build the twin, run each configured method, collect the results.

    A method that raises is recorded in ``errors`` and does not stop the
    others.
    """
    twin = make_twin(config)
    problem = twin.problem(config)
    bg_traj = forecast(twin.model, twin.background, config.n_steps)
    record = RunRecord(config.to_dict(), config.hash(), twin.truth, bg_traj)
    for name in config.methods:
        try:
            record.results[name] = run_method(name, problem, config)
        except AssimilationError as exc:
            log.warning("method %s failed: %s", name, exc)
            record.errors[name] = f"{type(exc).__name__}: {exc}"
    return record
