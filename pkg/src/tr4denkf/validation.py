"""Acceptance checks with independent oracles.

Each check returns a :class:`Check`; ``run_checks`` runs a selection and the
CLI ``validate`` command prints one line per check. The oracles here share no
code path with the quantities they verify: finite differences for gradients,
dense normal equations for 4D-Var, and a grid-plus-refinement search for the
trust-region subproblem.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .core import DiagonalCovariance, Observation, ObservationOperator
from .drivers import AssimilationProblem, StopCriteria, run_ism, run_pod_4denkf, run_tr_4denkf
from .ensemble import SnapshotMatrix, propagate_ensemble, sample_ensemble, stream
from .models import LinearModel, forecast
from .reduced import (
    build_deviation_snapshots,
    build_ensemble_problem,
    build_pod_problem,
    ensemble_cost,
    ensemble_grad,
    pod_cost,
    pod_decompose,
    pod_grad,
    reconstruct_state,
    solve_beta,
    solve_weights,
)
from .trustregion import (
    TRParams,
    covariance_scale,
    generic_trust_region,
    solve_subproblem,
    update_radius,
    update_solution,
)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


# ---------------------------------------------------------------- instances

def random_instance(rng, n, n_ens, n_times=3, n_obs=None, scale=1.0):
    """Random snapshots, observations, background and B for small problems."""
    S = SnapshotMatrix(rng.standard_normal((n_times, n, n_ens + 1)) * scale)
    observations = []
    for k in range(n_times):
        m = n if n_obs is None else n_obs
        idx = np.sort(rng.choice(n, size=m, replace=False))
        H = ObservationOperator(idx, n)
        R = DiagonalCovariance(rng.uniform(0.5, 2.0, m))
        observations.append(Observation(k, rng.standard_normal(m), H, R))
    B = DiagonalCovariance(rng.uniform(0.5, 2.0, n))
    return S, observations, rng.standard_normal(n), B


def central_difference(f, w):
    g = np.empty_like(w)
    for i in range(w.size):
        h = 1e-5 * (1 + abs(w[i]))
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def dense_4dvar(A, xb, B, observations, n_steps):
    """Minimizer of the strong-constraint 4D-Var cost for x_{k+1} = A x_k."""
    n = xb.size
    Binv = np.diag(1.0 / B.diagonal)
    lhs, rhs = Binv.copy(), Binv @ xb
    for ob in observations:
        G = ob.operator.matrix(n) @ np.linalg.matrix_power(A, ob.time_index)
        Rinv = np.diag(1.0 / ob.noise.diagonal)
        lhs += G.T @ Rinv @ G
        rhs += G.T @ Rinv @ ob.value
    return np.linalg.solve(lhs, rhs)


def brute_force_subproblem(g, H, W, P, delta, n_grid=2000):
    """Global minimum of g's + 0.5 s'Hs over ||W + s||_P <= delta.

    P is whitened by its own eigendecomposition; the interior candidate is the
    unconstrained minimizer when it exists and is feasible, the boundary is
    searched on a dense angular grid and polished with Nelder-Mead.
    """
    d, V = np.linalg.eigh(P)
    T = V / np.sqrt(d)            # z = T u  gives ||z||_P = ||u||
    dim = g.size

    def model(z):
        s = z - W
        return g @ s + 0.5 * s @ H @ s

    best = np.inf
    if np.all(np.linalg.eigvalsh(H) > 0):
        z = W - np.linalg.solve(H, g)
        if np.sqrt(z @ P @ z) <= delta:
            best = model(z)

    if dim == 2:
        def sphere(a):
            return delta * np.array([np.cos(a[0]), np.sin(a[0])])
        grid = [np.array([t]) for t in np.linspace(0, 2 * np.pi, n_grid, endpoint=False)]
    else:
        def sphere(a):
            return delta * np.array([np.sin(a[0]) * np.cos(a[1]), np.sin(a[0]) * np.sin(a[1]), np.cos(a[0])])
        m = int(np.sqrt(n_grid))
        grid = [np.array([t, p]) for t in np.linspace(0, np.pi, m) for p in np.linspace(0, 2 * np.pi, 2 * m, endpoint=False)]

    def on_sphere(a):
        return model(T @ sphere(a))

    values = np.array([on_sphere(a) for a in grid])
    for i in np.argsort(values)[:5]:
        res = minimize(on_sphere, grid[i], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        best = min(best, res.fun, values[i])
    return best


# ---------------------------------------------------------------- criteria

def check_gradients(n_instances=20, seed=101) -> Check:
    worst = 0.0
    for i in range(n_instances):
        rng = stream(seed, i)
        n, n_ens = int(rng.integers(3, 21)), int(rng.integers(2, 9))
        S, obs, xb, B = random_instance(rng, n, n_ens, n_obs=max(1, n // 2))
        P = build_ensemble_problem(S, obs, xb, B)
        w = rng.standard_normal(n_ens)
        g = ensemble_grad(P, w)
        fd = central_difference(lambda v: ensemble_cost(P, v), w)
        worst = max(worst, np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1.0))
        pod = pod_decompose(build_deviation_snapshots(S), S.n_times)
        Q = build_pod_problem(S, obs, pod)
        b = rng.standard_normal(pod.n_modes)
        g = pod_grad(Q, b)
        fd = central_difference(lambda v: pod_cost(Q, v), b)
        worst = max(worst, np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1.0))
    return Check("1 gradient correctness", worst <= 1e-6, f"max relative error {worst:.2e} <= 1e-6")


def check_stationarity(n_instances=20, seed=202) -> Check:
    worst = 0.0
    for i in range(n_instances):
        rng = stream(seed, i)
        n_ens = int(rng.integers(2, 9))
        n = int(rng.integers(n_ens + 1, 21))
        S, obs, xb, B = random_instance(rng, n, n_ens, n_obs=max(1, n // 2))
        P = build_ensemble_problem(S, obs, xb, B)
        g = ensemble_grad(P, solve_weights(P))
        worst = max(worst, np.max(np.abs(g)) / (1 + np.max(np.abs(P.rhs()))))
        Q = build_pod_problem(S, obs, pod_decompose(build_deviation_snapshots(S), S.n_times))
        g = pod_grad(Q, solve_beta(Q))
        worst = max(worst, np.max(np.abs(g)) / (1 + np.max(np.abs(Q.rhs()))))
    return Check("2 closed-form stationarity", worst <= 1e-8,
                 f"max ||grad||_inf / (1 + ||c||_inf) = {worst:.2e} <= 1e-8")


def check_subproblem(n_instances=50, seed=303) -> Check:
    gap = feas = kkt = slack = 0.0
    for i in range(n_instances):
        rng = stream(seed, i)
        dim = 2 + i % 2
        g = rng.standard_normal(dim)
        M = rng.standard_normal((dim, dim))
        H = 0.5 * (M + M.T)
        C = rng.standard_normal((dim, dim))
        P = C @ C.T + 0.5 * np.eye(dim)
        delta = float(rng.uniform(0.2, 2.0))
        # a feasible current point, as in the driver (where W = 0)
        W = rng.standard_normal(dim)
        W *= rng.uniform(0.0, 0.9) * delta / np.sqrt(W @ P @ W)
        sol = solve_subproblem(g, H, W, P, delta)
        s, z = sol.step, W + sol.step
        m_val = g @ s + 0.5 * s @ H @ s
        gap = max(gap, m_val - brute_force_subproblem(g, H, W, P, delta))
        norm_p = np.sqrt(z @ P @ z)
        feas = max(feas, norm_p / delta - 1)
        lam = sol.multiplier
        if sol.on_boundary:
            kkt = max(kkt, np.max(np.abs(g + H @ s + 2 * lam * P @ z)) / (1 + np.max(np.abs(g))))
        slack = max(slack, abs(lam * (norm_p ** 2 - delta ** 2)))
        if lam < 0 or m_val > 1e-12:
            return Check("3 subproblem oracle", False, f"instance {i}: lambda={lam}, m(s*)={m_val}")
    ok = gap <= 1e-6 and feas <= 1e-8 and kkt <= 1e-6 and slack <= 1e-6
    return Check("3 subproblem oracle", ok,
                 f"model gap {gap:.1e}, feasibility excess {feas:.1e}, KKT {kkt:.1e}, slackness {slack:.1e}")


def linear_problem(n=6, n_steps=4, seed=404, n_ens=None, obs_std=0.5, bg_std=1.0):
    rng = stream(seed)
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Qm @ np.diag(rng.uniform(0.8, 1.1, n))
    model = LinearModel(A)
    truth0 = rng.standard_normal(n)
    truth = forecast(model, truth0, n_steps)
    obs = []
    for k in range(n_steps + 1):
        idx = np.sort(rng.choice(n, size=n // 2, replace=False))
        H = ObservationOperator(idx, n)
        obs.append(Observation(k, H(truth[k]) + obs_std * rng.standard_normal(idx.size), H,
                               DiagonalCovariance.identity(idx.size, obs_std)))
    B = DiagonalCovariance.identity(n, bg_std)
    xb = truth0 + bg_std * rng.standard_normal(n)
    return AssimilationProblem(model, xb, B, obs, n_steps, n_ens or n, seed=(seed, 1)), A


def check_linear_exactness() -> Check:
    problem, A = linear_problem()
    params = TRParams(delta_max=100.0, delta0=1e-3)
    res = run_tr_4denkf(problem, params, StopCriteria(5))
    rho_err = max(abs(r.rho - 1) for r in res.diagnostics)
    radii = [r.radius for r in res.diagnostics]
    expect = [min(params.gamma_inc ** j * params.delta0, params.delta_max) for j in range(len(radii))]
    radius_ok = np.allclose(radii, expect, rtol=1e-12)

    # one-shot closed-form solve; n_ens = n anomalies span the state space
    E = sample_ensemble(problem.background, problem.B, problem.n_ens, problem.seed_words + (0,))
    S = propagate_ensemble(problem.model, E, problem.n_steps)
    rp = build_ensemble_problem(S, problem.observations, problem.background, problem.B)
    x_closed = reconstruct_state(S.anomalies(), S.means(), 0, solve_weights(rp))
    x_dense = dense_4dvar(A, problem.background, problem.B, problem.observations, problem.n_steps)
    err = float(np.max(np.abs(x_closed - x_dense)))
    ok = rho_err <= 1e-8 and radius_ok and err <= 1e-6
    return Check("4 linear exactness", ok,
                 f"max |rho-1| {rho_err:.1e}, radius schedule {'ok' if radius_ok else radii}, "
                 f"|x_closed - x_4dvar|_inf {err:.1e}")


def check_rule_tables() -> Check:
    p = TRParams()
    radius_cases = [((10, 0.1), 5.0), ((10, -3.0), 5.0), ((10, 0.25), 10.0), ((10, 0.5), 10.0),
                    ((10, 0.75), 14.0), ((10, 0.8), 14.0), ((10, 1.0), 14.0), ((10, 1.5), 10.0),
                    ((80, 0.9), 100.0)]
    bad = [(a, update_radius(*a, p), e) for a, e in radius_cases if not np.isclose(update_radius(*a, p), e)]
    for rho, keep in [(0.05, True), (0.1, True), (0.11, False), (0.9, False)]:
        if (update_solution("old", "new", rho, p.eta) == "old") != keep:
            bad.append(("solution", rho))
    if covariance_scale(0.0, p.delta_max) != 1.0 or covariance_scale(p.delta_max, p.delta_max) != 0.5:
        bad.append(("lambda_B limits",))
    if not np.isclose(covariance_scale(25.0, 100.0), 0.8, rtol=0, atol=1e-15):
        bad.append(("lambda_B(25)",))
    return Check("5 rule tables", not bad, "all cases reproduced" if not bad else f"mismatches {bad}")


def rosenbrock():
    def f(x):
        return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2

    def g(x):
        return np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])

    def h(x):
        return np.array([[2 - 400 * x[1] + 1200 * x[0] ** 2, -400 * x[0]], [-400 * x[0], 200.0]])

    return f, g, h


def check_generic_tr() -> Check:
    f, g, h = rosenbrock()
    res = generic_trust_region(f, g, h, np.array([-1.2, 1.0]), max_iter=500)
    err = float(np.max(np.abs(res.x - 1)))
    ok = res.converged and err <= 1e-6 and res.iterations <= 500
    return Check("6 generic TR on Rosenbrock", ok, f"{res.iterations} iterations, error {err:.1e}")


def check_twin_trend(config=None, ensemble_sizes=(10, 20, 40), seeds=range(10), min_count=6) -> Check:
    from .harness.config import ExperimentConfig
    from .harness.experiment import run_twin_experiment

    config = config or ExperimentConfig()
    parts, ok = [], True
    for n_ens in ensemble_sizes:
        rows, count = [], 0
        for seed in seeds:
            rec = run_twin_experiment(config.replace(n_ens=n_ens, seed=seed, methods=["pod", "ism", "tr"]))
            if rec.errors:
                return Check("7 twin trend", False, f"n_ens={n_ens} seed={seed} errors {rec.errors}")
            rows.append([rec.rmse("background"), rec.rmse("pod"), rec.rmse("ism"), rec.rmse("tr")])
            tr_it, ism_it = rec.rmse_per_iteration("tr"), rec.rmse_per_iteration("ism")
            count += len(tr_it) >= 2 and len(ism_it) >= 3 and tr_it[1] <= ism_it[2]
        bg, pod, ism, tr = np.median(rows, axis=0)
        this = bg > pod > max(ism, tr) and tr <= 1.05 * ism and count >= min_count
        ok &= bool(this)
        parts.append(f"Nens={n_ens}: bg {bg:.4f} pod {pod:.4f} ism {ism:.4f} tr {tr:.4f}, "
                     f"TR(2)<=ISM(3) in {count}/{len(seeds)}")
    return Check("7 twin trend", ok, "; ".join(parts))


def check_ism_equivalence(seeds=range(3)) -> Check:
    from .harness.config import ExperimentConfig
    from .harness.experiment import make_twin

    config = ExperimentConfig()
    for seed in seeds:
        cfg = config.replace(seed=seed)
        problem = make_twin(cfg).problem(cfg)
        a, b = run_ism(problem, cfg.gamma, 1, "closed_form"), run_pod_4denkf(problem, cfg.gamma)
        same = (np.array_equal(a.x0, b.x0) and np.array_equal(a.trajectory, b.trajectory)
                and np.array_equal(a.iterates, b.iterates))
        if not same:
            return Check("8 ISM(1) == POD", False, f"seed {seed}: outputs differ")
    return Check("8 ISM(1) == POD", True, f"bit-identical on {len(seeds)} seeds")


def check_determinism(seed=7) -> Check:
    from .harness.config import ExperimentConfig
    from .harness.experiment import run_twin_experiment
    from .harness.io import numeric_fingerprint

    cfg = ExperimentConfig(seed=seed)
    a, b = (numeric_fingerprint(run_twin_experiment(cfg)) for _ in range(2))
    return Check("9 determinism", a == b, "identical records" if a == b else "records differ")


QUICK = {
    "gradients": check_gradients,
    "stationarity": check_stationarity,
    "subproblem": check_subproblem,
    "linear": check_linear_exactness,
    "rules": check_rule_tables,
    "generic_tr": check_generic_tr,
    "ism_equivalence": check_ism_equivalence,
    "determinism": check_determinism,
}
FULL = dict(QUICK, twin_trend=check_twin_trend)


def run_checks(full: bool = False) -> list[Check]:
    out = []
    for fn in (FULL if full else QUICK).values():
        t0 = time.perf_counter()
        c = fn()
        c.seconds = time.perf_counter() - t0
        out.append(c)
    return out
