import numpy as np
import pytest

from tr4denkf import drivers
from tr4denkf.core import ConfigurationError, DiagonalCovariance, Observation, ObservationOperator, SubproblemError
from tr4denkf.drivers import (
    AssimilationProblem,
    StopCriteria,
    full_cost,
    run_ism,
    run_pod_4denkf,
    run_tr_4denkf,
)
from tr4denkf.harness.config import ExperimentConfig
from tr4denkf.harness.experiment import make_twin
from tr4denkf.models import LinearModel, forecast
from tr4denkf.trustregion import TRParams
from tr4denkf.validation import linear_problem


def consistent_problem(n=6, n_steps=3, n_ens=4, seed=0):
    """Observations of the background trajectory itself, no noise added."""
    rng = np.random.default_rng(seed)
    model = LinearModel(np.eye(n) + 0.1 * rng.standard_normal((n, n)))
    xb = rng.standard_normal(n)
    traj = forecast(model, xb, n_steps)
    H = ObservationOperator(np.arange(0, n, 2), n)
    obs = [Observation(k, H(traj[k]), H, DiagonalCovariance.identity(H.m, 0.1)) for k in range(n_steps + 1)]
    return AssimilationProblem(model, xb, DiagonalCovariance.identity(n, 0.5), obs, n_steps, n_ens, seed=seed)


@pytest.fixture(scope="module")
def l96():
    cfg = ExperimentConfig(n_ens=20, seed=1)
    return make_twin(cfg).problem(cfg)


def test_full_cost_examples():
    p = consistent_problem()
    assert full_cost(p, p.background) == 0.0
    empty = AssimilationProblem(p.model, p.background, p.B, [], p.n_steps, p.n_ens)
    x = p.background + 0.5
    assert full_cost(empty, x) == pytest.approx(0.5 * 6 * 0.5 ** 2 / 0.5 ** 2)


def test_problem_validation():
    p = consistent_problem()
    with pytest.raises(ConfigurationError):
        AssimilationProblem(p.model, p.background, p.B, p.observations, 1, 4)
    with pytest.raises(ConfigurationError):
        AssimilationProblem(p.model, p.background, p.B, [], 1, 0)


def test_pod_zero_innovation():
    p = consistent_problem()
    res = run_pod_4denkf(p)
    assert np.allclose(res.x0, p.background, rtol=1e-6, atol=1e-10)


def test_pod_deterministic(l96):
    a, b = run_pod_4denkf(l96), run_pod_4denkf(l96)
    assert np.array_equal(a.trajectory, b.trajectory)


def test_ism_one_iteration_is_pod(l96):
    a, b = run_ism(l96, iters=1), run_pod_4denkf(l96)
    assert np.array_equal(a.x0, b.x0) and np.array_equal(a.trajectory, b.trajectory)
    assert a.diagnostics[0].n_modes == b.diagnostics[0].n_modes


def test_ism_records_and_improves(l96):
    res = run_ism(l96, iters=5)
    assert res.iterations == 5 and res.iterates.shape == (5, 40)
    assert res.diagnostics[-1].cost <= full_cost(l96, l96.background)
    assert res.diagnostics[-1].cost == pytest.approx(full_cost(l96, res.x0))


def test_ism_coordinate_search_tiny_budget(l96):
    res = run_ism(l96, iters=2, inner="coordinate_search", csm={"budget": 5})
    for rec in res.diagnostics:
        assert rec.reduced_cost_new <= rec.reduced_cost_old


def test_ism_rejects_bad_arguments(l96):
    with pytest.raises(ConfigurationError):
        run_ism(l96, iters=0)
    with pytest.raises(ConfigurationError):
        run_ism(l96, inner="newton")


@pytest.mark.parametrize("n_ens", [3, 6])
def test_tr_linear_exactness(n_ens):
    problem, _ = linear_problem(n=6, n_ens=n_ens, seed=11)
    params = TRParams(delta_max=0.004, delta0=1e-3)
    res = run_tr_4denkf(problem, params, StopCriteria(6))
    for j, rec in enumerate(res.diagnostics):
        assert rec.rho == pytest.approx(1.0, abs=1e-8)
        assert rec.accepted
        assert rec.radius == pytest.approx(min(1.4 ** j * 1e-3, 0.004), rel=1e-12)


def test_tr_rejects_at_optimum():
    # the background already fits every observation: no predicted decrease
    p = consistent_problem()
    res = run_tr_4denkf(p, TRParams(delta0=0.2), StopCriteria(4))
    assert not any(r.accepted for r in res.diagnostics)
    assert [r.radius for r in res.diagnostics] == pytest.approx([0.2 * 0.5 ** j for j in range(4)])
    assert np.array_equal(res.x0, p.background)


def test_tr_subproblem_failure_is_rejection(monkeypatch, l96):
    def boom(*args, **kwargs):
        raise SubproblemError("forced")

    monkeypatch.setattr(drivers, "solve_subproblem", boom)
    res = run_tr_4denkf(l96, TRParams(delta0=0.3), StopCriteria(3))
    assert [r.accepted for r in res.diagnostics] == [False] * 3
    assert [r.rho for r in res.diagnostics] == [0.0] * 3
    assert res.diagnostics[-1].radius == pytest.approx(0.3 * 0.25)


def test_tr_invariants(l96):
    res = run_tr_4denkf(l96, TRParams(delta0=0.3), StopCriteria(5))
    J_prev = full_cost(l96, l96.background)
    trace_prev = l96.B.trace()
    for rec in res.diagnostics:
        if rec.accepted:
            assert rec.rho > 0.1 and rec.cost <= J_prev
        else:
            assert rec.cost == J_prev
        J_prev = rec.cost
        assert 0.5 <= rec.lambda_b <= 1.0
        trace = trace_prev * rec.lambda_b
        assert trace <= trace_prev
        trace_prev = trace
    assert res.diagnostics[-1].cost == pytest.approx(full_cost(l96, res.x0))


def test_tr_deterministic(l96):
    a = run_tr_4denkf(l96, TRParams(delta0=0.3))
    b = run_tr_4denkf(l96, TRParams(delta0=0.3))
    assert np.array_equal(a.iterates, b.iterates)
    assert [r.rho for r in a.diagnostics] == [r.rho for r in b.diagnostics]


def test_tr_stopping_rules(l96):
    res = run_tr_4denkf(l96, TRParams(delta0=0.3), StopCriteria(max_iters=5, min_radius=1.0))
    assert res.iterations == 0 and np.array_equal(res.x0, l96.background)
    res = run_tr_4denkf(l96, TRParams(delta0=0.3), StopCriteria(max_iters=5, min_trace_b=l96.B.trace()))
    assert res.iterations == 0


def test_tr_pod_basis_variant(l96):
    res = run_tr_4denkf(l96, TRParams(delta0=0.3), StopCriteria(3), basis="pod")
    assert res.iterations == 3
    assert res.diagnostics[-1].cost <= full_cost(l96, l96.background)
    with pytest.raises(ConfigurationError):
        run_tr_4denkf(l96, basis="wavelet")
