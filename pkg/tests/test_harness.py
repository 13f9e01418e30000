import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tr4denkf.core import ConfigurationError, DivergenceError
from tr4denkf.harness import experiment
from tr4denkf.harness.config import ExperimentConfig, dump_config, load_config
from tr4denkf.harness.experiment import make_observation_cycle, make_twin, rmse, run_twin_experiment
from tr4denkf.harness.io import PER_ITERATION, PER_TIME, numeric_fingerprint, read_run, write_run

SMALL = dict(model={"n": 12}, n_steps=4, n_ens=6, iterations=3)


@pytest.fixture(scope="module")
def record():
    return run_twin_experiment(ExperimentConfig.from_dict(SMALL))


def test_rmse_examples():
    t = np.arange(12.0).reshape(4, 3)
    assert rmse(t, t) == 0.0
    c, n, N = 0.3, 3, 3
    assert rmse(t, t + c) == pytest.approx(c * math.sqrt(n * (N + 1) / N))
    a = t.copy()
    a[2] += [1.0, 2.0, 2.0]                      # squared error 9 at one time
    assert rmse(t, a) == pytest.approx(math.sqrt(9 / N))
    one = np.zeros((1, 3))
    assert rmse(one, one + 1.0) == pytest.approx(math.sqrt(3.0))
    with pytest.raises(ConfigurationError):
        rmse(t, t[:2])


def test_masks():
    full = make_observation_cycle(5, 1.0, 3)
    assert all(np.array_equal(H.observed_indices, np.arange(5)) for H in full)
    a, b = make_observation_cycle(4, 0.5, 2)
    assert set(a.observed_indices) | set(b.observed_indices) == {0, 1, 2, 3}
    assert not set(a.observed_indices) & set(b.observed_indices)
    s1, s2 = make_observation_cycle(10, 0.3, 3, seed=4), make_observation_cycle(10, 0.3, 3, seed=4)
    assert all(np.array_equal(x.observed_indices, y.observed_indices) for x, y in zip(s1, s2))
    with pytest.raises(ConfigurationError):
        make_observation_cycle(4, 0.1, 2)


@given(st.integers(4, 60), st.floats(0.05, 1.0), st.integers(1, 6))
def test_mask_sizes(n, fraction, count):
    if math.floor(fraction * n) < 1:
        return
    masks = make_observation_cycle(n, fraction, count)
    assert len(masks) == count
    assert all(H.m == math.floor(fraction * n + 1e-12) for H in masks)


def test_twin_uses_mask_cycle():
    cfg = ExperimentConfig.from_dict(SMALL)
    twin = make_twin(cfg)
    masks = make_observation_cycle(12, 0.5, 4)
    for ob in twin.observations:
        assert np.array_equal(ob.operator.observed_indices, masks[ob.time_index % 4].observed_indices)
    assert len(twin.observations) == cfg.n_steps + 1


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"observations": {"fraction": 0.0}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"background_std": -1.0})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"methods": ["pod", "4dvar"]})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"unknown": 1})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"tr": {"radius": 1}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"tr": {"theta1": 0.9}})


def test_config_yaml_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict(dict(SMALL, seed=5, tr={"delta0": 0.2}))
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


def test_config_hash():
    base = ExperimentConfig()
    assert base.hash() == ExperimentConfig().hash()
    assert base.replace(output_dir="/tmp/x").hash() == base.hash()
    assert base.replace(methods=["tr", "ism", "pod"]).hash() == base.hash()
    changed = [base.replace(seed=1), base.replace(n_ens=21), base.replace(gamma=0.9),
               base.replace(tr={"delta0": 0.2}), base.replace(model={"steps_per_window": 1}),
               base.replace(observations={"std": 0.02}), base.replace(methods=["tr"])]
    hashes = {c.hash() for c in changed}
    assert base.hash() not in hashes and len(hashes) == len(changed)


def test_series_lengths(record):
    N = record.truth.shape[0] - 1
    assert record.rmse_per_time("background").shape == (N + 1,)
    for m in ("pod", "ism", "tr"):
        assert record.rmse_per_time(m).shape == (N + 1,)
    assert len(record.rmse_per_iteration("pod")) == 1
    assert len(record.rmse_per_iteration("ism")) == 3
    assert len(record.rmse_per_iteration("tr")) == 3
    assert record.rmse_per_iteration("ism")[-1] == pytest.approx(record.rmse("ism"))


def test_round_trip(record, tmp_path):
    write_run(record, tmp_path)
    back = read_run(tmp_path)
    assert numeric_fingerprint(back) == numeric_fingerprint(record)
    for m, res in record.results.items():
        assert np.array_equal(back.results[m].trajectory, res.trajectory)
        assert back.results[m].wall_time == res.wall_time
    with open(tmp_path / PER_TIME) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "rmse_background", "rmse_pod", "rmse_ism", "rmse_tr"]
    assert len(rows) == record.truth.shape[0] + 1
    assert float(rows[1][4]) == record.rmse_per_time("tr")[0]
    with open(tmp_path / PER_ITERATION) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows].count("ism") == 3
    assert load_config(tmp_path / "config.yaml").hash() == record.config_hash


def test_jsonl_is_line_delimited(record, tmp_path):
    write_run(record, tmp_path)
    lines = (tmp_path / "records.jsonl").read_text().splitlines()
    kinds = [json.loads(line)["kind"] for line in lines]
    assert kinds == ["run", "method", "method", "method"]


def test_determinism():
    cfg = ExperimentConfig.from_dict(SMALL)
    assert numeric_fingerprint(run_twin_experiment(cfg)) == numeric_fingerprint(run_twin_experiment(cfg))


def test_default_config_beats_background():
    rec = run_twin_experiment(ExperimentConfig())
    assert not rec.errors
    for m in ("pod", "ism", "tr"):
        assert rec.rmse(m) < rec.rmse("background")


def test_near_perfect_information():
    cfg = ExperimentConfig.from_dict(dict(SMALL, background_std=1e-9, observations={"std": 1e-9}))
    rec = run_twin_experiment(cfg)
    assert not rec.errors
    assert max(rec.summary().values()) < 1e-6


def test_method_failure_is_recorded(monkeypatch):
    real = experiment.run_method

    def flaky(name, problem, config):
        if name == "ism":
            raise DivergenceError("forced")
        return real(name, problem, config)

    monkeypatch.setattr(experiment, "run_method", flaky)
    rec = run_twin_experiment(ExperimentConfig.from_dict(SMALL))
    assert "ism" in rec.errors and set(rec.results) == {"pod", "tr"}


def test_linear_model_config():
    cfg = ExperimentConfig.from_dict({"model": {"kind": "linear", "n": 8, "spinup_steps": 0},
                                      "n_ens": 8, "n_steps": 4, "tr": {"delta0": 0.01}})
    rec = run_twin_experiment(cfg)
    assert not rec.errors
    assert all(r.rho == pytest.approx(1.0, abs=1e-8) for r in rec.results["tr"].diagnostics if r.accepted)
