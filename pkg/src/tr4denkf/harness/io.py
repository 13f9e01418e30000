"""Run-record serialization.

A run directory holds

* ``records.jsonl``: one ``run`` line (config, truth, background) and one
  ``method`` line per assimilation method; floats are written with ``repr``
  precision so reading the file back is lossless;
* ``per_time.csv``: ``k,rmse_background,rmse_pod,rmse_ism,rmse_tr``;
* ``per_iteration.csv``: tidy ``method,iteration,rmse`` rows;
* ``config.yaml``: the configuration that produced the run.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..drivers import AnalysisResult, IterationRecord
from .config import METHODS, ExperimentConfig, dump_config
from .experiment import RunRecord

RECORDS = "records.jsonl"
PER_TIME = "per_time.csv"
PER_ITERATION = "per_iteration.csv"


def _result_line(name: str, res: AnalysisResult, record: RunRecord) -> dict:
    return {
        "kind": "method",
        "method": name,
        "x0": res.x0.tolist(),
        "trajectory": res.trajectory.tolist(),
        "iterates": res.iterates.tolist(),
        "diagnostics": [asdict(d) for d in res.diagnostics],
        "wall_time": res.wall_time,
        "rmse": record.rmse(name),
        "rmse_per_time": record.rmse_per_time(name).tolist(),
        "rmse_per_iteration": record.rmse_per_iteration(name),
    }


def record_lines(record: RunRecord) -> list[dict]:
    head = {
        "kind": "run",
        "config_hash": record.config_hash,
        "config": record.config,
        "truth": record.truth.tolist(),
        "background_trajectory": record.background_trajectory.tolist(),
        "rmse_background": record.rmse("background"),
        "errors": record.errors,
    }
    return [head] + [_result_line(m, r, record) for m, r in record.results.items()]


def numeric_fingerprint(record: RunRecord) -> str:
    """Canonical JSON of every line minus wall times and the output path;
    equal fingerprints mean equal numbers (NaN included)."""
    lines = record_lines(record)
    for line in lines:
        line.pop("wall_time", None)
    lines[0]["config"] = dict(lines[0]["config"], output_dir=None)
    return json.dumps(lines, sort_keys=True)


def write_run(record: RunRecord, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / RECORDS, "w") as fh:
        for line in record_lines(record):
            fh.write(json.dumps(line) + "\n")

    n_times = record.truth.shape[0]
    series = {"background": record.rmse_per_time("background")}
    series.update({m: record.rmse_per_time(m) for m in record.results})
    with open(out / PER_TIME, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "rmse_background"] + [f"rmse_{m}" for m in METHODS])
        for k in range(n_times):
            row = [k, repr(float(series["background"][k]))]
            row += [repr(float(series[m][k])) if m in series else "" for m in METHODS]
            w.writerow(row)

    with open(out / PER_ITERATION, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "iteration", "rmse"])
        for m in record.results:
            for j, value in enumerate(record.rmse_per_iteration(m), start=1):
                w.writerow([m, j, repr(value)])

    dump_config(ExperimentConfig.from_dict(record.config), out / "config.yaml")
    return out


def read_run(path) -> RunRecord:
    """Load a run from a run directory or a ``records.jsonl`` file."""
    path = Path(path)
    if path.is_dir():
        path = path / RECORDS
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    head = lines[0]
    if head.get("kind") != "run":
        raise ValueError(f"{path}: first record is not a run header")
    record = RunRecord(head["config"], head["config_hash"], np.array(head["truth"]),
                       np.array(head["background_trajectory"]), errors=head.get("errors", {}))
    for line in lines[1:]:
        n = record.truth.shape[1]
        record.results[line["method"]] = AnalysisResult(
            line["method"],
            np.array(line["x0"]),
            np.array(line["trajectory"]),
            np.array(line["iterates"]).reshape(-1, n),
            [IterationRecord(**d) for d in line["diagnostics"]],
            line["wall_time"],
        )
    return record
