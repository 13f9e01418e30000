"""Run one Lorenz-96 twin experiment and write its outputs.

    python3 scripts/run_twin.py --config configs/default.yaml --out runs/default
"""
import argparse
import json
from pathlib import Path

from tr4denkf.harness.config import ExperimentConfig, load_config
from tr4denkf.harness.experiment import run_twin_experiment
from tr4denkf.harness.io import write_run

parser = argparse.ArgumentParser()
parser.add_argument("--config", type=Path)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", type=Path, default=Path("runs/twin"))
args = parser.parse_args()

cfg = load_config(args.config) if args.config else ExperimentConfig()
record = run_twin_experiment(cfg.replace(seed=args.seed))
write_run(record, args.out)
print(json.dumps(record.summary(), indent=2))
print(f"wrote {args.out}")
