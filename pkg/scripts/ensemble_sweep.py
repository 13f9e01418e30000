"""Multi-seed ensemble-size sweep: median window RMSE per method and the
per-iteration comparison of TR-4D-EnKF against ISM.

    python3 scripts/ensemble_sweep.py --seeds 10 --sizes 10 20 40 --out runs/sweep.csv
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from tr4denkf.harness.config import ExperimentConfig, load_config
from tr4denkf.harness.experiment import run_twin_experiment

parser = argparse.ArgumentParser()
parser.add_argument("--config", type=Path)
parser.add_argument("--seeds", type=int, default=10)
parser.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40, 80])
parser.add_argument("--out", type=Path, default=Path("runs/sweep.csv"))
args = parser.parse_args()

base = load_config(args.config) if args.config else ExperimentConfig()
args.out.parent.mkdir(parents=True, exist_ok=True)
with open(args.out, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["n_ens", "seed", "method", "iteration", "rmse"])
    for n_ens in args.sizes:
        final = {m: [] for m in ("background", "pod", "ism", "tr")}
        wins = 0
        for seed in range(args.seeds):
            rec = run_twin_experiment(base.replace(n_ens=n_ens, seed=seed))
            final["background"].append(rec.rmse("background"))
            for m in rec.results:
                curve = rec.rmse_per_iteration(m)
                final[m].append(curve[-1])
                w.writerows([n_ens, seed, m, j, repr(v)] for j, v in enumerate(curve, start=1))
            wins += rec.rmse_per_iteration("tr")[1] <= rec.rmse_per_iteration("ism")[2]
        med = {m: np.median(v) for m, v in final.items() if v}
        print(f"Nens={n_ens:3d}  " + "  ".join(f"{m} {v:.4f}" for m, v in med.items())
              + f"  TR(2)<=ISM(3) in {wins}/{args.seeds}")
print(f"wrote {args.out}")
