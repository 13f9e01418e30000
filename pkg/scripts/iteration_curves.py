"""Per-iteration RMSE of ISM and TR-4D-EnKF (POD and background as flat
references) for one seed, printed as a small table.

    python3 scripts/iteration_curves.py --n-ens 40 --seed 0
"""
import argparse

from tr4denkf.harness.config import ExperimentConfig
from tr4denkf.harness.experiment import run_twin_experiment

parser = argparse.ArgumentParser()
parser.add_argument("--n-ens", type=int, default=20)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--iterations", type=int, default=5)
args = parser.parse_args()

rec = run_twin_experiment(ExperimentConfig(n_ens=args.n_ens, seed=args.seed, iterations=args.iterations))
ism, tr = rec.rmse_per_iteration("ism"), rec.rmse_per_iteration("tr")
print(f"background {rec.rmse('background'):.4f}   POD-4D-EnKF {rec.rmse('pod'):.4f}")
print(f"{'iter':>4} {'ISM':>9} {'TR':>9} {'rho':>8} {'radius':>8} {'lambda_B':>8}")
for j, (a, b, d) in enumerate(zip(ism, tr, rec.results["tr"].diagnostics), start=1):
    print(f"{j:4d} {a:9.4f} {b:9.4f} {d.rho:8.3f} {d.radius:8.3f} {d.lambda_b:8.4f}")
