"""Command line interface.

    tr4denkf run      --config cfg.yaml --out runs/a
    tr4denkf compare  --config cfg.yaml --method all
    tr4denkf sweep    --config cfg.yaml --seeds 10 --out runs/sweep
    tr4denkf validate [--full]

Failures exit nonzero and print a single JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..core import AssimilationError, ConfigurationError
from .config import METHODS, ExperimentConfig, load_config
from .experiment import run_twin_experiment
from .io import write_run

SWEEP_SIZES = (10, 20, 40, 80)
LABELS = {"background": "Background", "pod": "POD-4D-EnKF", "ism": "ISM", "tr": "TR-4D-EnKF"}


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.method and args.method != "all":
        changes["methods"] = [args.method]
    if args.out:
        changes["output_dir"] = str(args.out)
    return cfg.replace(**changes) if changes else cfg


def format_table(rows) -> str:
    """rows: (n_ens or None, method, rmse, seconds) in display order."""
    out = [f"{'Nens':>5} | {'Method':<12} | {'RMSE':>11} | {'time [s]':>8}", "-" * 46]
    last = object()
    for n_ens, method, value, seconds in rows:
        label = "N/A" if n_ens is None else ("" if n_ens == last else str(n_ens))
        last = n_ens
        t = "" if seconds is None else f"{seconds:8.2f}"
        out.append(f"{label:>5} | {LABELS.get(method, method):<12} | {value:11.4e} | {t:>8}")
    return "\n".join(out)


def cmd_run(args) -> int:
    cfg = _config(args)
    record = run_twin_experiment(cfg)
    if cfg.output_dir:
        write_run(record, cfg.output_dir)
    print(json.dumps({"config_hash": record.config_hash, "rmse": record.summary(),
                      "errors": record.errors}, indent=2))
    return 1 if record.errors else 0


def _table_rows(cfg, sizes, n_seeds):
    """Median RMSE over seeds for each ensemble size; also the tidy rows."""
    tidy, rows, background = [], [], []
    for n_ens in sizes:
        per_method = {m: [] for m in cfg.methods}
        times = {m: [] for m in cfg.methods}
        for seed in range(cfg.seed, cfg.seed + n_seeds):
            rec = run_twin_experiment(cfg.replace(n_ens=n_ens, seed=seed))
            if rec.errors:
                raise AssimilationError(f"n_ens={n_ens} seed={seed}: {rec.errors}")
            background.append(rec.rmse("background"))
            tidy.append((n_ens, seed, "background", rec.rmse("background"), 0.0))
            for m, res in rec.results.items():
                per_method[m].append(rec.rmse(m))
                times[m].append(res.wall_time)
                tidy.append((n_ens, seed, m, rec.rmse(m), res.wall_time))
        rows += [(n_ens, m, float(np.median(per_method[m])), float(np.median(times[m])))
                 for m in cfg.methods]
    # the background does not depend on n_ens
    return [(None, "background", float(np.median(background)), None)] + rows, tidy


def cmd_compare(args) -> int:
    cfg = _config(args)
    sizes = args.n_ens or [cfg.n_ens]
    rows, tidy = _table_rows(cfg, sizes, args.seeds)
    print(format_table(rows))
    if cfg.output_dir:
        _write_tidy(Path(cfg.output_dir) / "compare.csv", tidy)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows, tidy = _table_rows(cfg, SWEEP_SIZES, args.seeds)
    print(format_table(rows))
    if cfg.output_dir:
        _write_tidy(Path(cfg.output_dir) / "sweep.csv", tidy)
    return 0


def _write_tidy(path: Path, tidy):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_ens", "seed", "method", "rmse", "wall_time"])
        for n_ens, seed, m, value, t in tidy:
            w.writerow([n_ens, seed, m, repr(value), repr(t)])


def cmd_validate(args) -> int:
    from ..validation import run_checks

    checks = run_checks(full=args.full)
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise AssimilationError(f"failed checks: {failed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tr4denkf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="YAML experiment config (defaults built in)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--method", choices=list(METHODS) + ["all"], default="all")
        return p

    common(sub.add_parser("run", help="one twin experiment")).set_defaults(func=cmd_run)
    p = common(sub.add_parser("compare", help="methods side by side"))
    p.add_argument("--n-ens", type=int, nargs="+", help="ensemble sizes (default: config)")
    p.add_argument("--seeds", type=int, default=1, help="seeds per size; medians are shown")
    p.set_defaults(func=cmd_compare)
    p = common(sub.add_parser("sweep", help="ensemble-size sweep over 10, 20, 40, 80"))
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    p = common(sub.add_parser("validate", help="run the acceptance checks"))
    p.add_argument("--full", action="store_true", help="include the multi-seed twin trend check")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AssimilationError, OSError, ValueError) as exc:
        record = {"status": "error", "command": args.command,
                  "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigurationError, OSError)) else 1


if __name__ == "__main__":
    sys.exit(main())
