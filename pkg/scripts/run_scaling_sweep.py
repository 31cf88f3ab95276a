#!/usr/bin/env python3
"""Scaling sweep over the power and cascade weight families.

Runs the standard experiment battery (Carleson norm, key-sum and first-term
form norms, shift form norms) across a Q range, writes one CSV per family
plus a JSON summary with fitted log-log slopes vs Q.

Example:
    python3 scripts/run_scaling_sweep.py --depth 6 --out-dir results/
"""
import argparse
import json
import pathlib

import numpy as np

from dyadlab.cli import SweepConfig, rows_to_csv, run_sweep

EXPERIMENTS = ("a2", "carleson", "key_sum", "four_terms", "shift_norm")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--cascades", type=int, default=50,
                    help="number of random cascade weights")
    ap.add_argument("--eps-lo", type=float, default=0.2)
    ap.add_argument("--eps-hi", type=float, default=0.9)
    ap.add_argument("--jobs", type=int, default=0, help="0 = all cores")
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}

    power_params = [round(a, 2) for a in np.arange(-0.9, 0.95, 0.1)
                    if abs(a) > 1e-9]
    cfg = SweepConfig(family="power", params=power_params,
                      depths=[args.depth], seeds=[0],
                      experiments=EXPERIMENTS, jobs=args.jobs)
    rows, summary["power"] = run_sweep(cfg)
    (out / "power_sweep.csv").write_text(rows_to_csv(rows))

    rng = np.random.default_rng(0)
    eps = sorted(float(rng.uniform(args.eps_lo, args.eps_hi))
                 for _ in range(args.cascades))
    cfg = SweepConfig(family="cascade", params=eps, depths=[args.depth],
                      seeds=[0], experiments=EXPERIMENTS, jobs=args.jobs)
    rows, summary["cascade"] = run_sweep(cfg)
    (out / "cascade_sweep.csv").write_text(rows_to_csv(rows))

    (out / "scaling_summary.json").write_text(json.dumps(summary, indent=2))
    for fam in ("power", "cascade"):
        print(f"{fam}: slopes vs Q")
        for col, fit in summary[fam]["slopes"].items():
            print(f"  {col}: slope={fit['slope']:.3f} r2={fit['r2']:.4f}")
    print(f"wrote {out}/power_sweep.csv, cascade_sweep.csv, "
          f"scaling_summary.json")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
