#!/usr/bin/env python3
"""Large randomized campaigns for the two convexity-repair lemmas.

Runs the triangle (median-repair, asserted k = 4.5) and barycenter
(asserted k = 40) campaigns over a grid of domain parameters Q and writes
one JSON report per campaign.

Example:
    python3 scripts/run_lemma_campaigns.py --trials 100000 --out-dir results/
"""
import argparse
import json
import pathlib

from dyadlab.bellman import run_barycenter_campaign, run_triangle_campaign


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100_000,
                    help="premise-valid trials per (lemma, Q)")
    ap.add_argument("--Q", type=float, action="append", default=None,
                    help="domain parameters (repeatable); default 1.5 3 10 50")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    qs = args.Q or [1.5, 3.0, 10.0, 50.0]

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for name, runner in (("triangle", run_triangle_campaign),
                         ("barycenter", run_barycenter_campaign)):
        reports = []
        for i, q in enumerate(qs):
            rep = runner(Q=q, valid_trials=args.trials,
                         seed=args.seed + 1000 * i)
            reports.append(rep.to_json())
            status = "OK" if rep.violations == 0 else "VIOLATED"
            failures += rep.violations
            print(f"{name} Q={q}: {rep.trials_valid} valid trials, "
                  f"violations={rep.violations}, max needed k="
                  f"{rep.max_needed_k:.4f} (asserted {rep.asserted_k}) "
                  f"[{status}]")
        (out / f"{name}_campaign.json").write_text(
            json.dumps(reports, indent=2))
    print(f"wrote {out}/triangle_campaign.json, barycenter_campaign.json")
    return 0 if failures == 0 else 2


if __name__ == "__main__":
    raise SystemExit(main())
