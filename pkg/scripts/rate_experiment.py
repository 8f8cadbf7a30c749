#!/usr/bin/env python3
"""Reproduce the O(1/n) forgetting-rate experiment on the static Gaussian model.

Runs twin closed-form filters started from N(0,1) and N(1,1) on a shared
observation path, writes the trace CSVs plus summary.json, and prints the
liminf estimate of n * BL_n against its predicted constant |sin X0|.

    python scripts/rate_experiment.py --horizon 2000 --seeds 42 7 --out out/rate
"""

import argparse
from pathlib import Path

from filterlab.cli import ExperimentConfig, run_experiment
from filterlab.presets import get_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=2000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[42])
    ap.add_argument("--out", default="out/rate")
    args = ap.parse_args()

    p = get_preset("static-gaussian")
    config = ExperimentConfig(
        name=p.name, spec=p.spec, prior_mu=p.prior_mu, prior_nu=p.prior_nu,
        grid=p.grid, horizon=args.horizon, seeds=tuple(args.seeds),
        method="kalman-static", static_model=p.static_model,
        out_dir=Path(args.out),
    )
    summary = run_experiment(config)
    print(f"rate class: {summary['rate_class']} (log-log slope {summary['rate_slope']:.3f})")
    for seed, est in summary["liminf_by_seed"].items():
        target = summary["model"]["liminf_target"][seed]
        print(f"seed {seed}: liminf estimate {est:.4f}, predicted constant {target:.4f}")
    print(f"artifacts in {config.out_dir}/ "
          f"(render with: plots liminf {config.out_dir}/trace_{args.seeds[0]}.csv "
          f"--out {config.out_dir}/liminf.svg)")


if __name__ == "__main__":
    main()
