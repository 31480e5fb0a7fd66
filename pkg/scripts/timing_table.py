"""Timing of the analytical predictor against Monte Carlo over a range of K.

    python scripts/timing_table.py --k-list 500,1000,2000,4000 --runs 10000
"""
import argparse
import time

import numpy as np

from kfmse.cli import linear_fit, time_predict
from kfmse.montecarlo import McConfig, default_parallel_width, empirical_mse
from kfmse.scenario import CvScenario, benchmark_maneuvers, build_cv_models, generate_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k-list", default="500,1000,2000,4000")
    ap.add_argument("--runs", type=int, default=10_000)
    ap.add_argument("--repeats", type=int, default=15)
    ap.add_argument("--skip-mc", action="store_true")
    args = ap.parse_args()

    Ks = [int(k) for k in args.k_list.split(",")]
    am, tm = build_cv_models(CvScenario())
    trajs = [generate_trajectory(benchmark_maneuvers(K), 0.05) for K in Ks]
    tp = time_predict([(t, tm, am) for t in trajs], args.repeats)
    print(f"{'K':>6}  {'predict [s]':>12}  {'MC [s]':>9}  {'ratio':>7}")
    for K, t, p in zip(Ks, trajs, tp):
        m = np.nan
        if not args.skip_mc:
            t0 = time.perf_counter()
            empirical_mse(t, tm, am, McConfig(args.runs, 0, parallel_width=default_parallel_width()))
            m = time.perf_counter() - t0
        print(f"{K:6d}  {p:12.5f}  {m:9.2f}  {m / p:7.0f}")
    if len(Ks) > 1:
        fit = linear_fit(Ks, tp)
        print(f"\nlinear fit: {fit['slope'] * 1e6:.2f} us/step, R^2 = {fit['r2']:.4f}")


if __name__ == "__main__":
    main()
