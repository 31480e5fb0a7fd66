"""Analytical vs Monte Carlo MSE on the CV tracking scenario.

Writes mse.csv, mse_mc.csv and compare.csv under --out and prints a
summary of the agreement gates.

    python scripts/reproduce_benchmark.py --K 3821 --runs 10000 --out out/bench_full
"""
import argparse
import time
from pathlib import Path

import numpy as np

from kfmse.config import parse_noise_family
from kfmse.csvio import mse_header, mse_row, write_rows
from kfmse.montecarlo import McConfig, compare, default_parallel_width, empirical_mse
from kfmse.mse import predict_mse
from kfmse.scenario import CvScenario, benchmark_maneuvers, build_cv_models, generate_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=3821)
    ap.add_argument("--runs", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--noise", default="gaussian")
    ap.add_argument("--eta", type=float, default=0.99)
    ap.add_argument("--out", default="out/reproduce")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scen = CvScenario(K=args.K, eta=args.eta, noise_family=parse_noise_family(args.noise))
    am, tm = build_cv_models(scen)
    t = generate_trajectory(benchmark_maneuvers(args.K, scen.T), scen.T)

    predict_mse(t, tm, am)  # load compiled kernels before timing
    t0 = time.perf_counter()
    rep = predict_mse(t, tm, am)
    t_pred = time.perf_counter() - t0
    t0 = time.perf_counter()
    emp = empirical_mse(t, tm, am, McConfig(args.runs, args.seed,
                                            parallel_width=default_parallel_width()))
    t_mc = time.perf_counter() - t0
    c = compare(rep, emp)

    n = am.n_x
    write_rows(out / "mse.csv", mse_header(n), (
        mse_row(k, rep.mse_filter[k], rep.mse_smoother[k], rep.bias_filter[k],
                rep.bias_smoother[k], rep.assumed_P_filter[k], rep.assumed_P_smoother[k])
        for k in range(t.K + 1)))
    write_rows(out / "mse_mc.csv", ["k"] + [f"rmse_{w}_{i + 1}" for i in range(n)
                                            for w in ("filter", "smoother")],
               ([k, *np.ravel(np.column_stack([emp.rmse_filter()[k], emp.rmse_smoother()[k]]))]
                for k in range(t.K + 1)))
    write_rows(out / "compare.csv", ["k"] + [f"{f}_{i + 1}" for i in range(n)
                                             for f in ("z_filter", "z_smoother")],
               ([k, *np.ravel(np.column_stack([c.z_filter[k], c.z_smoother[k]]))]
                for k in range(t.K + 1)))

    ff, fs = c.fraction_within(3.0)
    k0 = min(50, t.K)
    rel = max(np.abs(c.rmse_rel_diff_filter[k0:]).max(), np.abs(c.rmse_rel_diff_smoother[k0:]).max())
    print(f"K={t.K}, N={args.runs}, noise={args.noise}, eta={args.eta}")
    print(f"predict {t_pred:.4f} s, Monte Carlo {t_mc:.1f} s, ratio {t_mc / t_pred:.0f}")
    print(f"within 3 SE: filter {ff:.2%}, smoother {fs:.2%}; max |z| {c.max_abs_z:.2f}")
    print(f"max RMSE relative difference for k >= {k0}: {rel:.2%}")
    for k in sorted({0, t.K // 4, t.K // 2, t.K}):
        print(f"  k={k:5d} rmse filter {np.round(rep.rmse_filter()[k], 2)} "
              f"smoother {np.round(rep.rmse_smoother()[k], 2)}")


if __name__ == "__main__":
    main()
