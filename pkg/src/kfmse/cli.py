"""``kfmse`` command-line front end.

Exit status: 0 on success, 1 when a ``--strict`` statistical gate fails,
2 on any configuration, input or numerical error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import timeit
from contextlib import ExitStack
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .csvio import (
    NonContiguousIndex,
    ParseError,
    fmt,
    mse_header,
    mse_row,
    write_rows,
    write_trajectory_csv,
)
from .kalman import forward_covariances, rts_smooth
from .linalg import NonSquare, NotPositiveDefinite
from .models import DimensionMismatch, validate_scenario
from .montecarlo import ShapeMismatch, compare, empirical_mse
from .mse import MseReport, ScenarioError, iter_mse, predict_mse

log = logging.getLogger("kfmse")

EXIT_OK, EXIT_GATE, EXIT_ERROR = 0, 1, 2
FULL_FIELDS = ("mse_filter", "mse_smoother", "cov_filter", "cov_smoother",
               "assumed_P_filter", "assumed_P_smoother")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out) if args.out else cfg.output
    out.mkdir(parents=True, exist_ok=True)
    return out


class _FullWriter:
    """Row-major per-k matrix dumps, one CSV per quantity under ``mse_full/``."""

    def __init__(self, stack: ExitStack, out: Path, n: int):
        d = out / "mse_full"
        d.mkdir(exist_ok=True)
        header = ",".join(["k"] + [f"m_{i + 1}_{j + 1}" for i in range(n) for j in range(n)])
        self.files = {}
        for name in FULL_FIELDS:
            fh = stack.enter_context((d / f"{name}.csv").open("w"))
            fh.write(header + "\n")
            self.files[name] = fh

    def write(self, k: int, row) -> None:
        for name, fh in self.files.items():
            fh.write(",".join([str(k)] + [fmt(v) for v in getattr(row, name).ravel()]) + "\n")


def _report_rows(rep: MseReport):
    for k in range(rep.K + 1):
        yield k, _Step(rep, k)


class _Step:
    def __init__(self, rep: MseReport, k: int):
        self._rep, self._k = rep, k

    def __getattr__(self, name):
        return getattr(self._rep, name)[self._k]


def _emit_predict(cfg: RunConfig, out: Path, rows, n_x: int, full: bool) -> int:
    """Write ``mse.csv`` (and optionally ``mse_full/``) from an iterator of steps."""
    with ExitStack() as stack:
        fw = _FullWriter(stack, out, n_x) if full else None

        def gen():
            for k, r in rows:
                if fw is not None:
                    fw.write(k, r)
                yield mse_row(k, r.mse_filter, r.mse_smoother, r.bias_filter, r.bias_smoother,
                              r.assumed_P_filter, r.assumed_P_smoother)

        if cfg.emit.mse_csv:
            return write_rows(out / "mse.csv", mse_header(n_x), gen())
        return sum(1 for _ in gen())


def cmd_predict(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    t = cfg.trajectory()
    am, tm = cfg.models()
    full = args.full_matrices or cfg.emit.full_matrices
    t0 = time.perf_counter()
    if args.stream:
        rows = ((r.k, r) for r in iter_mse(t, tm, am))
    else:
        rows = _report_rows(predict_mse(t, tm, am))
    n = _emit_predict(cfg, out, rows, am.n_x, full)
    elapsed = time.perf_counter() - t0
    if cfg.emit.timing:
        (out / "timing.json").write_text(json.dumps(
            {"K": t.K, "n_x": am.n_x, "stream": bool(args.stream),
             "t_predict_and_write_seconds": elapsed}, indent=2) + "\n")
    log.info("predict: wrote %d rows to %s in %.3f s", n, out, elapsed)
    return EXIT_OK


def _mc_config(args, cfg: RunConfig):
    return cfg.with_mc(seed=args.seed, runs=args.runs, noise=getattr(args, "noise", None))


def _write_mc(out: Path, emp, am, K: int) -> None:
    fwd = forward_covariances(am, K)
    rts = rts_smooth(am, fwd)
    n = am.n_x
    se_f, se_s = emp.std_err_diag_filter, emp.std_err_diag_smoother

    def rows():
        for k in range(K + 1):
            yield mse_row(k, emp.mean_sq_err_filter[k], emp.mean_sq_err_smoother[k],
                          emp.mean_err_filter[k], emp.mean_err_smoother[k],
                          fwd.P_filt[k], rts.P_smooth[k], extra=(se_f[k], se_s[k]))

    write_rows(out / "mse_mc.csv", mse_header(n, ("se_mse_filter", "se_mse_smoother")), rows())


def cmd_montecarlo(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    t = cfg.trajectory()
    am, tm = cfg.models()
    mc = _mc_config(args, cfg)
    t0 = time.perf_counter()
    emp = empirical_mse(t, tm, am, mc)
    elapsed = time.perf_counter() - t0
    _write_mc(out, emp, am, t.K)
    if cfg.emit.timing:
        (out / "timing.json").write_text(json.dumps(
            {"K": t.K, "n_runs": mc.n_runs, "seed": mc.seed,
             "parallel_width": mc.parallel_width, "t_mc_seconds": elapsed}, indent=2) + "\n")
    log.info("montecarlo: %d runs, K=%d, %.2f s", mc.n_runs, t.K, elapsed)
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    t = cfg.trajectory()
    am, tm = cfg.models()
    am_a, tm_a = cfg.models(cfg.analytical_overrides)
    mc = _mc_config(args, cfg)
    z_thr = args.z_threshold if args.z_threshold is not None else cfg.z_threshold

    rep = predict_mse(t, tm_a, am_a)
    emp = empirical_mse(t, tm, am, mc)
    cmp_ = compare(rep, emp, z_thr)

    _emit_predict(cfg, out, _report_rows(rep), am_a.n_x,
                  args.full_matrices or cfg.emit.full_matrices)
    _write_mc(out, emp, am, t.K)
    if cfg.emit.comparison:
        n = am.n_x
        cols = ["k"] + [f"{f}_{i + 1}" for i in range(n)
                        for f in ("z_filter", "z_smoother", "rel_mse_filter", "rel_mse_smoother",
                                  "rel_rmse_filter", "rel_rmse_smoother")]
        arrs = (cmp_.z_filter, cmp_.z_smoother, cmp_.rel_diff_filter, cmp_.rel_diff_smoother,
                cmp_.rmse_rel_diff_filter, cmp_.rmse_rel_diff_smoother)
        write_rows(out / "compare.csv", cols,
                   ([k, *(a[k, i] for i in range(n) for a in arrs)] for k in range(t.K + 1)))

    frac_f, frac_s = cmp_.fraction_within(3.0)
    summary = {
        "K": t.K, "n_runs": mc.n_runs, "seed": mc.seed, "z_threshold": z_thr,
        "max_abs_z": cmp_.max_abs_z, "passed": cmp_.passed,
        "fraction_within_3se_filter": frac_f, "fraction_within_3se_smoother": frac_s,
    }
    (out / "compare_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"compare: max|z| = {cmp_.max_abs_z:.3f} (threshold {z_thr:g}), "
          f"within 3 SE: filter {frac_f:.2%}, smoother {frac_s:.2%} -> "
          f"{'PASS' if cmp_.passed else 'FAIL'}")
    if args.strict and not cmp_.passed:
        return EXIT_GATE
    return EXIT_OK


def linear_fit(K, t) -> dict:
    K, t = np.asarray(K, float), np.asarray(t, float)
    slope, intercept = np.polyfit(K, t, 1)
    resid = t - (slope * K + intercept)
    ss_tot = np.sum((t - t.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": float(r2)}


def time_predict(cases, repeats: int) -> list[float]:
    """Best-of-``repeats`` wall time of ``predict_mse`` for each ``(t, tm, am)`` case.

    Repeats are interleaved round-robin across cases so that slow stretches
    on a shared machine hit every case alike; GC is paused as in timeit.
    """
    timers = [timeit.Timer(lambda c=c: predict_mse(*c)) for c in cases]
    for c in cases:
        predict_mse(*c)  # warm-up (JIT cache load)
    best = [float("inf")] * len(cases)
    for _ in range(repeats):
        for i, tmr in enumerate(timers):
            best[i] = min(best[i], tmr.timeit(number=1))
    return best


def cmd_bench(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    Ks = args.k_list or list(cfg.bench_K)
    repeats = args.repeats or cfg.bench_repeats
    am, tm = cfg.models()
    mc = _mc_config(args, cfg)
    trajs = [cfg.trajectory(K) for K in Ks]
    for K, t in zip(Ks, trajs):
        if t.K != K:
            raise ConfigError(f"trajectory has only {t.K} steps, cannot bench K={K}")
    tp = time_predict([(t, tm, am) for t in trajs], repeats)
    rows = []
    for K, t, t_pred in zip(Ks, trajs, tp):
        t_mc = np.nan
        if not args.skip_mc:
            t0 = time.perf_counter()
            empirical_mse(t, tm, am, mc)
            t_mc = time.perf_counter() - t0
        rows.append([K, t_pred, t_mc, t_mc / t_pred])
        log.info("bench K=%d: predict %.4f s, mc %.2f s", K, t_pred, t_mc)
    write_rows(out / "bench.csv", ["K", "t_predict_seconds", "t_mc_seconds", "ratio"], rows)
    fit = linear_fit(Ks, tp) if len(Ks) >= 2 else {}
    fit.update({"K": list(Ks), "n_runs": mc.n_runs, "repeats": repeats,
                "doubling_ratios": {f"{a}->{b}": tb / ta for (a, ta), (b, tb)
                                    in zip(zip(Ks, tp), zip(Ks[1:], tp[1:])) if b == 2 * a}})
    (out / "bench_fit.json").write_text(json.dumps(fit, indent=2) + "\n")
    for K, a, b, r in rows:
        print(f"K={K:6d}  predict {a:.5f} s  mc {b:.3f} s  ratio {r:.1f}")
    if "r2" in fit:
        print(f"linear fit: slope {fit['slope']:.3e} s/step, R^2 {fit['r2']:.4f}")
    return EXIT_OK


def cmd_gen_trajectory(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    t = cfg.trajectory(args.K)
    write_trajectory_csv(out / "trajectory.csv", t)
    log.info("gen-trajectory: K=%d written to %s", t.K, out / "trajectory.csv")
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    t = cfg.trajectory()
    am, tm = cfg.models()
    rep = validate_scenario(t, tm, am)
    print(rep)
    if cfg.analytical_overrides:
        am_a, tm_a = cfg.models(cfg.analytical_overrides)
        rep_a = validate_scenario(t, tm_a, am_a)
        print("analytical overrides:", rep_a)
        if not rep_a.ok:
            return EXIT_ERROR
    return EXIT_OK if rep.ok else EXIT_ERROR


COMMANDS = {
    "predict": cmd_predict,
    "montecarlo": cmd_montecarlo,
    "compare": cmd_compare,
    "bench": cmd_bench,
    "gen-trajectory": cmd_gen_trajectory,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kfmse", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", help="output directory (overrides the config)")
        return s

    def mc_flags(s):
        s.add_argument("--seed", type=_u64)
        s.add_argument("--runs", type=_positive)
        s.add_argument("--noise", help="override noise family, e.g. uniform or student_t:5")

    s = add("predict", "analytical MSE curves")
    s.add_argument("--full-matrices", action="store_true")
    s.add_argument("--stream", action="store_true", help="stream rows instead of buffering")

    mc_flags(add("montecarlo", "empirical MSE by simulation"))

    s = add("compare", "analytical vs Monte Carlo")
    mc_flags(s)
    s.add_argument("--strict", action="store_true", help="exit 1 if any |z| exceeds the threshold")
    s.add_argument("--z-threshold", type=float)
    s.add_argument("--full-matrices", action="store_true")

    s = add("bench", "timing of predict vs Monte Carlo")
    mc_flags(s)
    s.add_argument("--k-list", type=lambda x: [int(v) for v in x.split(",")],
                   help="comma-separated K values")
    s.add_argument("--repeats", type=_positive)
    s.add_argument("--skip-mc", action="store_true", help="time predict only")

    s = add("gen-trajectory", "write the configured trajectory as CSV")
    s.add_argument("--K", type=_positive, help="number of steps (benchmark maneuvers only)")

    add("validate", "check the configuration and scenario")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ParseError, NonContiguousIndex, ScenarioError, DimensionMismatch,
            NotPositiveDefinite, NonSquare, ShapeMismatch, FileNotFoundError, ValueError) as exc:
        print(f"kfmse {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
