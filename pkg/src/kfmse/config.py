"""Run configuration: one JSON document, ``schema_version`` 1.

Example::

    {
      "schema_version": 1,
      "scenario": {"cv": {"T": 0.05, "eta": 0.99, "sigma_a2": 10,
                          "sigma2_true": [2000, 2000], "sigma2_assumed": [1800, 1800],
                          "mu0": [75000, 20000, -200, -180],
                          "Sigma0": [2000, 2000, 100, 100],
                          "noise_family": "gaussian"}},
      "trajectory": {"maneuvers": "benchmark", "K": 3821},
      "mc": {"n_runs": 10000, "seed": 1},
      "output": {"dir": "out", "emit": {"full_matrices": false}},
      "compare": {"z_threshold": 4.0, "analytical_overrides": {"eta": 0.99}},
      "bench": {"K_list": [500, 1000, 2000, 4000], "repeats": 5}
    }

``scenario`` is either ``{"cv": {...}}`` or ``{"explicit": {F, Q, H, R, mu0,
Sigma0, H_bar, R_bar, noise_family}}`` with matrices as row-major nested
lists.  ``trajectory`` is exactly one of ``{"file": path}`` or
``{"maneuvers": spec | "benchmark"}``; a maneuver spec is
``{"initial_state": [px, py, vx, vy], "segments": [{"duration": s, "mode":
"cv"|"ct"|"ca", "rate": w, "accel": [ax, ay]}, ...]}``.  Relative paths are
resolved against the config file's directory.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .csvio import load_trajectory_csv
from .models import AssumedModel, NoiseFamily, Trajectory, TrueMeasModel
from .montecarlo import McConfig, default_parallel_width
from .scenario import (
    BENCH_K,
    CvScenario,
    ManeuverSpec,
    Segment,
    benchmark_maneuvers,
    build_cv_models,
    generate_trajectory,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def parse_noise_family(spec) -> NoiseFamily:
    """``"gaussian"``, ``"uniform"``, ``"student_t:5"`` or ``{"student_t": 5}``."""
    if isinstance(spec, NoiseFamily):
        return spec
    if isinstance(spec, dict) and len(spec) == 1 and "student_t" in spec:
        return NoiseFamily.student_t(spec["student_t"])
    if isinstance(spec, str):
        name, _, arg = spec.partition(":")
        if name == "student_t":
            return NoiseFamily.student_t(float(arg or 5))
        return NoiseFamily(name)
    raise ConfigError(f"cannot parse noise family {spec!r}")


@dataclass
class ExplicitModels:
    am: AssumedModel
    tm: TrueMeasModel


@dataclass
class Emit:
    mse_csv: bool = True
    full_matrices: bool = False
    comparison: bool = True
    timing: bool = True


@dataclass
class RunConfig:
    scenario: CvScenario | ExplicitModels
    trajectory_file: Path | None = None
    maneuvers: ManeuverSpec | str | None = None
    trajectory_K: int | None = None
    mc: McConfig | None = None
    output: Path = Path("out")
    emit: Emit = field(default_factory=Emit)
    z_threshold: float = 4.0
    analytical_overrides: dict = field(default_factory=dict)
    bench_K: tuple[int, ...] = (500, 1000, 2000, 4000)
    bench_repeats: int = 5

    def __post_init__(self):
        if (self.trajectory_file is None) == (self.maneuvers is None):
            raise ConfigError("exactly one trajectory source (file or maneuvers) is required")
        if self.trajectory_file is not None and not Path(self.trajectory_file).exists():
            raise ConfigError(f"trajectory file {self.trajectory_file} does not exist")

    @property
    def T(self) -> float | None:
        return self.scenario.T if isinstance(self.scenario, CvScenario) else None

    def trajectory(self, K: int | None = None) -> Trajectory:
        """The configured trajectory, optionally regenerated/truncated to ``K``."""
        if self.trajectory_file is not None:
            t = load_trajectory_csv(self.trajectory_file)
            return t if K is None else t.truncate(K)
        T = self.T
        if T is None:
            raise ConfigError("maneuver trajectories need a cv scenario (for T)")
        if self.maneuvers == "benchmark":
            return generate_trajectory(benchmark_maneuvers(K or self.trajectory_K or BENCH_K, T), T)
        t = generate_trajectory(self.maneuvers, T)
        return t if K is None else t.truncate(K)

    def models(self, overrides: dict | None = None) -> tuple[AssumedModel, TrueMeasModel]:
        over = dict(overrides or {})
        if isinstance(self.scenario, CvScenario):
            if "noise_family" in over:
                over["noise_family"] = parse_noise_family(over["noise_family"])
            try:
                return build_cv_models(dataclasses.replace(self.scenario, **over))
            except TypeError as exc:
                raise ConfigError(f"bad scenario override: {exc}") from None
        am, tm = self.scenario.am, self.scenario.tm
        am_keys = {"F", "Q", "H", "R", "mu0", "Sigma0"}
        am = am.replace(**{k: np.asarray(v, float) for k, v in over.items() if k in am_keys})
        tm_over = {k: v for k, v in over.items() if k not in am_keys}
        if tm_over:
            if "noise_family" in tm_over:
                tm_over["noise_family"] = parse_noise_family(tm_over["noise_family"])
            tm = TrueMeasModel(**{"H_bar": tm.H_bar, "R_bar": tm.R_bar,
                                  "noise_family": tm.noise_family, **tm_over})
        return am, tm

    def with_mc(self, seed=None, runs=None, noise=None) -> McConfig:
        mc = self.mc or McConfig(parallel_width=default_parallel_width())
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if runs is not None:
            changes["n_runs"] = runs
        if noise is not None:
            changes["noise_family"] = parse_noise_family(noise)
        return dataclasses.replace(mc, **changes)


def _cv(d: dict) -> CvScenario:
    d = dict(d)
    if "noise_family" in d:
        d["noise_family"] = parse_noise_family(d["noise_family"])
    for key in ("sigma2_true", "sigma2_assumed", "mu0"):
        if key in d:
            d[key] = tuple(float(v) for v in d[key])
    known = {f.name for f in dataclasses.fields(CvScenario)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown cv scenario keys: {sorted(unknown)}")
    d.setdefault("K", 1)  # placeholder; the trajectory decides the length
    return CvScenario(**d)


def _explicit(d: dict) -> ExplicitModels:
    try:
        am = AssumedModel(*(np.asarray(d[k], float) for k in ("F", "Q", "H", "R", "mu0", "Sigma0")))
        tm = TrueMeasModel(np.asarray(d["H_bar"], float), np.asarray(d["R_bar"], float),
                           parse_noise_family(d.get("noise_family", "gaussian")))
    except KeyError as exc:
        raise ConfigError(f"explicit scenario is missing {exc}") from None
    return ExplicitModels(am, tm)


def _maneuvers(d) -> ManeuverSpec | str:
    if d == "benchmark":
        return d
    segs = []
    for s in d["segments"]:
        segs.append(Segment(float(s["duration"]), s.get("mode", "cv"), float(s.get("rate", 0.0)),
                            tuple(float(a) for a in s.get("accel", (0.0, 0.0)))))
    return ManeuverSpec(tuple(segs), tuple(float(v) for v in d["initial_state"]))


def maneuvers_to_dict(spec: ManeuverSpec) -> dict:
    return {
        "initial_state": list(spec.initial_state),
        "segments": [{"duration": s.duration, "mode": s.mode, "rate": s.rate,
                      "accel": list(s.accel)} for s in spec.segments],
    }


def parse_config(doc: dict, base: Path = Path(".")) -> RunConfig:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    sc = doc.get("scenario") or {}
    if len(sc) != 1 or next(iter(sc)) not in ("cv", "explicit"):
        raise ConfigError("scenario must contain exactly one of 'cv' or 'explicit'")
    scenario = _cv(sc["cv"]) if "cv" in sc else _explicit(sc["explicit"])

    tr = doc.get("trajectory") or {}
    sources = [k for k in ("file", "maneuvers") if k in tr]
    if len(sources) != 1:
        raise ConfigError("trajectory needs exactly one of 'file' or 'maneuvers'")
    tfile = base / tr["file"] if "file" in tr else None
    maneuvers = _maneuvers(tr["maneuvers"]) if "maneuvers" in tr else None

    mc = None
    if "mc" in doc:
        m = dict(doc["mc"])
        if "noise_family" in m:
            m["noise_family"] = parse_noise_family(m["noise_family"])
        m.setdefault("parallel_width", default_parallel_width())
        mc = McConfig(**m)

    out = doc.get("output", {})
    emit = Emit(**out.get("emit", {}))
    cmp_ = doc.get("compare", {})
    bench = doc.get("bench", {})
    return RunConfig(
        scenario=scenario,
        trajectory_file=tfile,
        maneuvers=maneuvers,
        trajectory_K=tr.get("K"),
        mc=mc,
        output=base / out.get("dir", "out"),
        emit=emit,
        z_threshold=float(cmp_.get("z_threshold", 4.0)),
        analytical_overrides=dict(cmp_.get("analytical_overrides", {})),
        bench_K=tuple(int(k) for k in bench.get("K_list", (500, 1000, 2000, 4000))),
        bench_repeats=int(bench.get("repeats", 5)),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc, path.parent)
