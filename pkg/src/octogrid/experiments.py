"""Benchmark drivers behind the command-line subcommands.

Each driver returns an :class:`ExperimentReport`: raw metric rows, a small
summary table and a list of failed assertions (empty means success). Wall
clock columns aside, every report is a pure function of its configuration.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ._parallel import default_workers
from .geometry import DEFAULT_RATIO, make_configs
from .grid import navigable_space_ratio
from .octree import build_parallel, build_serial
from .pipeline import direct_map, pomp_map
from .planners import PLANNERS, PlanRequest
from .scenes import (CUBES_GOAL, CUBES_START, CYLINDER_GOAL, CYLINDER_START,
                     CYLINDER_WORKSPACE, gen_cylinder_scene, gen_mixed_scene, gen_moving_cubes)

METRICS_VERSION = 1
METRIC_COLUMNS = ["experiment", "trial", "seed", "resolution", "ratio", "workers", "method",
                  "planner", "build_ms", "project_ms", "nsr", "success", "path_len_m",
                  "plan_ms", "expansions"]
METHODS = ("pomp", "direct_ogm", "serial_octree")

# points used by the full-size experiments; desk runs scale these down
FULL_POINTS = {"build-bench": 1_000_000, "map-bench": 500_000, "nsr-bench": 600_000,
               "plan-bench": 500_000, "ratio-sweep": 70_000}
DESK_SCALE = {"build-bench": 0.2, "map-bench": 0.04, "nsr-bench": 0.1, "plan-bench": 0.04,
              "ratio-sweep": 1.0}
DEFAULT_RESOLUTIONS = {"build-bench": [0.1, 0.5, 1.0], "map-bench": [0.25, 0.5, 1.0],
                       "nsr-bench": [1.0, 2.0, 3.0, 4.0, 5.0],
                       "plan-bench": [0.5, 1.0, 1.5, 2.0],
                       "ratio-sweep": [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]}
DEFAULT_RATIOS = [0.95, 0.75, 0.5, 0.25]


@dataclass
class RunConfig:
    experiment: str
    resolutions: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=lambda: [DEFAULT_RATIO])
    seeds: list[int] = field(default_factory=lambda: [0])
    trials: int = 5
    workers: list[int] = field(default_factory=list)
    out_dir: str = "results"
    scale: Optional[float] = None
    repeats: int = 5
    warmup: int = 3
    cylinders: int = 20
    frames: int = 200
    planners: list[str] = field(default_factory=lambda: ["astar", "jps"])

    def __post_init__(self):
        if self.experiment in DEFAULT_RESOLUTIONS and not self.resolutions:
            self.resolutions = list(DEFAULT_RESOLUTIONS[self.experiment])
        if self.experiment == "ratio-sweep" and self.ratios == [DEFAULT_RATIO]:
            self.ratios = list(DEFAULT_RATIOS)
        if not self.workers:
            self.workers = [default_workers()]
        if self.scale is None:
            self.scale = DESK_SCALE.get(self.experiment, 1.0)
        for name in ("resolutions", "ratios", "seeds", "workers", "planners"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if self.trials < 1 or self.repeats < 1 or self.warmup < 0 or self.frames < 1:
            raise ValueError("trials, repeats and frames must be >= 1, warmup >= 0")
        if any(r <= 0 for r in self.resolutions) or any(not 0 < r <= 1 for r in self.ratios):
            raise ValueError("resolutions must be positive and ratios in (0, 1]")
        if any(w < 1 for w in self.workers):
            raise ValueError("worker counts must be >= 1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        unknown = set(self.planners) - set(PLANNERS)
        if unknown:
            raise ValueError(f"unknown planners {sorted(unknown)}")

    @property
    def point_count(self) -> int:
        return max(1, int(round(FULL_POINTS.get(self.experiment, 100_000) * self.scale)))

    def trial_seeds(self) -> list[int]:
        """``trials`` seeds per base seed, spaced so runs never overlap."""
        return [s * 1_000_003 + t for s in self.seeds for t in range(self.trials)]

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass
class MetricsRow:
    experiment: str
    trial: int
    seed: int
    resolution: float
    ratio: float
    workers: int
    method: str
    planner: str = ""
    build_ms: Optional[float] = None
    project_ms: Optional[float] = None
    nsr: Optional[float] = None
    success: Optional[bool] = None
    path_len_m: Optional[float] = None
    plan_ms: Optional[float] = None
    expansions: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class ExperimentReport:
    config: RunConfig
    rows: list[MetricsRow]
    summary: list[dict]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def write_metrics(path, rows: list[MetricsRow], cfg: RunConfig) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# octogrid-metrics v{METRICS_VERSION} experiment={cfg.experiment} "
                 f"scale={cfg.scale!r} points={cfg.point_count}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in METRIC_COLUMNS])


def write_summary(path, summary: list[dict]) -> None:
    if not summary:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        w.writeheader()
        for row in summary:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def timings(fn: Callable[[], object], repeats: int, warmup: int) -> list[float]:
    """Wall seconds of ``repeats`` calls after ``warmup`` discarded ones."""
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return out


def _stats(xs: list[float]) -> tuple[float, float, float]:
    ms = [1e3 * x for x in xs]
    return statistics.fmean(ms), (statistics.pstdev(ms) if len(ms) > 1 else 0.0), \
        statistics.median(ms)


# -- build-bench ----------------------------------------------------------------


def build_bench(cfg: RunConfig, points: Optional[np.ndarray] = None) -> ExperimentReport:
    """Serial versus parallel octree construction on one cylinder-world cloud."""
    if points is None:
        spec, points = gen_cylinder_scene(cfg.seeds[0], cfg.cylinders, cfg.point_count)
        ws = spec.workspace
    else:
        ws = CYLINDER_WORKSPACE
    rows, summary = [], []
    for res in cfg.resolutions:
        tcfg, _ = make_configs(ws, res)
        serial = timings(lambda: build_serial(points, tcfg, store_points=False), cfg.repeats,
                         cfg.warmup)
        s_mean, s_std, s_med = _stats(serial)
        for t, x in enumerate(serial):
            rows.append(MetricsRow(cfg.experiment, t, cfg.seeds[0], res, tcfg.ratio, 1,
                                   "serial_octree", build_ms=1e3 * x))
        for w in cfg.workers:
            par = timings(lambda: build_parallel(points, tcfg, w, store_points=False),
                          cfg.repeats, cfg.warmup)
            p_mean, p_std, p_med = _stats(par)
            for t, x in enumerate(par):
                rows.append(MetricsRow(cfg.experiment, t, cfg.seeds[0], res, tcfg.ratio, w,
                                       "pomp", build_ms=1e3 * x))
            summary.append({"resolution": res, "points": len(points), "workers": w,
                            "serial_ms_mean": s_mean, "serial_ms_std": s_std,
                            "serial_ms_median": s_med, "parallel_ms_mean": p_mean,
                            "parallel_ms_std": p_std, "parallel_ms_median": p_med,
                            "speedup": s_med / p_med if p_med > 0 else math.inf})
    return ExperimentReport(cfg, rows, summary, [])


# -- map-bench ------------------------------------------------------------------


def map_bench(cfg: RunConfig) -> ExperimentReport:
    """Octree build plus projection against direct marking, same cloud and grid geometry."""
    rows, failures = [], []
    per_res: dict[float, list] = {r: [] for r in cfg.resolutions}
    w = cfg.workers[0]
    warm = False
    for trial, seed in enumerate(cfg.trial_seeds()):
        spec, pts = gen_cylinder_scene(seed, cfg.cylinders, cfg.point_count)
        for res in cfg.resolutions:
            if not warm:
                for _ in range(cfg.warmup):
                    pomp_map(pts, spec.workspace, res, worker_count=w)
                    direct_map(pts, spec.workspace, res)
                warm = True
            m = pomp_map(pts, spec.workspace, res, worker_count=w)
            d, d_s = direct_map(pts, spec.workspace, res)
            if np.any((m.grid.cells == 1) & (d.cells == 0)):
                failures.append(f"seed {seed} res {res}: projected cell outside direct grid")
            rows.append(MetricsRow(cfg.experiment, trial, seed, res, DEFAULT_RATIO, w, "pomp",
                                   build_ms=1e3 * m.build_s, project_ms=1e3 * m.project_s,
                                   nsr=navigable_space_ratio(m.grid, spec.workspace)))
            rows.append(MetricsRow(cfg.experiment, trial, seed, res, DEFAULT_RATIO, 1,
                                   "direct_ogm", build_ms=1e3 * d_s,
                                   nsr=navigable_space_ratio(d, spec.workspace)))
            per_res[res].append((1e3 * (m.build_s + m.project_s), 1e3 * d_s))
    summary = []
    for res, vals in per_res.items():
        pomp = [v[0] for v in vals]
        direct = [v[1] for v in vals]
        summary.append({"resolution": res, "points": cfg.point_count, "workers": w,
                        "pomp_ms_mean": statistics.fmean(pomp),
                        "pomp_ms_median": statistics.median(pomp),
                        "direct_ms_mean": statistics.fmean(direct),
                        "direct_ms_median": statistics.median(direct)})
    return ExperimentReport(cfg, rows, summary, failures)


# -- nsr-bench ------------------------------------------------------------------


def nsr_trial(seed: int, res: float, point_count: int, ratio: float = DEFAULT_RATIO,
              worker_count: int = 1):
    """Navigable space ratios ``(pomp, direct, superset holds)`` for one mixed world."""
    spec, pts = gen_mixed_scene(seed, point_count=point_count)
    m = pomp_map(pts, spec.workspace, res, ratio, worker_count=worker_count)
    d, _ = direct_map(pts, spec.workspace, res)
    subset = not np.any((m.grid.cells == 1) & (d.cells == 0))
    return (navigable_space_ratio(m.grid, spec.workspace),
            navigable_space_ratio(d, spec.workspace), subset)


def nsr_bench(cfg: RunConfig) -> ExperimentReport:
    rows, failures = [], []
    gaps: dict[float, list[float]] = {r: [] for r in cfg.resolutions}
    w = cfg.workers[0]
    for trial, seed in enumerate(cfg.trial_seeds()):
        for res in cfg.resolutions:
            a, b, subset = nsr_trial(seed, res, cfg.point_count, cfg.ratios[0], w)
            if not subset or a < b:
                failures.append(f"seed {seed} res {res}: NSR {a:.6f} < direct {b:.6f}"
                                if a < b else f"seed {seed} res {res}: superset violated")
            rows.append(MetricsRow(cfg.experiment, trial, seed, res, cfg.ratios[0], w, "pomp",
                                   nsr=a))
            rows.append(MetricsRow(cfg.experiment, trial, seed, res, cfg.ratios[0], 1,
                                   "direct_ogm", nsr=b))
            gaps[res].append(a - b)
    summary = [{"resolution": r, "trials": len(g), "mean_gap_pp": 100 * statistics.fmean(g),
                "min_gap_pp": 100 * min(g)} for r, g in gaps.items()]
    return ExperimentReport(cfg, rows, summary, failures)


# -- plan-bench -----------------------------------------------------------------


@dataclass
class PlanTrial:
    seed: int
    resolution: float
    results: dict  # (method, planner) -> PlanResult


def plan_trial(seed: int, res: float, cylinders: int, point_count: int, planners=("astar",),
               ratio: float = DEFAULT_RATIO, worker_count: int = 1) -> PlanTrial:
    spec, pts = gen_cylinder_scene(seed, cylinders, point_count)
    grids = {"pomp": pomp_map(pts, spec.workspace, res, ratio, worker_count=worker_count).grid,
             "direct_ogm": direct_map(pts, spec.workspace, res)[0]}
    req = PlanRequest(CYLINDER_START, CYLINDER_GOAL)
    return PlanTrial(seed, res, {(m, p): PLANNERS[p](g, req) for m, g in grids.items()
                                 for p in planners})


def plan_violations(trial: PlanTrial, planners) -> list[str]:
    out = []
    for p in planners:
        a, b = trial.results[("pomp", p)], trial.results[("direct_ogm", p)]
        tag = f"seed {trial.seed} res {trial.resolution} {p}"
        if b.success and not a.success:
            out.append(f"{tag}: direct grid solved but projected grid did not")
        if a.success and b.success and not a.length <= b.length:
            out.append(f"{tag}: projected length {a.length} > direct {b.length}")
    if "astar" in planners and "jps" in planners:
        for m in ("pomp", "direct_ogm"):
            a, j = trial.results[(m, "astar")], trial.results[(m, "jps")]
            if a.success != j.success or (a.success and abs(a.length - j.length)
                                          > 1e-9 * max(a.length, 1.0)):
                out.append(f"seed {trial.seed} res {trial.resolution} {m}: JPS differs from A*")
    return out


def plan_bench(cfg: RunConfig) -> ExperimentReport:
    rows, failures = [], []
    rates: dict = {}
    w = cfg.workers[0]
    for trial_no, seed in enumerate(cfg.trial_seeds()):
        for res in cfg.resolutions:
            tr = plan_trial(seed, res, cfg.cylinders, cfg.point_count, cfg.planners,
                            cfg.ratios[0], w)
            failures += plan_violations(tr, cfg.planners)
            for p in cfg.planners:
                both = all(tr.results[(m, p)].success for m in ("pomp", "direct_ogm"))
                for m in ("pomp", "direct_ogm"):
                    r = tr.results[(m, p)]
                    rates.setdefault((res, m, p), []).append(r.success)
                    rows.append(MetricsRow(
                        cfg.experiment, trial_no, seed, res, cfg.ratios[0],
                        w if m == "pomp" else 1, m, p, success=r.success,
                        path_len_m=r.length if both else None,
                        plan_ms=1e3 * r.wall_time if both else None,
                        expansions=r.expansions))
    summary = []
    for res in cfg.resolutions:
        for p in cfg.planners:
            a = statistics.fmean(rates[(res, "pomp", p)])
            b = statistics.fmean(rates[(res, "direct_ogm", p)])
            if a < b:
                failures.append(f"res {res} {p}: success rate {a:.3f} < direct {b:.3f}")
            summary.append({"resolution": res, "planner": p, "pomp_success_rate": a,
                            "direct_success_rate": b})
    return ExperimentReport(cfg, rows, summary, failures)


# -- ratio-sweep ----------------------------------------------------------------


def ratio_sweep(cfg: RunConfig, frames: Optional[int] = None) -> ExperimentReport:
    """Path-finding rate per threshold ratio on the moving-cube stream."""
    n_frames = frames or cfg.frames
    cubes = gen_moving_cubes(cfg.seeds[0], point_budget=cfg.point_count)
    req = PlanRequest(CUBES_START, CUBES_GOAL)
    plan = PLANNERS[cfg.planners[0]]
    w = cfg.workers[0]
    hits: dict = {}
    rows, failures = [], []
    for t in range(n_frames):
        pts = cubes.frame(t).points
        for res in cfg.resolutions:
            for ratio in cfg.ratios:
                r = plan(pomp_map(pts, cubes.workspace, res, ratio, worker_count=w).grid, req)
                hits.setdefault((res, ratio), []).append(r.success)
                rows.append(MetricsRow(cfg.experiment, t, cfg.seeds[0], res, ratio, w, "pomp",
                                       cfg.planners[0], success=r.success,
                                       path_len_m=r.length, expansions=r.expansions))
            r = plan(direct_map(pts, cubes.workspace, res)[0], req)
            hits.setdefault((res, None), []).append(r.success)
            rows.append(MetricsRow(cfg.experiment, t, cfg.seeds[0], res, math.nan, 1,
                                   "direct_ogm", cfg.planners[0], success=r.success,
                                   path_len_m=r.length, expansions=r.expansions))
    summary = []
    for res in cfg.resolutions:
        direct = statistics.fmean(hits[(res, None)])
        row = {"resolution": res, "frames": n_frames, "direct_rate": direct}
        for ratio in cfg.ratios:
            rate = statistics.fmean(hits[(res, ratio)])
            row[f"pomp_{ratio}_rate"] = rate
            if rate < direct:
                failures.append(f"res {res} ratio {ratio}: rate {rate:.3f} < direct {direct:.3f}")
        summary.append(row)
    return ExperimentReport(cfg, rows, summary, failures)


def ratio_trend_violations(summary: list[dict], ratios: list[float],
                           allowance: float = 0.02) -> list[str]:
    """Adjacent ratio pairs (in the given order) whose rate rises by more than ``allowance``."""
    out = []
    for row in summary:
        for hi, lo in zip(ratios, ratios[1:]):
            a, b = row[f"pomp_{hi}_rate"], row[f"pomp_{lo}_rate"]
            if b > a + allowance + 1e-12:
                out.append(f"res {row['resolution']}: ratio {lo} rate {b:.3f} exceeds "
                           f"ratio {hi} rate {a:.3f} by more than {allowance:.0%}")
    return out


DRIVERS = {"build-bench": build_bench, "map-bench": map_bench, "nsr-bench": nsr_bench,
           "plan-bench": plan_bench, "ratio-sweep": ratio_sweep}
