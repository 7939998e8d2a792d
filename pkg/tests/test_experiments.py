import csv
import json

import numpy as np
import pytest

from octogrid.experiments import (DRIVERS, METRIC_COLUMNS, MetricsRow, RunConfig, build_bench,
                                  map_bench, nsr_bench, plan_bench, plan_trial, plan_violations,
                                  ratio_sweep, ratio_trend_violations, timings, write_metrics,
                                  write_summary)


def test_run_config_defaults():
    cfg = RunConfig("nsr-bench")
    assert cfg.resolutions == [1.0, 2.0, 3.0, 4.0, 5.0]
    assert cfg.point_count == 60_000
    assert RunConfig("ratio-sweep").ratios == [0.95, 0.75, 0.5, 0.25]
    assert RunConfig("plan-bench", seeds=[1, 2], trials=3).trial_seeds() == \
        [1_000_003, 1_000_004, 1_000_005, 2_000_006, 2_000_007, 2_000_008]


@pytest.mark.parametrize("bad", [{"resolutions": [0.0]}, {"ratios": [1.5]}, {"trials": 0},
                                 {"workers": [0]}, {"planners": ["rrt"]}, {"seeds": []},
                                 {"scale": -1.0}])
def test_run_config_validation(bad):
    with pytest.raises(ValueError):
        RunConfig("map-bench", **bad)


def test_run_config_from_file(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"resolutions": [2.0], "trials": 2}))
    cfg = RunConfig.from_file(tmp_path / "c.json", experiment="map-bench", trials=4)
    assert cfg.resolutions == [2.0] and cfg.trials == 4
    (tmp_path / "bad.json").write_text(json.dumps({"resolution": 2.0}))
    with pytest.raises(ValueError, match="unknown"):
        RunConfig.from_file(tmp_path / "bad.json", experiment="map-bench")


def test_timings_discards_warmup():
    calls = []
    out = timings(lambda: calls.append(1), repeats=3, warmup=2)
    assert len(out) == 3 and len(calls) == 5


def test_metrics_csv(tmp_path):
    cfg = RunConfig("map-bench", scale=0.01)
    rows = [MetricsRow("map-bench", 0, 1, 0.5, 0.5, 2, "pomp", build_ms=1.5, nsr=0.9,
                       success=True, path_len_m=float("inf"))]
    write_metrics(tmp_path / "m.csv", rows, cfg)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].startswith("# octogrid-metrics v1 experiment=map-bench")
    rec = list(csv.DictReader(lines[1:]))
    assert list(rec[0]) == METRIC_COLUMNS
    assert rec[0]["build_ms"] == "1.5" and rec[0]["success"] == "1"
    assert rec[0]["path_len_m"] == "" and rec[0]["project_ms"] == ""
    write_summary(tmp_path / "s.csv", [{"a": 1, "b": 0.25}])
    assert (tmp_path / "s.csv").read_text() == "a,b\n1,0.25\n"


def test_build_bench_small():
    cfg = RunConfig("build-bench", resolutions=[1.0], workers=[1, 2], scale=0.005, repeats=2,
                    warmup=1)
    rep = build_bench(cfg)
    assert rep.ok
    assert len(rep.summary) == 2
    assert len(rep.rows) == 2 + 2 * 2
    assert all(r["speedup"] > 0 for r in rep.summary)


def test_build_bench_with_given_cloud():
    pts = np.random.default_rng(0).uniform(-5, 5, (2000, 3))
    cfg = RunConfig("build-bench", resolutions=[1.0], workers=[2], repeats=1, warmup=0)
    assert build_bench(cfg, pts).summary[0]["points"] == 2000


def test_map_bench_small():
    cfg = RunConfig("map-bench", resolutions=[0.5, 1.0], trials=2, scale=0.1, warmup=0)
    rep = map_bench(cfg)
    assert rep.ok
    assert len(rep.rows) == 2 * 2 * 2
    pomp = [r for r in rep.rows if r.method == "pomp"]
    direct = [r for r in rep.rows if r.method == "direct_ogm"]
    assert all(a.nsr >= b.nsr for a, b in zip(pomp, direct))


def test_nsr_bench_small():
    cfg = RunConfig("nsr-bench", resolutions=[2.0, 5.0], trials=2, scale=0.01)
    rep = nsr_bench(cfg)
    assert rep.ok
    assert [r["resolution"] for r in rep.summary] == [2.0, 5.0]
    assert all(r["min_gap_pp"] >= 0 for r in rep.summary)


def test_plan_bench_small():
    cfg = RunConfig("plan-bench", resolutions=[1.0], trials=3, scale=0.02)
    rep = plan_bench(cfg)
    assert rep.ok, rep.failures
    assert len(rep.rows) == 3 * 2 * 2
    s = rep.summary
    assert {r["planner"] for r in s} == {"astar", "jps"}


def test_plan_violations_flag_a_regression():
    tr = plan_trial(4, 1.0, 10, 5000, ("astar", "jps"))
    assert plan_violations(tr, ("astar", "jps")) == []
    direct = tr.results[("direct_ogm", "astar")]
    pomp = tr.results[("pomp", "astar")]
    if direct.success:
        tr.results[("pomp", "astar")] = type(pomp)(False, reason="unreachable")
        assert any("did not" in v for v in plan_violations(tr, ("astar",)))


def test_ratio_sweep_small():
    cfg = RunConfig("ratio-sweep", resolutions=[3.0], ratios=[0.9, 0.3], scale=0.05,
                    planners=["astar"])
    rep = ratio_sweep(cfg, frames=2)
    assert rep.ok
    assert len(rep.rows) == 2 * 3
    assert set(rep.summary[0]) == {"resolution", "frames", "direct_rate", "pomp_0.9_rate",
                                   "pomp_0.3_rate"}


def test_ratio_trend_violations():
    rows = [{"resolution": 1.0, "pomp_0.9_rate": 0.5, "pomp_0.5_rate": 0.51,
             "pomp_0.25_rate": 0.6}]
    out = ratio_trend_violations(rows, [0.9, 0.5, 0.25])
    assert len(out) == 1 and "0.25" in out[0]


def test_drivers_registry():
    assert set(DRIVERS) == {"build-bench", "map-bench", "nsr-bench", "plan-bench",
                            "ratio-sweep"}
