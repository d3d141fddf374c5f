import json

import numpy as np
import pytest

from ledbp.errors import ConfigError, EmptySample
from ledbp.harness import (
    FEASIBLE_ELIMINATION,
    OVERHEAD,
    StudyConfig,
    StudyRecord,
    StudyResult,
    boxplot_stats,
    broadcast_time,
    config_seed,
    convergence_probability,
    empirical_cdf,
    run_convergence_study,
    run_overhead_study,
    write_outputs,
)
from ledbp.scene import LambertianModel, RoomGeometry, SceneConfig


def small_scene(side=6.0, angle=30.0, cutoff=0.1):
    room = RoomGeometry(side, side, 3.0, 0.75)
    lam = LambertianModel.from_nadir_gain(1000.0, room.vertical_separation, angle, cutoff)
    return SceneConfig(room=room, grid_rows=4, grid_cols=4, ud_count=4, lambertian=lam)


def test_empirical_cdf_examples():
    assert empirical_cdf([0.8, 0.2, 0.5, 1.4]) == [(0.2, 0.25), (0.5, 0.5), (0.8, 0.75), (1.4, 1.0)]
    ties = empirical_cdf([0.5, 0.5, 1.0])
    assert [f for _, f in ties] == pytest.approx([2 / 3, 2 / 3, 1.0])
    with pytest.raises(EmptySample):
        empirical_cdf([])


def test_convergence_probability_counts_infinite_and_failed():
    result = StudyResult(StudyConfig(count=4), [
        StudyRecord(0, 0, 100, 15, FEASIBLE_ELIMINATION, rho_max=0.2),
        StudyRecord(1, 0, 100, 15, FEASIBLE_ELIMINATION, rho_max=0.5),
        StudyRecord(2, 0, 100, 15, FEASIBLE_ELIMINATION, rho_max=np.inf),
        StudyRecord(3, 0, 100, 15, FEASIBLE_ELIMINATION, error="SolverFailure: x"),
    ])
    assert convergence_probability(result, FEASIBLE_ELIMINATION) == 0.5
    assert convergence_probability(result, "feasible_generic") == 0.0


def test_boxplot_of_one_to_hundred():
    stats = boxplot_stats(np.arange(1, 101))
    assert (stats["q1"], stats["median"], stats["q3"]) == pytest.approx((25.75, 50.5, 75.25))
    assert stats["whisker_lo"] == 1 and stats["whisker_hi"] == 100 and stats["outliers"] == []
    skewed = boxplot_stats(list(range(1, 21)) + [200])
    assert skewed["outliers"] == [200.0] and skewed["whisker_hi"] == 20
    with pytest.raises(EmptySample):
        boxplot_stats([])


def test_broadcast_time():
    assert broadcast_time(100) == pytest.approx(0.0256)
    assert broadcast_time(250) == pytest.approx(0.064)
    assert broadcast_time(4000, 32, 1_000_000) == pytest.approx(0.128)
    with pytest.raises(ValueError):
        broadcast_time(0)


def test_config_seed_is_stable():
    assert config_seed(0, 5) == config_seed(0, 5)
    seeds = {config_seed(0, i) for i in range(1000)}
    assert len(seeds) == 1000 and all(0 <= s < 2**64 for s in seeds)
    assert config_seed(1, 0) != config_seed(0, 0)


def test_study_config_validation_and_roundtrip():
    with pytest.raises(ConfigError):
        StudyConfig(sizes=[(99, 15)])
    with pytest.raises(ConfigError):
        StudyConfig(kind="speed")
    with pytest.raises(ConfigError):
        StudyConfig.overhead(methods=("feasible_generic",))
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"bogus": 1})
    ci = StudyConfig.overhead()
    assert ci.sizes == [(225, 20), (225, 30), (225, 40)] and ci.count == 50
    full = StudyConfig.from_dict({"kind": OVERHEAD, "paper_scale": True})
    assert (625, 100) in full.sizes and (900, 50) in full.sizes and full.count == 200
    again = StudyConfig.from_dict(json.loads(json.dumps(StudyConfig().to_dict())))
    assert again.sizes == [(100, 15)] and again.methods == StudyConfig().methods


def test_convergence_smoke_and_determinism(tmp_path):
    cfg = StudyConfig(scene=small_scene(), sizes=[(16, 4)], count=20, seed=7)
    a = run_convergence_study(cfg)
    assert len(a.records) == 60 and not a.failures
    fe = a.rho_samples(FEASIBLE_ELIMINATION)
    assert all(0 <= r < 1 for r in fe)
    for rec in a.records:
        assert rec.rho_max == max(rec.rho_per_nu)
    write_outputs(a, tmp_path / "one")
    b = run_convergence_study(cfg, threads=2)
    write_outputs(b, tmp_path / "two")
    for name in ("cdf.csv", "summary.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    lines = (tmp_path / "one" / "cdf.csv").read_text().splitlines()
    assert lines[0] == "method,rho_max,F,seed" and len(lines) == 61


def test_overhead_smoke(tmp_path):
    cfg = StudyConfig.overhead(scene=small_scene(8.0, 60.0, 0.01), sizes=[(16, 4)], count=3, seed=3)
    result = run_overhead_study(cfg)
    assert not result.failures
    taus = result.tau_samples(16, 4)
    assert taus and all(t >= 2 for t in taus)
    paths = write_outputs(result, tmp_path)
    assert [p.rsplit("/", 1)[1] for p in paths] == ["iterations.csv", "boxplot.csv", "summary.json"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    entry = summary["per_size"][0]
    assert entry["broadcast_time_s"] == pytest.approx(broadcast_time(entry["median_tau"]))
    header = (tmp_path / "boxplot.csv").read_text().splitlines()[0]
    assert header == "n,m,whisker_lo,q1,median,q3,whisker_hi"
    with pytest.raises(ConfigError):
        run_convergence_study(cfg)


def test_failures_are_recorded():
    scene = small_scene()
    scene.requirement = 1e7
    cfg = StudyConfig(scene=scene, sizes=[(16, 4)], count=2, methods=(FEASIBLE_ELIMINATION,))
    result = run_convergence_study(cfg)
    assert len(result.failures) == 2
    assert result.failures[0].error.startswith("InfeasibleScene")
