import json

import pytest

from ledbp.cli import EXIT_CONFIG, EXIT_FAILURES, EXIT_INFEASIBLE, EXIT_OK, main

SCENE = {"room": {"width": 6, "depth": 6, "ceiling_height": 3, "workspace_height": 0.75},
         "grid_rows": 4, "grid_cols": 4, "ud_count": 4,
         "lambertian": {"nadir_gain": 1000, "half_power_semiangle": 30, "gain_cutoff_ratio": 0.1}}


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_scene_gen_and_solve(tmp_path, capsys):
    cfg = write(tmp_path, "scene.json", SCENE)
    assert main(["scene", "gen", "--config", cfg, "--out", str(tmp_path / "s"), "--seed", "4"]) == EXIT_OK
    doc = json.loads((tmp_path / "s" / "scene.json").read_text())
    assert len(doc["H"]) == 4
    for method in ("dense", "feasible_elimination"):
        out = tmp_path / method
        assert main(["solve", "--config", cfg, "--out", str(out), "--method", method]) == EXIT_OK
        assert json.loads((out / "solve.json").read_text())["records"]
    assert "objective" in capsys.readouterr().out


def test_config_errors(tmp_path):
    assert main(["scene", "gen", "--config", write(tmp_path, "a.json", {"colour": 1})]) == EXIT_CONFIG
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["solve", "--config", write(tmp_path, "b.json", SCENE), "--method", "qr"]) == EXIT_CONFIG
    assert main(["convergence", "--config", write(tmp_path, "c.json", {"sizes": [[15, 4]]})]) == EXIT_CONFIG


def test_infeasible_scene(tmp_path):
    cfg = write(tmp_path, "s.json", {**SCENE, "requirement": 1e7})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == EXIT_INFEASIBLE


def test_studies_and_failure_exit(tmp_path):
    study = {"scene": SCENE, "sizes": [[16, 4]], "count": 3, "seed": 1}
    cfg = write(tmp_path, "conv.json", study)
    out = tmp_path / "conv"
    assert main(["convergence", "--config", cfg, "--out", str(out), "--threads", "2"]) == EXIT_OK
    assert (out / "cdf.csv").exists() and (out / "summary.json").exists()

    over = {"scene": {**SCENE, "lambertian": {"nadir_gain": 1000}}, "sizes": [[16, 4]], "count": 2}
    out = tmp_path / "over"
    assert main(["overhead", "--config", write(tmp_path, "o.json", over), "--out", str(out)]) == EXIT_OK
    assert {p.name for p in out.iterdir()} == {"iterations.csv", "boxplot.csv", "summary.json"}

    bad = {**study, "scene": {**SCENE, "requirement": 1e7}}
    out = tmp_path / "bad"
    assert main(["convergence", "--config", write(tmp_path, "bad.json", bad), "--out", str(out),
                 "--method", "feasible_elimination"]) == EXIT_FAILURES
    assert len(json.loads((out / "summary.json").read_text())["failures"]) == 3


def test_usage_errors_exit_via_argparse():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
