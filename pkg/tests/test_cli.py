import json
import math

import pytest
import yaml
from click.testing import CliRunner

from curvlab.ambient import SpaceForm
from curvlab.cli import main, observed_orders, residual_orders
from curvlab.errors import PreconditionError
from curvlab.verifier import _check_diameter

SPHERE = {"fixture": "sphere", "params": {"m": 2, "r": 1.0}}
SHRINKER = {"fixture": "shrinker_sphere", "params": {"m": 2}}


def write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for var in ("CURVLAB_REPORT", "CURVLAB_PROFILES_DIR", "CURVLAB_PLOTS_DIR", "CURVLAB_WORKERS"):
        monkeypatch.delenv(var, raising=False)
    return CliRunner()


def test_sphere_equality_suite(runner, tmp_path):
    cfg = write(tmp_path, {"surface": SPHERE, "grid": {"shape": [64, 128]},
                           "checks": [{"check": "poincare"}, {"check": "iso2"},
                                      {"check": "diameter_bound"}]})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 0, res.output
    doc = json.loads((tmp_path / "report.json").read_text())
    assert [r["verdict"] for r in doc["records"]] == ["EqualityCase"] * 3
    assert set(doc["records"][0]) == {"name", "lhs", "rhs", "slack", "rel_slack", "tolerance",
                                      "verdict", "grid", "params", "refinement_estimate"}
    assert doc["hypothesis_violations"] == [] and doc["errors"] == []


def test_fail_exits_one(runner, tmp_path):
    # a relative tolerance below the quadrature error of a coarse grid
    cfg = write(tmp_path, {"surface": {"fixture": "ellipsoid", "params": {"a": 1.3, "b": 1.0, "c": 0.8}},
                           "grid": {"shape": [16, 32]},
                           "checks": [{"check": "divergence_identity", "x0": [0, 0, 0], "rel_tol": 1e-14,
                                       "f": {"kind": "radial_bump", "x0": [0, 0, 0],
                                             "r_in": 0.3, "r_out": 1.0}}]})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 1, res.output
    assert "Fail" in res.output


def test_diameter_precondition():
    with pytest.raises(PreconditionError):
        _check_diameter(SpaceForm.sphere(3), math.pi)
    _check_diameter(SpaceForm.sphere(3), 3.0)


def test_large_diameter_config_exits_two(runner, tmp_path):
    # torus of radii cos(a), sin(a) in S^3 contains antipodal pairs, so diam = pi
    a = 1.0
    inline = {"coords": [f"cos({a})*cos(u0)", f"cos({a})*sin(u0)", f"sin({a})*cos(u1)",
                         f"sin({a})*sin(u1)"],
              "bounds": [[0, 2 * math.pi], [0, 2 * math.pi]], "periodic": [True, True],
              "closed": True, "ambient": {"kind": "sphere", "kappa": 1.0, "dim": 3}}
    cfg = write(tmp_path, {"surface": {"inline": inline}, "grid": {"shape": [16, 16]},
                           "checks": [{"check": "poincare"}]})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 2


def test_empty_check_list_exits_two(runner, tmp_path):
    cfg = write(tmp_path, {"surface": SPHERE, "checks": []})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 2
    assert not (tmp_path / "report.json").exists()


def test_unknown_keys_rejected(runner, tmp_path):
    cfg = write(tmp_path, {"surface": SPHERE, "checks": [{"check": "poincare", "lamda": 1}]})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 2


def test_missing_parameter_exits_two(runner, tmp_path):
    cfg = write(tmp_path, {"surface": SPHERE, "grid": {"shape": [16, 32]},
                           "checks": [{"check": "mean_value", "s": 0.5}]})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 2
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["errors"] and doc["errors"][0]["name"] == "mean_value"


def test_shrinker_lambda_violation_exits_two(runner, tmp_path):
    cfg = write(tmp_path, {"surface": SHRINKER, "grid": {"shape": [32, 64]},
                           "checks": [{"check": "monotonicity_phi_shrinker", "x0": [0, 0, 2],
                                       "Lambda": 0.125, "radii": {"start": 0.3, "stop": 3.5, "num": 6}}]})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 2
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["records"] == []
    assert doc["hypothesis_violations"][0]["name"] == "monotonicity_phi_shrinker"


def test_profiles_and_plots_written(runner, tmp_path):
    cfg = write(tmp_path, {"surface": SHRINKER, "grid": {"shape": [32, 64]},
                           "outputs": {"plots_dir": "plots"},
                           "checks": [{"check": "monotonicity_phi_shrinker", "x0": [0, 0, 2],
                                       "radii": {"start": 0.3, "stop": 3.5, "num": 6}}]})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 0, res.output
    csvs = sorted((tmp_path / "profiles").glob("*.csv"))
    assert csvs and csvs[0].read_text().splitlines()[0] == "r,value,refinement_estimate"
    svgs = sorted((tmp_path / "plots").glob("*.svg"))
    assert svgs and svgs[0].read_text().lstrip().startswith("<?xml")


def test_environment_overrides(runner, tmp_path, monkeypatch):
    cfg = write(tmp_path, {"surface": SPHERE, "grid": {"shape": [16, 32]},
                           "checks": [{"check": "diameter_bound"}]})
    monkeypatch.setenv("CURVLAB_REPORT", str(tmp_path / "out" / "r.json"))
    monkeypatch.setenv("CURVLAB_WORKERS", "2")
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "out" / "r.json").exists()
    monkeypatch.setenv("CURVLAB_WORKERS", "zero")
    assert runner.invoke(main, ["run", cfg]).exit_code == 2


def test_inline_chart(runner, tmp_path):
    inline = {"coords": ["sin(u0)*cos(u1)", "sin(u0)*sin(u1)", "cos(u0)"],
              "bounds": [[0, math.pi], [0, 2 * math.pi]], "periodic": [False, True],
              "closed": True}
    cfg = write(tmp_path, {"surface": {"inline": inline}, "grid": {"shape": [64, 128]},
                           "checks": [{"check": "poincare"}]})
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 0, res.output
    rec = json.loads((tmp_path / "report.json").read_text())["records"][0]
    assert rec["verdict"] == "EqualityCase"
    assert rec["lhs"] == pytest.approx(8 * math.pi, rel=1e-8)


def test_list_fixtures(runner):
    res = runner.invoke(main, ["list-fixtures"])
    assert res.exit_code == 0
    names = {line.split()[0] for line in res.output.splitlines()}
    assert {"sphere", "ellipsoid", "shrinker_sphere", "geodesic_sphere"} <= names


def test_export_profile(runner, tmp_path):
    cfg = write(tmp_path, {"surface": SPHERE, "grid": {"shape": [32, 64]},
                           "checks": [{"check": "monotonicity_h", "label": "h", "x0": [0, 0, 1],
                                       "Lambda": 0.5, "radii": {"start": 0.2, "stop": 1.8, "num": 5}},
                                      {"check": "poincare"}]})
    res = runner.invoke(main, ["export-profile", cfg, "--check", "h"])
    assert res.exit_code == 0, res.output
    lines = res.output.splitlines()
    assert lines[0] == "r,value,refinement_estimate" and len(lines) == 6
    assert float(lines[1].split(",")[0]) == pytest.approx(0.2)
    assert runner.invoke(main, ["export-profile", cfg, "--check", "poincare"]).exit_code == 2
    assert runner.invoke(main, ["export-profile", cfg, "--check", "nope"]).exit_code == 2


def test_refine(runner, tmp_path):
    cfg = write(tmp_path, {"surface": {"fixture": "ellipsoid", "params": {"a": 1.2, "b": 1.0, "c": 0.9}},
                           "grid": {"shape": [16, 32]}, "checks": [{"check": "poincare"}]})
    res = runner.invoke(main, ["refine", cfg, "--levels", "3", "-o", "t.json", "--plot", "t.svg"])
    assert res.exit_code == 0, res.output
    doc = json.loads((tmp_path / "t.json").read_text())
    assert [r["grid"] for r in doc["table"]["poincare"]] == ["16x32", "32x64", "64x128"]
    assert len(doc["orders"]["poincare"]) == 1
    assert (tmp_path / "t.svg").exists()
    assert runner.invoke(main, ["refine", cfg, "--levels", "1"]).exit_code == 2


def test_order_helpers():
    assert observed_orders([1.0, 1.0 + 2 ** -4, 1.0 + 2 ** -4 + 2 ** -6]) == pytest.approx([2.0])
    assert residual_orders([1e-4, 2.5e-5]) == pytest.approx([2.0])
    assert residual_orders([1e-4, 0.0]) == [math.inf]
