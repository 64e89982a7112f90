from fractions import Fraction
import json
from pathlib import Path
import sys

import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))

from app import run
from app.utils.logging import stop_logging

SAMPLES = Path(__file__).resolve().parents[1] / "samples"


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("LOG_JSON", "false")
    yield
    stop_logging()


def _cli(*argv):
    return run.main([str(a) for a in argv])


# ---------- build ----------
def test_build_writes_field(tmp_path, capsys):
    out = tmp_path / "field.json"
    assert _cli("build", "-i", SAMPLES / "nested_pair.json", "-o", out) == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["format"] == "realize-field/1"
    assert data["mode"] == "full"
    assert data["degree"] < data["degree_bound"]
    assert "full: degree" in capsys.readouterr().out


def test_overlap_is_invalid_input(capsys):
    code = _cli("build", "-i", SAMPLES / "tangent.json", "--json-diagnostics")
    assert code == 3
    diag = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert diag["error"] == "overlap"
    assert (diag["j"], diag["k"]) == (0, 1)


def test_missing_input(tmp_path, capsys):
    assert _cli("build", "-i", tmp_path / "nope.json") == 3
    assert "error:" in capsys.readouterr().err


def test_remark_optimization_can_be_switched_off(monkeypatch):
    monkeypatch.setattr(run.settings, "REMARK_OPTIMIZATION", True)
    parser = run.build_parser()
    assert parser.parse_args(["build", "-i", "c.json"]).remark_optimization is True
    assert parser.parse_args(["build", "-i", "c.json", "--no-remark-optimization"]).remark_optimization is False


def test_bad_arguments_exit_with_invalid():
    with pytest.raises(SystemExit) as err:
        _cli("build", "-i", SAMPLES / "unit_circle.json", "--tol-ode", "1e-2")
    assert err.value.code == 3
    with pytest.raises(SystemExit) as err:
        _cli("build", "-i", SAMPLES / "unit_circle.json", "--mode", "bogus")
    assert err.value.code == 3


def test_settings_are_restored():
    from app.config import settings

    before = settings.TOL_ODE
    _cli("build", "-i", SAMPLES / "unit_circle.json", "--tol-ode", "1e-10", "--mode", "t")
    assert settings.TOL_ODE == before


# ---------- verify ----------
def test_verify_built_field(tmp_path, capsys):
    field = tmp_path / "field.json"
    report = tmp_path / "report.json"
    assert _cli("build", "-i", SAMPLES / "nested_pair.json", "-o", field) == 0
    assert _cli("verify", "-i", field, "-o", report) == 0
    data = json.loads(report.read_text(encoding="utf-8"))
    assert data["passed"] is True
    assert "elapsed_s" not in data
    assert "PASS full" in capsys.readouterr().out


def test_verify_perturbed_field_fails(tmp_path, capsys):
    field = tmp_path / "field.json"
    assert _cli("build", "-i", SAMPLES / "unit_circle.json", "--mode", "t", "-o", field) == 0
    data = json.loads(field.read_text(encoding="utf-8"))
    i, j, coeff = data["P"][0]
    data["P"][0] = [i, j, str(2 * Fraction(coeff))]
    field.write_text(json.dumps(data), encoding="utf-8")
    report = tmp_path / "report.json"
    assert _cli("verify", "-i", field, "-o", report) == 2
    assert "inverse_integrating_factor" in capsys.readouterr().out
    assert json.loads(report.read_text(encoding="utf-8"))["passed"] is False


def test_field_file_is_not_a_configuration(tmp_path):
    field = tmp_path / "field.json"
    assert _cli("build", "-i", SAMPLES / "unit_circle.json", "--mode", "lr", "-o", field) == 0
    assert _cli("layout", "-i", field) == 3


# ---------- layout и portrait ----------
def test_layout_of_forest(tmp_path):
    out = tmp_path / "configuration.json"
    assert _cli("layout", "-i", SAMPLES / "forest.json", "-o", out) == 0
    cycles = json.loads(out.read_text(encoding="utf-8"))["cycles"]
    assert len(cycles) == 4
    assert [c["multiplicity"] for c in cycles] == [1, 1, 2, 3]


def test_portrait_writes_svg(tmp_path):
    out = tmp_path / "portrait.svg"
    assert _cli("portrait", "-i", SAMPLES / "unit_circle.json", "--mode", "lr", "-o", out) == 0
    text = out.read_text(encoding="utf-8")
    assert "<svg" in text


def test_default_output_dir(tmp_path, monkeypatch):
    from app.config import settings

    monkeypatch.setattr(settings, "OUTPUT_DIR", tmp_path / "output")
    assert _cli("layout", "-i", SAMPLES / "unit_circle.json") == 0
    assert (tmp_path / "output" / "configuration.json").exists()


# ---------- воспроизводимость ----------
def test_outputs_are_byte_identical(tmp_path):
    paths = []
    for name in ("a", "b"):
        field = tmp_path / f"{name}.json"
        report = tmp_path / f"{name}.report.json"
        assert _cli("build", "-i", SAMPLES / "unit_circle.json", "-o", field) == 0
        assert _cli("verify", "-i", field, "-o", report) == 0
        paths.append((field, report))
    (fa, ra), (fb, rb) = paths
    assert fa.read_bytes() == fb.read_bytes()
    assert ra.read_bytes() == rb.read_bytes()
