import json
import subprocess
import sys

import numpy as np
import pytest

from wavecone.cli import main, run


def _report(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 and out.strip().startswith("{") else out), err


@pytest.fixture
def ops(tmp_path):
    paths = {}
    for name, argv in {
        "curl32": ["curl", "--d", "3", "--m", "2"],
        "div22": ["div", "--k", "2", "--d", "2"],
        "bd42": ["boundary", "--d", "4", "--m", "2"],
        "curl22": ["curl", "--d", "2", "--m", "2"],
    }.items():
        p = tmp_path / f"{name}.json"
        assert run(["gallery", *argv, "-o", str(p)])[0] == 0
        paths[name] = p
    return paths


def test_gallery_writes_operator(ops):
    data = json.loads(ops["curl32"].read_text())
    assert data["d"] == 3 and data["dimE"] == 6 and data["gallery"]["family"] == "curl"


def test_ell_report_schema(ops, capsys, tmp_path):
    code, rep, _ = _report(capsys, ["ell", "-i", str(ops["curl32"]), "-o", str(tmp_path / "c.json")])
    assert code == 0
    assert rep["schema"] == 1 and rep["command"] == "ell" and rep["seed"] == 0
    cert = rep["results"]["certificate"]
    assert cert["value"] == 2 and cert["mode"] == "analytic"
    assert str(ops["curl32"]) in rep["inputs"]["files"]
    assert set(rep["timings"]) == {"ell"}
    assert json.loads((tmp_path / "c.json").read_text()) == cert


def test_ell_with_height_is_lattice_exhausted(ops, capsys):
    code, rep, _ = _report(capsys, ["ell", "-i", str(ops["div22"]), "--height", "1"])
    assert code == 0
    assert rep["results"]["certificate"]["value"] == 1
    assert rep["results"]["certificate"]["mode"] == "lattice-exhausted"


def test_zero_principal_part_errors(ops, capsys, tmp_path):
    data = json.loads(ops["div22"].read_text())
    data["P"] = [[["0"] * 4] * 2] * 2
    data.pop("gallery")
    bad = tmp_path / "zero.json"
    bad.write_text(json.dumps(data))
    code, out, err = _report(capsys, ["ell", "-i", str(bad)])
    assert code != 0 and out == "" and "principal part vanishes" in err


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("dimE"), "dimE"),
        (lambda d: d.__setitem__("P0", [["x"] * 4] * 2), "P0"),
        (lambda d: d.__setitem__("P", [d["P"][0]]), "P"),
    ],
)
def test_malformed_operator_names_field(ops, capsys, tmp_path, mutate, field):
    data = json.loads(ops["div22"].read_text())
    mutate(data)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    code, _, err = _report(capsys, ["ell", "-i", str(p)])
    assert code != 0 and field in err


def test_invalid_json(capsys, tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    code, _, err = _report(capsys, ["ell", "-i", str(p)])
    assert code != 0 and "malformed JSON" in err


def test_member(ops, capsys, tmp_path):
    e = tmp_path / "e.json"
    e.write_text(json.dumps(["1", "0", "0", "1"]))
    code, rep, _ = _report(capsys, ["member", "-i", str(ops["curl22"]), "-e", str(e)])
    assert code == 0 and rep["results"]["member"] is False
    e.write_text(json.dumps({"e": [1, 0, 0, 0]}))
    code, rep, _ = _report(capsys, ["member", "-i", str(ops["curl22"]), "-e", str(e)])
    assert rep["results"]["member"] is True and rep["results"]["kernel_direction"]


def test_sharp_residual_dim_mask_chain(ops, capsys, tmp_path):
    cert = tmp_path / "cert.json"
    assert run(["ell", "-i", str(ops["div22"]), "-o", str(cert)])[0] == 0
    capsys.readouterr()
    mu = tmp_path / "mu"
    code, rep, _ = _report(capsys, ["sharp", "-i", str(ops["div22"]), "--cert", str(cert), "-n", "128", "-o", str(mu)])
    assert code == 0 and rep["results"]["total_mass"] == pytest.approx(2.0, rel=0.02)
    header = json.loads((mu / "header.json").read_text())
    assert header["dtype"] == "f64le" and header["dimE"] == 4 and header["n"] == 128

    code, rep, _ = _report(capsys, ["residual", "-i", str(ops["div22"]), "-m", str(mu), "--seed", "3"])
    assert code == 0 and rep["results"]["residual"]["value"] < 0.05
    assert rep["results"]["residual"]["seed"] == 3 and len(rep["results"]["residual"]["per_test"]) == 15

    code, rep, _ = _report(capsys, ["dim-estimate", "-m", str(mu), "--scales", "7"])
    bd = rep["results"]["box_dimension"]
    assert code == 0 and abs(bd["estimate"] - 1) <= 0.15 and len(bd["counts"]) == 7

    code, rep, _ = _report(capsys, ["mask", "-i", str(ops["div22"]), "-m", str(mu), "-o", str(tmp_path / "mask")])
    assert code == 0 and rep["results"]["marked_fraction"] == 0.0
    assert rep["results"]["min_invariance_dim"] == 1
    raw = np.fromfile(tmp_path / "mask" / "mask.u8", dtype=np.uint8)
    assert raw.size == 128 * 128 and not raw.any()


def test_pipeline_div(ops, capsys):
    code, rep, _ = _report(capsys, ["pipeline", "-i", str(ops["div22"]), "-n", "128"])
    assert code == 0
    res = rep["results"]
    assert res["ell"]["value"] == 1
    assert res["residual"]["value"] < 0.05
    assert res["invariance"]["detected"]["dim"] >= 1
    assert 0.85 <= res["box_dimension"]["estimate"] <= 1.15
    assert all(res["checks"].values())
    assert set(rep["timings"]) == {"ell", "sharp_measure", "weak_residual", "detect_invariance", "box_dimension"}


def test_pipeline_boundary_4d(ops, capsys):
    code, rep, _ = _report(capsys, ["pipeline", "-i", str(ops["bd42"]), "-n", "32"])
    assert code == 0
    assert rep["results"]["ell"]["value"] == 2
    assert 1.8 <= rep["results"]["box_dimension"]["estimate"] <= 2.2


def test_pipeline_too_coarse(ops, capsys):
    code, _, err = _report(capsys, ["pipeline", "-i", str(ops["div22"]), "-n", "8"])
    assert code != 0 and "grid too coarse for requested scales" in err


def test_pipeline_reports_principal_residual_when_p0_nonzero(ops, capsys, tmp_path):
    data = json.loads(ops["div22"].read_text())
    data.pop("gallery")
    data["P0"] = [["1", "0", "0", "0"], ["0", "0", "0", "0"]]
    p = tmp_path / "inhom.json"
    p.write_text(json.dumps(data))
    code, rep, _ = _report(capsys, ["pipeline", "-i", str(p), "-n", "64"])
    assert code == 0
    r = rep["results"]["residual"]
    assert r["principal_part_value"] < 0.05 < r["value"]


def test_verify_appendix(capsys):
    code, rep, _ = _report(capsys, ["verify-appendix", "--dmax", "4", "--samples", "100"])
    assert code == 0 and rep["results"]["all_passed"]
    assert len(rep["results"]["cases"]) == 10
    code, _, err = _report(capsys, ["verify-appendix", "--dmax", "7"])
    assert code != 0 and "dmax" in err


def test_table_format(ops, capsys):
    code = main(["ell", "-i", str(ops["div22"]), "--format", "table"])
    out = capsys.readouterr().out
    assert code == 0 and "results.certificate.value" in out and "schema" in out


def _strip_timings(rep):
    rep = dict(rep)
    rep.pop("timings")
    return rep


def test_reports_are_deterministic(ops, capsys):
    argv = ["pipeline", "-i", str(ops["div22"]), "-n", "64", "--seed", "7"]
    _, a, _ = _report(capsys, argv)
    _, b, _ = _report(capsys, argv)
    assert json.dumps(_strip_timings(a), sort_keys=True) == json.dumps(_strip_timings(b), sort_keys=True)


def test_console_script_entry_point(ops):
    proc = subprocess.run(
        [sys.executable, "-m", "wavecone.cli", "ell", "-i", str(ops["div22"])],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["certificate"]["value"] == 1
