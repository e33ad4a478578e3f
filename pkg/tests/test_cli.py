import csv
import json
import math

import numpy as np
import pytest

from freeflow.cli import main

RATIONAL_LOG = "rational(a=-1,b=0,poles=[0],residues=[1])"
SEMICIRCLE_PHI = "rational(a=0,b=0,poles=[0],residues=[1])"


def read_json(path):
    return json.loads(path.read_text())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fal2_check_pass_exit_zero(tmp_path):
    out = tmp_path / "check.json"
    code = main(["fal2-check", "--phi", "negPow(0.3333333333333333)",
                 "--out", str(out)])
    assert code == 0
    assert read_json(out)["verdict"] == "pass"


def test_fal2_check_fail_exit_two_with_witness(tmp_path):
    out = tmp_path / "check.json"
    code = main(["fal2-check", "--phi", "pow(-0.5)", "--out", str(out)])
    assert code == 2
    payload = read_json(out)
    assert payload["verdict"] == "fail"
    assert payload["witness"] is not None
    assert payload["t"] in payload["tSamples"]


def test_fal2_check_writes_manifest(tmp_path):
    out = tmp_path / "check.json"
    main(["fal2-check", "--phi", "negPow(0.6)", "--out", str(out)])
    manifest = read_json(tmp_path / "check.json.manifest.json")
    assert manifest["command"] == "fal2-check"
    assert manifest["verdicts"]["verdict"] in ("pass", "fail", "inconclusive")
    assert manifest["tolerances"]["eps"] == 1e-3


def test_flowlines_slit_geometry(tmp_path):
    out = tmp_path / "fl.csv"
    code = main(["flowlines", "--psi", RATIONAL_LOG, "--im-lines", "8",
                 "--re-lines", "8", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert all(r["flag"] == "" for r in rows)
    # the lowest Im-line hugs the slits at heights 0 and -pi whose tips sit
    # at 1/2: wherever its image is close to a slit height, Re stays right
    # of the tip
    lowest = min(float(r["level"]) for r in rows if r["kind"] == "im")
    line = [r for r in rows if r["kind"] == "im"
            and float(r["level"]) == lowest]
    near_slit = [float(r["re_w"]) for r in line
                 if min(abs(float(r["im_w"])), abs(float(r["im_w"]) + math.pi))
                 < 0.02]
    assert near_slit
    assert min(near_slit) == pytest.approx(0.5, abs=0.05)


def test_conformal_image_slits(tmp_path):
    out = tmp_path / "ci.csv"
    assert main(["conformal-image", "--psi", RATIONAL_LOG,
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    heights = sorted(float(r["height"]) for r in rows)
    tips = [float(r["tip"]) for r in rows]
    assert heights == pytest.approx([-math.pi, 0.0], abs=1e-10)
    assert tips == pytest.approx([0.5, 0.5], abs=1e-8)
    boundary = read_csv(tmp_path / "ci.csv.boundary.csv")
    assert len(boundary) == 400


def test_conformal_image_zero_leading_coefficient_traces_boundary(tmp_path):
    # a = 0 has no slit description; only the boundary trace is emitted
    out = tmp_path / "strip.csv"
    assert main(["conformal-image", "--psi", SEMICIRCLE_PHI,
                 "--out", str(out)]) == 0
    assert read_csv(out) == []
    boundary = read_csv(tmp_path / "strip.csv.boundary.csv")
    assert boundary
    # Psi = -log z maps the boundary to the strip edges Im in {0, -pi}
    # (points right next to the pole at 0 see the finite trace offset)
    ims = np.array([float(r["im_psi"]) for r in boundary
                    if abs(float(r["x"])) > 0.1])
    assert np.all((np.abs(ims) < 0.05) | (np.abs(ims + math.pi) < 0.05))


def test_semigroup_semicircle_density(tmp_path):
    out = tmp_path / "sg.csv"
    assert main(["semigroup", "--phi", SEMICIRCLE_PHI, "--t", "1.0",
                 "--grid=-2.2:2.2:45", "--out", str(out)]) == 0
    rows = read_csv(out)
    mid = rows[22]
    assert float(mid["x"]) == pytest.approx(0.0)
    assert float(mid["density"]) == pytest.approx(1 / math.pi, abs=1e-3)


def test_marginal_and_kernel_const(tmp_path):
    marg = tmp_path / "mg.csv"
    assert main(["marginal", "--phi", "const(0,-1)", "--t", "1",
                 "--grid=-4:4:81", "--out", str(marg)]) == 0
    rows = read_csv(marg)
    centre = rows[40]
    assert float(centre["density"]) == pytest.approx(1 / math.pi, abs=1e-4)
    kern = tmp_path / "kr.csv"
    assert main(["kernel", "--phi", "const(0,-1)", "--t", "0.5", "--x", "1.0",
                 "--grid=-3:5:81", "--out", str(kern)]) == 0
    rows = read_csv(kern)
    at_x = rows[40]
    assert float(at_x["u"]) == pytest.approx(1.0)
    assert float(at_x["density"]) == pytest.approx(1 / (math.pi * 0.5),
                                                   abs=1e-4)


def test_flow_snapshots(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["flow", "--psi", "negPow(1)", "--t", "0.25,1",
                 "--grid=-2:2:5", "--im-grid", "0.2:2:5",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 50
    for r in rows:
        z = complex(float(r["re_in"]), float(r["im_in"]))
        t = float(r["t"])
        expect = z + t * np.sqrt(2 * z) + t * t / 2
        assert complex(float(r["re_out"]), float(r["im_out"])) == \
            pytest.approx(expect, abs=1e-8)


def test_increment_json(tmp_path):
    out = tmp_path / "inc.json"
    assert main(["increment", "--phi", "const(0,-1)", "--s", "0.5",
                 "--t", "1.5", "--z", "0,2", "--out", str(out)]) == 0
    payload = read_json(out)
    assert payload["values"][0] == pytest.approx([0.0, -1.0])


def test_nev_eval_and_recover(tmp_path):
    out = tmp_path / "ne.json"
    assert main(["nev-eval", "--spec", SEMICIRCLE_PHI, "--z", "0,1",
                 "--out", str(out)]) == 0
    assert read_json(out)["values"][0] == pytest.approx([0.0, -1.0])
    rec = tmp_path / "nr.json"
    assert main(["nev-recover", "--fn", "const(0,-1)",
                 "--out", str(rec)]) == 0
    payload = read_json(rec)
    assert payload["alpha"] == pytest.approx(0.0, abs=1e-6)
    assert payload["mass"] == pytest.approx(1.0, abs=1e-2)
    dens = read_csv(tmp_path / "nr.json.density.csv")
    assert len(dens) > 500


def test_conv_density(tmp_path):
    out = tmp_path / "cv.csv"
    assert main(["conv", "--phi1", SEMICIRCLE_PHI, "--phi2", SEMICIRCLE_PHI,
                 "--grid=-3:3:61", "--out", str(out)]) == 0
    rows = read_csv(out)
    centre = rows[30]
    assert float(centre["density"]) == pytest.approx(
        1.0 / (math.pi * math.sqrt(2)), abs=1e-3)


def test_fal2_build_reports_power(tmp_path):
    out = tmp_path / "fb.json"
    assert main(["fal2-build", "--psi", "negPow(0.5)", "--out", str(out)]) == 0
    payload = read_json(out)
    assert payload["verdict"] == "built"
    assert payload["power"]["exponent"] == pytest.approx(1 / 3)


def test_fal2_build_not_containing_exits_two(tmp_path):
    out = tmp_path / "fb.json"
    code = main(["fal2-build", "--psi", SEMICIRCLE_PHI, "--out", str(out)])
    assert code == 2
    payload = read_json(out)
    assert payload["verdict"] == "not-containing"
    assert payload["certificate"]["drift"] == pytest.approx(0.0, abs=1e-9)


def test_usage_errors_exit_one(tmp_path):
    assert main(["fal2-check"]) == 1
    assert main(["marginal", "--phi", "const(0,-1)", "--grid", "oops",
                 "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["nonsense-command"]) == 1
    assert main(["marginal", "--phi", "const(0,-1)", "--eps", "-1",
                 "--out", str(tmp_path / "y.csv")]) == 1


def test_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        main(["fal2-check", "--phi", "negPow(0.75)", "--seed", "7",
              "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.json.manifest.json").read_bytes() == \
        (tmp_path / "b.json.manifest.json").read_bytes()


def test_threads_env_preserves_output(tmp_path, monkeypatch):
    serial, threaded = tmp_path / "s.csv", tmp_path / "p.csv"
    args = ["semigroup", "--phi", SEMICIRCLE_PHI, "--t", "0.5",
            "--grid=-1.2:1.2:25"]
    assert main(args + ["--out", str(serial)]) == 0
    monkeypatch.setenv("FREEFLOW_THREADS", "4")
    assert main(args + ["--out", str(threaded)]) == 0
    assert serial.read_bytes() == threaded.read_bytes()


def test_csv_cells_finite_or_flagged(tmp_path):
    out = tmp_path / "mg.csv"
    main(["marginal", "--phi", "const(0,-1)", "--t", "1", "--grid=-4:4:41",
          "--out", str(out)])
    for row in read_csv(out):
        if row["flag"] == "":
            assert math.isfinite(float(row["u"]))
            assert math.isfinite(float(row["density"]))
