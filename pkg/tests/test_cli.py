import csv
import json
import math

import numpy as np
import pytest

from eyesynth.cli import main


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def labels(directory):
    return [json.loads(l) for l in (directory / "labels.jsonl").read_text().splitlines()]


def generate(out, *extra):
    return main(["generate", *extra, "--out", str(out)])


# -- generate -----------------------------------------------------------------

def test_generate_stable(tmp_path):
    assert generate(tmp_path / "a", "chugh", "--stage", "2", "--count", "20", "--seed", "7") == 0
    assert generate(tmp_path / "b", "chugh", "--stage", "2", "--count", "20", "--seed", "7",
                    "--threads", "2") == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert len(list((tmp_path / "a").glob("*.png"))) == 20
    assert ma == mb
    snap = json.loads((tmp_path / "a" / "run_config.json").read_text())
    assert snap["resolved_seed"] == 7 and snap["resolved_config"]["stage"] == 2


def test_generate_without_seed_records_one(tmp_path):
    assert generate(tmp_path, "cr_500", "--count", "1") == 0
    snap = json.loads((tmp_path / "run_config.json").read_text())
    assert isinstance(snap["resolved_seed"], int)


@pytest.mark.parametrize("argv", [
    ["generate", "eds2099", "--count", "1", "--out", "x"],
    ["generate", "chugh", "--count", "-1", "--out", "x"],
    ["generate", "chugh", "--count", "1", "--threads", "0", "--out", "x"],
    ["pcr", "a", "b", "--cth", "1.01", "--out", "x"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_runtime_failure(tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["calibrate", str(missing), str(missing), "--out", str(tmp_path / "m")]) == 1


# -- analyze ------------------------------------------------------------------

def test_analyze_noise_free_pupils(tmp_path):
    cfg = tmp_path / "noise.json"
    cfg.write_text(json.dumps({"noise_sigma": 0}))
    data = tmp_path / "data"
    assert generate(data, "pupil_500", "--stage", "2", "--count", "30", "--seed", "3",
                    "--config", str(cfg)) == 0
    acfg = tmp_path / "analyze.json"
    acfg.write_text(json.dumps({"pupil_threshold": "auto"}))
    out = tmp_path / "centers.csv"
    assert main(["analyze", str(data), "--config", str(acfg), "--out", str(out)]) == 0
    errors = []
    for row, rec in zip(rows(out), labels(data)):
        p = rec["pupil"]
        # skip frames where a CR halo touches the pupil
        if any(math.hypot(c["x"] - p["x"], c["y"] - p["y"]) < p["beta"] + 20 for c in rec["crs"]):
            continue
        assert int(row["valid_flags"]) & 1
        errors.append(math.hypot(float(row["pupil_x"]) - p["x"], float(row["pupil_y"]) - p["y"]))
    assert len(errors) >= 10
    assert np.mean(errors) < 0.25


def test_analyze_empty_and_corrupt(tmp_path):
    out = tmp_path / "e.csv"
    (tmp_path / "frames").mkdir()
    assert main(["analyze", str(tmp_path / "frames"), "--out", str(out)]) == 0
    assert out.read_text().strip() == "frame_index,pupil_x,pupil_y,cr_x,cr_y,valid_flags"
    generate(tmp_path / "frames", "pupil_1000", "--count", "2", "--seed", "1")
    (tmp_path / "frames" / "000001.png").write_bytes(b"not a png")
    assert main(["analyze", str(tmp_path / "frames"), "--out", str(out)]) == 0
    got = rows(out)
    assert len(got) == 2 and got[1]["valid_flags"] == "0"


def test_analyze_raw_frames(tmp_path):
    img = np.full((40, 50), 200, np.uint8)
    img[15:25, 20:30] = 5
    (tmp_path / "header.json").write_text(json.dumps({"width": 50, "height": 40}))
    img.tofile(tmp_path / "f0.raw")
    out = tmp_path / "c.csv"
    assert main(["analyze", str(tmp_path), "--out", str(out)]) == 0
    row = rows(out)[0]
    assert (float(row["pupil_x"]), float(row["pupil_y"])) == (24.5, 19.5)


# -- pcr ----------------------------------------------------------------------

def test_pcr_oracle_maps(tmp_path):
    data = tmp_path / "d"
    assert generate(data, "chugh", "--count", "25", "--seed", "2", "--heatmaps",
                    "--map-peak", "6", "--map-sigma", "1.5") == 0
    out = tmp_path / "p.csv"
    assert main(["pcr", str(data), str(data), "--out", str(out)]) == 0
    checked = 0
    for row, rec in zip(rows(out), labels(data)):
        if row["status"] != "valid":
            assert sum(c["present"] for c in rec["crs"]) < 2
            continue
        for tag in ("a", "b"):
            c = rec["crs"][int(row[f"cr_{tag}_index"])]
            assert c["present"]
            assert abs(float(row[f"cr_{tag}_x"]) - c["x"]) <= 1
            assert abs(float(row[f"cr_{tag}_y"]) - c["y"]) <= 1
            checked += 1
    assert checked > 20
    crops = (tmp_path / "p.csv.crops.jsonl").read_text().splitlines()
    assert len(crops) == 25 and json.loads(crops[0])["origin"] == [0, 0]


def test_pcr_all_subthreshold(tmp_path):
    data = tmp_path / "d"
    generate(data, "eds2020", "--count", "5", "--seed", "2", "--heatmaps", "--map-peak", "0.5")
    out = tmp_path / "p.csv"
    assert main(["pcr", str(data), str(data), "--out", str(out)]) == 0
    assert [r["status"] for r in rows(out)] == ["invalid"] * 5


# -- calibrate and metrics ----------------------------------------------------

def in_class(u, v):
    return 2 + 0.1 * u + 0.01 * v + 0.001 * u * u, -1 + 0.2 * v + 0.002 * u * v


def write_session(tmp_path, rate=500.0, dwell=1000.0):
    grid = [(u, v) for v in (-20.0, 0.0, 20.0) for u in (-30.0, 0.0, 30.0)]
    targets = []
    lines = ["frame_index,pupil_x,pupil_y,cr_x,cr_y,valid_flags"]
    per = int(dwell * rate / 1000)
    for k, (u, v) in enumerate(grid):
        x, y = in_class(u, v)
        targets.append({"x_deg": x, "y_deg": y, "t_on_ms": k * dwell, "t_off_ms": (k + 1) * dwell})
        for _ in range(per):
            lines.append(f"{len(lines) - 1},{100 + u},{50 + v},100,50,3")
    (tmp_path / "pcr.csv").write_text("\n".join(lines) + "\n")
    session = {"rate_hz": rate, "targets": targets,
               "trials": [{"t_start_ms": 0, "t_end_ms": 9 * dwell}]}
    (tmp_path / "session.json").write_text(json.dumps(session))


def test_calibrate_and_metrics(tmp_path):
    write_session(tmp_path)
    model = tmp_path / "model.json"
    assert main(["calibrate", str(tmp_path / "pcr.csv"), str(tmp_path / "session.json"),
                 "--out", str(model)]) == 0
    m = json.loads(model.read_text())
    assert len(m["x"]) == 6 and len(m["y"]) == 6
    report = tmp_path / "report.json"
    argv = ["metrics", str(tmp_path / "pcr.csv"), str(tmp_path / "session.json"),
            "--model", str(model), "--out", str(report)]
    assert main(argv) == 0
    first = report.read_bytes()
    r = json.loads(first)
    assert r["accuracy"]["mean"] < 1e-6
    assert main(argv) == 0
    assert report.read_bytes() == first


def test_metrics_constant_gaze(tmp_path):
    (tmp_path / "gaze.csv").write_text("x,y\n" + "3.0,4.0\n" * 500)
    (tmp_path / "s.json").write_text(json.dumps({"rate_hz": 500}))
    out = tmp_path / "r.json"
    assert main(["metrics", str(tmp_path / "gaze.csv"), str(tmp_path / "s.json"),
                 "--out", str(out)]) == 0
    r = json.loads(out.read_text())
    assert r["rms_s2s"] == 0.0 and r["std"] == 0.0
    assert (tmp_path / "r.json.run.json").exists()
