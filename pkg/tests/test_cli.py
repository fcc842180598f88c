import json
import os
import subprocess
import sys

import numpy as np

from cornealgaze import netpbm
from cornealgaze.cli import main
from cornealgaze.csvio import read_csv
from cornealgaze.geometry import CameraIntrinsics, EyePose
from cornealgaze.render import render_eye_image


def test_design_mode_succeeds(tmp_path, capsys):
    assert main(["design", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["mode"] == "design"
    assert "design.csv" in manifest["outputs"]
    assert "px/cm" in capsys.readouterr().out


def test_unknown_key_exits_2(tmp_path):
    assert main(["design", "--out", str(tmp_path), "--set", "rig.nope=1"]) == 2


def test_bad_value_exits_2(tmp_path):
    assert main(["design", "--out", str(tmp_path), "--set", "rig.focal_length=-3"]) == 2


def test_missing_input_exits_3(tmp_path):
    assert main(["detect", "--out", str(tmp_path), "--input", str(tmp_path / "none")]) == 3


def test_detect_on_directory_flags_bad_frames(tmp_path):
    frames = tmp_path / "in"
    frames.mkdir()
    cam = CameraIntrinsics.centered(480, 480, 14000.0)
    img = render_eye_image(EyePose(np.array([0.0, 0.0, 500.0]), 0.3, 0.3), cam)
    netpbm.write_image(frames / "a.pgm", img)
    netpbm.write_image(frames / "b.pgm", np.full((480, 480), 200, np.uint8))
    (frames / "c.pgm").write_bytes(netpbm.encode(img)[:-10])
    out = tmp_path / "out"
    assert main(["detect", "--out", str(out), "--input", str(frames),
                 "--set", "run.overlays=false"]) == 0
    header, rows = read_csv(out / "frames.csv")
    flags = [r[header.index("flags")] for r in rows]
    assert flags[0] == ""
    assert "no-ellipse" in flags[1]
    assert "read-error" in flags[2]


def test_seed_changes_manifest(tmp_path):
    assert main(["autofocus-calib", "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["autofocus-calib", "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert a["seed"] == 1 and b["seed"] == 2


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "cornealgaze.cli", "--help"],
                         capture_output=True, text=True, env={**os.environ})
    assert res.returncode == 0
    assert "sensitivity" in res.stdout
