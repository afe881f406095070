import json
import subprocess
import sys

import pytest

from evmod.cli import NON_REPRODUCIBLE, main
from evmod.render import read_ppm


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["synth", "clean-2", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def run(scene, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    args = ["detect", "--events", str(scene / "events.csv"), "--frames", str(scene / "frames.txt")]
    args += ["--out", str(out), "--sample-size", "800", "--render", "--truth", str(scene / "truth.json")]
    assert main(args) == 0
    return out


def test_synth_files(scene):
    assert sorted(p.name for p in scene.iterdir()) == ["events.csv", "frames.txt", "scene.json", "truth.json"]


def test_synth_repeatable(scene, tmp_path):
    assert main(["synth", "clean-2", "--out", str(tmp_path)]) == 0
    for name in ("events.csv", "frames.txt", "truth.json", "scene.json"):
        assert (tmp_path / name).read_bytes() == (scene / name).read_bytes()


def test_synth_invalid_spec_writes_nothing(tmp_path):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"objects": [{"size": 30, "start": [5, 5], "velocity": [100, 0]}]}))
    out = tmp_path / "out"
    assert main(["synth", str(spec), str(out)]) == 2
    assert not out.exists()


def test_detect_outputs(run):
    names = {p.name for p in run.iterdir()}
    assert {"detections.json", "selection.json", "manifest.json", "labels.csv", "render"} <= names
    for name in ("detections.json", "selection.json", "manifest.json"):
        assert json.loads((run / name).read_text())["format_version"] == 1
    sel = json.loads((run / "selection.json").read_text())
    assert all(w["chosen_f"] == 2 for w in sel["windows"])
    assert set(sel["windows"][0]["evaluated"]) == {str(f) for f in range(2, 21)}
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["config"]["sample_size"] == 800
    assert all(w["alpha"] > 0 for w in manifest["windows"])
    header = (run / "labels.csv").read_text().splitlines()[0]
    assert header == "window,t,x,y,p,label"


def test_rerun_from_manifest(run, tmp_path):
    assert main(["detect", "--manifest", str(run / "manifest.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "detections.json").read_bytes() == (run / "detections.json").read_bytes()


def test_eval(run, scene, tmp_path):
    args = ["eval", "--detections", str(run / "detections.json"), "--truth", str(scene / "truth.json")]
    assert main(args + ["--out", str(tmp_path), "--sequence", "clean-2"]) == 0
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "sequence,method,tp,fp,fn,precision,recall,f_measure"
    assert lines[1].startswith("clean-2,kmeans,20,0,0,1.000000,1.000000,1.000000")
    doc = json.loads((tmp_path / "matches.json").read_text())
    assert doc["format_version"] == 1 and len(doc["windows"]) == 10


def test_eval_self_is_perfect(scene, tmp_path):
    truth = str(scene / "truth.json")
    assert main(["eval", "--detections", truth, "--truth", truth, "--out", str(tmp_path)]) == 0
    assert ",1.000000,1.000000,1.000000" in (tmp_path / "metrics.csv").read_text()


def test_eval_window_mismatch(run, tmp_path):
    truth = tmp_path / "t.json"
    truth.write_text(json.dumps({"format_version": 1, "windows": [{"index": 99, "boxes": []}]}))
    args = ["eval", "--detections", str(run / "detections.json"), "--truth", str(truth), "--out", str(tmp_path)]
    assert main(args) == 2


def test_render(run, scene, tmp_path):
    assert main(["render", "--run", str(run), "--truth", str(scene / "truth.json"), "--out", str(tmp_path)]) == 0
    images = sorted(tmp_path.glob("*.ppm"))
    assert len(images) == 10
    assert read_ppm(images[0]).shape == (260, 346, 3)
    assert images[0].read_bytes() == (run / "render" / images[0].name).read_bytes()


def test_bench_small(tmp_path, capsys):
    args = ["bench", "--out", str(tmp_path), "--presets", "clean-2", "--methods", "kmeans", "dbscan"]
    assert main(args + ["--sample-size", "400"]) == 0
    assert NON_REPRODUCIBLE in capsys.readouterr().out
    rows = (tmp_path / "bench.csv").read_text().splitlines()
    assert rows[0] == "sequence,method,tp,fp,fn,precision,recall,f_measure"
    assert [r.split(",")[:2] for r in rows[1:]] == [["clean-2", "kmeans"], ["clean-2", "dbscan"]]
    assert json.loads((tmp_path / "bench.json").read_text())["note"] == NON_REPRODUCIBLE


@pytest.mark.parametrize(
    "argv, code",
    [
        ([], 1),
        (["frobnicate"], 1),
        (["detect", "--out", "x", "--knn", "many"], 1),
        (["detect", "--out", "x"], 2),
        (["detect", "--events", "missing.csv", "--frames", "missing.txt", "--out", "x"], 2),
        (["synth", "nonexistent-preset", "out"], 2),
        (["eval", "--detections", "a", "--truth", "b", "--out", "x", "--threshold", "2"], 2),
    ],
)
def test_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code


def test_bad_event_file(scene, tmp_path):
    bad = tmp_path / "e.csv"
    bad.write_text("1,2,3,1\n5,999,1,1\n")
    args = ["detect", "--events", str(bad), "--frames", str(scene / "frames.txt"), "--out", str(tmp_path / "o")]
    assert main(args) == 2


def test_f_range_validated(scene, tmp_path):
    args = ["detect", "--events", str(scene / "events.csv"), "--frames", str(scene / "frames.txt")]
    assert main(args + ["--out", str(tmp_path), "--f-min", "5", "--f-max", "3"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "evmod", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
