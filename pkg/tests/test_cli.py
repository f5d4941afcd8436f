import json

import numpy as np
import pytest

from dynremoval import dataio
from dynremoval.cli import main


SCENE = """\
ground_height: -1.73
sensor: {rings: 32, vertical_fov: [-24.9, 2.0], azimuth_bins: 900}
static_boxes:
  - {center: [20, 12.75, 1.27], size: [60, 0.5, 6]}
dynamic_boxes:
  - {center: [12, -4, -0.23], size: [4, 2, 3], velocity: [0, 20, 0]}
trajectory: {step: [1, 0, 0]}
"""


@pytest.fixture
def dataset(tmp_path):
    (tmp_path / "scene.yaml").write_text(SCENE)
    assert main(["synth", "--scene", str(tmp_path / "scene.yaml"), "--sweeps", "3", "--out", str(tmp_path / "d")]) == 0
    return tmp_path


def run_args(tmp, *extra):
    d = tmp / "d"
    return ["run", "--scans", str(d / "velodyne"), "--poses", str(d / "poses.txt"),
            "--config", str(d / "config.yaml"), "--out-map", str(tmp / "map.ply"),
            "--report", str(tmp / "r.jsonl"), *extra]


def test_synth_layout(dataset):
    d = dataset / "d"
    assert len(list((d / "velodyne").glob("*.bin"))) == 3
    assert len(list((d / "labels").glob("*.label"))) == 3
    assert len(dataio.read_poses(d / "poses.txt")) == 3
    labels = [dataio.read_semantic_labels(p) for p in sorted((d / "labels").glob("*.label"))]
    assert any(lab.dynamic.any() for lab in labels)


def test_synth_zero_sweeps(tmp_path):
    assert main(["synth", "--sweeps", "0", "--out", str(tmp_path / "e")]) == 0
    assert list((tmp_path / "e" / "velodyne").iterdir()) == []
    text = (tmp_path / "e" / "poses.txt").read_text()
    assert text.startswith("#") and len(text.splitlines()) == 1


def test_synth_ground_only_is_static(tmp_path):
    (tmp_path / "g.yaml").write_text("ground_height: -1.73\nsensor: {rings: 16, azimuth_bins: 360}\n")
    assert main(["synth", "--scene", str(tmp_path / "g.yaml"), "--sweeps", "2", "--out", str(tmp_path / "g")]) == 0
    for p in (tmp_path / "g" / "labels").iterdir():
        assert not dataio.read_semantic_labels(p).dynamic.any()


def test_synth_bad_scene_is_config_error(tmp_path, capsys):
    (tmp_path / "s.yaml").write_text("sensor: {rings: 0}\n")
    assert main(["synth", "--scene", str(tmp_path / "s.yaml"), "--sweeps", "1", "--out", str(tmp_path / "x")]) == 4
    assert "s.yaml" in capsys.readouterr().err


def test_run_writes_reports_and_map(dataset):
    assert main(run_args(dataset)) == 0
    lines = (dataset / "r.jsonl").read_text().splitlines()
    assert len(lines) == 3
    assert json.loads(lines[0])["sweep"] == 0
    assert (dataset / "map.ply").read_bytes().startswith(b"ply\n")


def test_synth_run_eval_compose(dataset, capsys):
    assert main(run_args(dataset, "--verdicts", str(dataset / "v.npz"), "--bootstrap-min-points", "0",
                         "--out-tracking", str(dataset / "t.ply"))) == 0
    assert (dataset / "t.ply").exists()
    capsys.readouterr()
    assert main(["eval", "--verdicts", str(dataset / "v.npz"), "--labels", str(dataset / "d" / "labels"),
                 "--json", str(dataset / "e.json")]) == 0
    out = capsys.readouterr().out
    assert "PR (%)" in out and "RR (%)" in out
    result = json.loads((dataset / "e.json").read_text())
    assert result["total_dynamic"] > 0 and result["RR"] is not None


def test_flags_override_config(dataset):
    assert main(run_args(dataset, "--bootstrap-min-points", "0", "--min-neighbors", "1000")) == 0
    reps = dataio.read_reports(dataset / "r.jsonl")
    # sweep 1 cannot reach 1000 neighbors, so nothing beyond ground is static
    assert reps[1].static == 0


def test_missing_pose_file(dataset, capsys):
    args = run_args(dataset)
    args[args.index("--poses") + 1] = str(dataset / "nope.txt")
    assert main(args) == 3
    assert "nope.txt" in capsys.readouterr().err


def test_bad_pose_line_names_line(dataset, capsys):
    (dataset / "d" / "poses.txt").write_text("1 0 0 0 0 1 0 0 0 0 1\n")
    assert main(run_args(dataset)) == 3
    assert "poses.txt:1" in capsys.readouterr().err


def test_unknown_config_key(dataset, capsys):
    (dataset / "bad.yaml").write_text("detector:\n  min_neighbours: 5\n")
    args = run_args(dataset)
    args[args.index("--config") + 1] = str(dataset / "bad.yaml")
    assert main(args) == 4
    assert "detector.min_neighbours" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == 2


def test_timing_command(dataset, capsys):
    assert main(run_args(dataset)) == 0
    capsys.readouterr()
    assert main(["timing", "--report", str(dataset / "r.jsonl")]) == 0
    assert "Label Consistency Detection" in capsys.readouterr().out


def test_runs_are_deterministic(dataset, tmp_path):
    assert main(run_args(dataset, "--omit-timings")) == 0
    first = ((dataset / "map.ply").read_bytes(), (dataset / "r.jsonl").read_text())
    assert main(run_args(dataset, "--omit-timings")) == 0
    assert first == ((dataset / "map.ply").read_bytes(), (dataset / "r.jsonl").read_text())
