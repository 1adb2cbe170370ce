import json
import subprocess
import sys

import numpy as np
import pytest

from ctxtrack import cli
from ctxtrack.core import StateEstimate
from ctxtrack.pipeline import dumps_tracks
from ctxtrack.sim import RADAR, read_stream, read_truth, scenario_two, simulate_stream, write_stream, write_truth


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    """A one-minute Scenario 2 stream with its truth file."""
    out = tmp_path_factory.mktemp("data")
    sc = scenario_two(0)
    scans = [s for s in simulate_stream(sc) if s.timestamp < 60.0]
    stream, truth = out / "two.stream.jsonl", out / "two.truth.jsonl"
    write_stream(stream, scans, {"scenario": "two", "seed": 0})
    write_truth(truth, sc)
    return out, stream, truth


def oracle_tracks_file(path, stream, truth):
    _, scans = read_stream(stream)
    _, gts = read_truth(truth)
    outputs = []
    for s in scans:
        ests = []
        for i, g in enumerate(gts):
            if g.alive(s.timestamp):
                x, y = g.position_at(s.timestamp)
                ests.append((i, StateEstimate([x, 0.0, y, 0.0], np.eye(4))))
        outputs.append((s, ests))
    path.write_text(dumps_tracks(outputs))
    return path


@pytest.mark.parametrize("text, expected", [
    ("0-9", list(range(10))),
    ("1,4,7", [1, 4, 7]),
    ("0-2,5", [0, 1, 2, 5]),
])
def test_parse_seeds(text, expected):
    assert cli.parse_seeds(text) == expected


@pytest.mark.parametrize("text", ["", "a", "5-2", "1,,x"])
def test_parse_seeds_rejects(text):
    with pytest.raises(Exception):
        cli.parse_seeds(text)


def test_simulate_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", "--scenario", "two", "--seed", "7", "--out", str(a)) == 0
    assert run("simulate", "--scenario", "two", "--seed", "7", "--out", str(b)) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["scenario-two-seed7.stream.jsonl", "scenario-two-seed7.truth.jsonl"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert str(a / names[0]) in capsys.readouterr().out


def test_unknown_scenario_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as err:
        run("simulate", "--scenario", "three")
    assert err.value.code != 0
    assert "invalid choice" in capsys.readouterr().err


def test_track_radar_only_skips_lidar(files, tmp_path):
    _, stream, _ = files
    out = tmp_path / "tracks.jsonl"
    assert run("track", str(stream), "--variant", "gmphd-radar-only", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["variant"] == "gmphd-radar-only" and header["scenario"] == "two"
    assert {json.loads(line)["kind"] for line in lines[1:]} == {RADAR}


def test_track_variants_differ(files, tmp_path):
    _, stream, _ = files
    texts = []
    for variant in ("gmphd-uniform", "gmphd-context-aware"):
        out = tmp_path / f"{variant}.jsonl"
        assert run("track", str(stream), "--variant", variant, "--out", str(out)) == 0
        texts.append(out.read_text().splitlines()[1:])
    assert texts[0] != texts[1]


def test_track_empty_stream(tmp_path):
    stream = tmp_path / "empty.jsonl"
    stream.write_text('{"format": "ctxtrack-stream/1"}\n')
    out = tmp_path / "tracks.jsonl"
    assert run("track", str(stream), "--variant", "jpda", "--out", str(out)) == 0
    assert len(out.read_text().splitlines()) == 1


def test_track_malformed_stream(tmp_path, capsys):
    stream = tmp_path / "bad.jsonl"
    stream.write_text('{"format": "ctxtrack-stream/1"}\n{oops\n')
    assert run("track", str(stream), "--variant", "jpda") == 1
    err = capsys.readouterr().err
    assert err.startswith("ctxtrack: error:") and "line 2" in err


def test_evaluate_oracle_tracks(files, tmp_path, capsys):
    _, stream, truth = files
    tracks = oracle_tracks_file(tmp_path / "oracle.jsonl", stream, truth)
    metrics = tmp_path / "metrics.jsonl"
    assert run("evaluate", "--tracks", str(tracks), "--truth", str(truth), "--stream", str(stream),
               "--tracks", str(tracks), "--truth", str(truth), "--stream", str(stream),
               "--out", str(metrics)) == 0
    rows = [json.loads(line) for line in metrics.read_text().splitlines()]
    assert [r["column"] for r in rows] == ["two", "two#1", "combined"]
    for r in rows:
        assert r["hota"] == pytest.approx(100.0)
        assert r["gospa_rms"] == pytest.approx(0.0, abs=1e-9)
    assert "combined" in capsys.readouterr().out


def test_evaluate_missing_truth(files, tmp_path, capsys):
    _, stream, _ = files
    tracks = tmp_path / "t.jsonl"
    tracks.write_text('{"format": "ctxtrack-tracks/1"}\n')
    assert run("evaluate", "--tracks", str(tracks), "--truth", str(tmp_path / "nope.jsonl"),
               "--stream", str(stream)) == 1
    assert "truth file not found" in capsys.readouterr().err


def test_evaluate_timestamp_mismatch(files, tmp_path, capsys):
    _, stream, truth = files
    tracks = tmp_path / "t.jsonl"
    tracks.write_text('{"format": "ctxtrack-tracks/1"}\n')
    assert run("evaluate", "--tracks", str(tracks), "--truth", str(truth), "--stream", str(stream)) == 1
    assert "radar outputs" in capsys.readouterr().err


def test_bad_config_reported(files, tmp_path, capsys):
    _, stream, _ = files
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("gmphd:\n  nonsense: 1\n")
    assert run("track", str(stream), "--variant", "jpda", "--config", str(cfg)) == 1
    assert "unknown keys" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ctxtrack", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for command in ("simulate", "track", "evaluate", "compare"):
        assert command in proc.stdout
