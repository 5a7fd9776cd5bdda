"""Command-line interface: flags, config files, exit codes, file formats."""

import json

import numpy as np
import pytest

from conftest import write_feeder
from toposig.cli import main, read_samples_csv


def run_cli(*argv):
    return main(list(argv))


def test_build_library_writes_json(tmp_path):
    out = tmp_path / "lib.json"
    assert run_cli("build-library", "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert doc["state"] == [0, 0, 0, 0, 0]
    assert len(doc["signatures"]) == 5
    assert doc["pmus"] == list(range(33))


def test_build_library_at_explicit_state(tmp_path):
    out = tmp_path / "lib.json"
    assert run_cli("build-library", "--state", "11111", "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert doc["state"] == [1, 1, 1, 1, 1]
    assert all(s["direction"] == "open" for s in doc["signatures"])


def test_build_library_observability_report(capsys):
    assert run_cli("build-library", "--check-observability") == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("max_offdiag ")
    assert 0.0 < float(line.split()[1]) < 0.999


def test_build_library_rejects_bad_state(capsys):
    assert run_cli("build-library", "--state", "21x") == 2
    assert "switch state" in capsys.readouterr().err


def test_build_library_subset_pmus(tmp_path):
    out = tmp_path / "lib.json"
    assert run_cli("build-library", "--pmus", "3,7,13", "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert doc["pmus"] == [3, 7, 13]
    assert len(doc["signatures"][0]["g"]) == 3


def test_missing_feeder_file_is_input_error(capsys):
    assert run_cli("build-library", "--feeder", "/nonexistent.json") == 2
    assert "error" in capsys.readouterr().err


def simulate_config(tmp_path, **overrides):
    doc = {
        "events": [[40, 2]],
        "duration": 90,
        "sd_kw": 0.184,
        "seed": 11,
        "tau": 2,
    }
    doc.update(overrides)
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_simulate_then_detect_round_trip(tmp_path):
    cfg = simulate_config(tmp_path, mode="simple")
    samples = tmp_path / "s.csv"
    summary = tmp_path / "sum.json"
    assert run_cli(
        "simulate", "--config", cfg, "--out", str(samples), "--summary", str(summary)
    ) == 0
    doc = json.loads(summary.read_text())
    assert doc["initial_state"] == "00000"
    assert doc["classification"] == "correct"
    assert [c["sample_index"] for c in doc["commits"]] == [40]
    assert doc["commits"][0]["switch"] == 2
    assert doc["commits"][0]["direction"] == "close"

    events = tmp_path / "ev.jsonl"
    assert run_cli(
        "detect", "--samples", str(samples), "--mode", "simple",
        "--out", str(events),
    ) == 0
    lines = [json.loads(l) for l in events.read_text().strip().splitlines()]
    assert lines == doc["commits"]


def test_detect_robust_replay_matches_simulate(tmp_path):
    cfg = simulate_config(tmp_path)
    samples = tmp_path / "s.csv"
    summary = tmp_path / "sum.json"
    assert run_cli(
        "simulate", "--config", cfg, "--out", str(samples), "--summary", str(summary)
    ) == 0
    doc = json.loads(summary.read_text())
    # robust confirmation: one commit, tau - 1 samples after the event
    assert [c["sample_index"] for c in doc["commits"]] == [41]
    events = tmp_path / "ev.jsonl"
    assert run_cli(
        "detect", "--samples", str(samples), "--tau", "2",
        "--min-norm", str(doc["min_norm"]), "--out", str(events),
    ) == 0
    lines = [json.loads(l) for l in events.read_text().strip().splitlines()]
    assert lines == doc["commits"]


def test_detect_auto_gate_quiet_stream(tmp_path):
    cfg = simulate_config(tmp_path, events=[], duration=240)
    samples = tmp_path / "s.csv"
    assert run_cli("simulate", "--config", cfg, "--out", str(samples)) == 0
    events = tmp_path / "ev.jsonl"
    assert run_cli(
        "detect", "--samples", str(samples), "--tau", "2",
        "--min-norm", "auto", "--out", str(events),
    ) == 0
    assert events.read_text() == ""


def test_samples_csv_shape_and_parse(tmp_path):
    cfg = simulate_config(tmp_path, events=[], duration=12, pmus="9,19,23")
    samples = tmp_path / "s.csv"
    assert run_cli("simulate", "--config", cfg, "--out", str(samples)) == 0
    header = samples.read_text().splitlines()[0]
    assert header == "sample_index,u9_re,u9_im,u19_re,u19_im,u23_re,u23_im"
    idx, arr = read_samples_csv(str(samples), 3)
    assert arr.shape == (12, 3)
    assert np.array_equal(idx, np.arange(12))
    # magnitudes are plausible phase voltages in volts
    assert 10_000 < np.abs(arr).min() < 13_000


def test_blind_pmu_subset_is_an_input_error(tmp_path, capsys):
    # buses 1, 4, 30 all sit outside the loop that switch 1 closes, so its
    # signature degenerates on those rows and the tool refuses the set
    cfg = simulate_config(tmp_path, events=[], duration=8, pmus="1,4,30")
    assert run_cli("simulate", "--config", cfg, "--out", str(tmp_path / "s.csv")) == 2
    assert "unchanged" in capsys.readouterr().err


def test_detect_rejects_column_mismatch(tmp_path, capsys):
    cfg = simulate_config(tmp_path, events=[], duration=8, pmus="9,19,23")
    samples = tmp_path / "s.csv"
    assert run_cli("simulate", "--config", cfg, "--out", str(samples)) == 0
    assert run_cli("detect", "--samples", str(samples)) == 2
    assert "columns" in capsys.readouterr().err


def test_unknown_config_field_named_in_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"durations": 50}))
    assert run_cli("simulate", "--config", str(path)) == 2
    err = capsys.readouterr().err
    assert "invalid config field" in err and "durations" in err


def test_campaign_csv_and_trace(tmp_path):
    out = tmp_path / "rows.csv"
    trace = tmp_path / "trace.jsonl"
    assert run_cli(
        "campaign", "--runs", "15", "--sd-kw", "0,0.184", "--tau", "2",
        "--seed", "4", "--out", str(out), "--trace", str(trace),
    ) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == (
        "sd_kw,pmu_count,non_detections,wrong_detections,decision_errors,"
        "total_errors,pct_errors"
    )
    assert len(lines) == 3
    assert len(trace.read_text().strip().splitlines()) == 30


def test_campaign_is_reproducible(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out in (a, b):
        assert run_cli(
            "campaign", "--runs", "12", "--sd-kw", "0.425", "--tau", "2",
            "--seed", "21", "--out", str(out),
        ) == 0
    assert a.read_bytes() == b.read_bytes()


def test_campaign_toml_config(tmp_path):
    cfg = tmp_path / "camp.toml"
    cfg.write_text('runs = 8\nsd_kw = 0.184\ntau = 2\nmode = "robust"\n')
    out = tmp_path / "rows.csv"
    assert run_cli("campaign", "--config", str(cfg), "--out", str(out)) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 2


def test_place_grows_seed_set(tmp_path):
    cfg = tmp_path / "place.json"
    cfg.write_text(
        json.dumps(
            {
                "seed_pmus": [3, 7, 13, 20, 23, 29],
                "tstop": 40,
                "sd_kw": 0.184,
                "tau": 2,
            }
        )
    )
    out = tmp_path / "place.json.out"
    assert run_cli(
        "place", "--config", str(cfg), "--runs", "5", "--out", str(out)
    ) == 0
    doc = json.loads(out.read_text())
    assert len(doc["final"]) == 7
    assert set([3, 7, 13, 20, 23, 29]) < set(doc["final"])
    assert len(doc["rounds"]) == 1
    assert doc["rounds"][0]["chosen_bus"] in doc["final"]


def test_place_requires_seed_pmus(tmp_path, capsys):
    cfg = tmp_path / "place.json"
    cfg.write_text(json.dumps({"tstop": 40}))
    assert run_cli("place", "--config", str(cfg)) == 2
    assert "seed_pmus" in capsys.readouterr().err


def test_divergence_exit_code(tmp_path, capsys):
    doc = {
        "nominal_voltage_v": 12660.0,
        "buses": [
            {"id": 0},
            {"id": 1, "p_kw": 1e6, "q_kvar": 5e5},
            {"id": 2, "p_kw": 1e6, "q_kvar": 5e5},
        ],
        "branches": [
            {"from": 0, "to": 1, "r_ohm": 1.0, "x_ohm": 0.7},
            {
                "from": 1,
                "to": 2,
                "r_ohm": 1.0,
                "x_ohm": 0.7,
                "switch": {"id": 0, "name": "S", "initial_closed": True},
            },
        ],
    }
    feeder = write_feeder(tmp_path / "hot.json", doc)
    assert run_cli(
        "simulate", "--feeder", feeder, "--mode", "simple", "--sd-kw", "0",
        "--out", str(tmp_path / "s.csv"),
    ) == 3
    assert "diverged" in capsys.readouterr().err
