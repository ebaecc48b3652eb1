"""Command-line behavior: goldens, artifacts, determinism, exit codes."""

import json
from pathlib import Path

import pytest

from convlab.cli import main
from convlab.events import demo_dataset, serialize_events

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def events_file(tmp_path):
    path = tmp_path / "events.jsonl"
    path.write_text("".join(line + "\n" for line in serialize_events(demo_dataset())),
                    encoding="utf-8")
    return str(path)


def run_cli(capsys, *argv):
    status = main(list(argv))
    captured = capsys.readouterr()
    return status, captured.out, captured.err


@pytest.mark.parametrize("table", [1, 3, 4])
def test_reproduce_matches_golden(capsys, table):
    status, out, _ = run_cli(capsys, "reproduce", "--table", str(table))
    assert status == 0
    golden = (GOLDEN / f"reproduce_table{table}.txt").read_text(encoding="utf-8")
    assert out == golden


def test_reproduce_is_byte_identical_across_runs(capsys):
    first = run_cli(capsys, "reproduce", "--table", "4")
    second = run_cli(capsys, "reproduce", "--table", "4")
    assert first == second


def test_reproduce_table1_artifacts(capsys, tmp_path):
    outdir = tmp_path / "t1"
    status, out, _ = run_cli(capsys, "reproduce", "--table", "1",
                             "--output", str(outdir))
    assert status == 0
    payload = json.loads((outdir / "table1.json").read_text())
    assert payload["EXP"] == pytest.approx([0.0667, 0.1333, 0.2667, 0.5333],
                                           abs=1e-3)
    assert (outdir / "table1.csv").exists()
    assert (outdir / "table1.png").stat().st_size > 0


def test_reproduce_rejects_unknown_table(capsys):
    status, _, err = run_cli(capsys, "reproduce", "--table", "2")
    assert status == 1
    assert "invalid choice" in err


def test_attribute_writes_jsonl(capsys, events_file, tmp_path):
    out_path = tmp_path / "attr.jsonl"
    status, _, _ = run_cli(capsys, "attribute", "--events", events_file,
                           "--rule", "LTA", "--relation", "user_advertiser",
                           "--enforcement", "post", "--bound", "2",
                           "--output", str(out_path))
    assert status == 0
    rows = [json.loads(line) for line in out_path.read_text().splitlines()]
    assert [(r["impression"], r["conversion"]) for r in rows] == \
        [("i2", "c1"), ("i2", "c2"), ("i5", "c5")]
    assert all(r["weight"] == 1.0 for r in rows)


def test_attribute_unbounded_to_stdout(capsys, events_file):
    status, out, _ = run_cli(capsys, "attribute", "--events", events_file,
                             "--rule", "UNI", "--relation", "impression",
                             "--enforcement", "none")
    assert status == 0
    rows = [json.loads(line) for line in out.splitlines()]
    c4_weights = [r["weight"] for r in rows if r["conversion"] == "c4"]
    assert c4_weights == pytest.approx([0.25] * 4)


def test_measure_deterministic_given_seed(capsys, events_file):
    argv = ("measure", "--events", events_file, "--rule", "LTA",
            "--relation", "user", "--enforcement", "post", "--bound", "2",
            "--epsilon", "1.0", "--seed", "9")
    first = run_cli(capsys, *argv)
    second = run_cli(capsys, *argv)
    assert first == second
    payload = json.loads(first[1])
    assert payload["noise_scale"] == 2.0
    assert payload["epsilon_spent"] == 1.0
    assert len(payload["values"]) == 1


def test_measure_refuses_invalid_configuration(capsys, events_file):
    status, _, err = run_cli(capsys, "measure", "--events", events_file,
                             "--rule", "UNI", "--relation", "impression",
                             "--enforcement", "post", "--epsilon", "1.0")
    assert status == 1
    assert "refusing to measure" in err
    assert "--unsafe-allow-invalid" in err
    status, out, _ = run_cli(capsys, "measure", "--events", events_file,
                             "--rule", "UNI", "--relation", "impression",
                             "--enforcement", "post", "--epsilon", "1.0",
                             "--c0", "1.0", "--unsafe-allow-invalid")
    assert status == 0
    assert json.loads(out)["noise_scale"] == 1.0


def test_measure_with_query_and_config(capsys, events_file, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "events": events_file,
        "rule": "POS",
        "vectors": {str(m): [1.0] + [0.0] * (m - 1) for m in range(1, 8)},
        "label": "POS[first]",
        "relation": "impression",
        "enforcement": "post",
        "bound": 1,
        "epsilon": 0.5,
        "query": {"kind": "sliced_count",
                  "slices": [{"field": "advertiser", "equals": "A1"},
                             {"field": "advertiser", "equals": "A2"}]},
    }), encoding="utf-8")
    status, out, _ = run_cli(capsys, "measure", "--config", str(config))
    assert status == 0
    payload = json.loads(out)
    assert payload["noise_scale"] == 2.0 * 1 * 1.0 / 0.5
    assert len(payload["values"]) == 2


def test_sensitivity_command(capsys, events_file, tmp_path):
    status, out, _ = run_cli(capsys, "sensitivity", "--events", events_file,
                             "--rule", "LTA", "--relation", "impression",
                             "--enforcement", "post", "--bound", "1")
    assert status == 0
    payload = json.loads(out)
    assert payload["empirical_sensitivity"] == 2.0
    assert payload["worst_neighbor"] == "remove:i2"

    pool = tmp_path / "pool.jsonl"
    pool.write_text(json.dumps({
        "kind": "impression", "id": "x1", "t": 3, "user": "U",
        "publisher": "P9", "advertiser": "A1", "engagement": "click",
        "unit": "g1"}) + "\n", encoding="utf-8")
    status, out, _ = run_cli(capsys, "sensitivity", "--events", events_file,
                             "--rule", "LTA", "--relation", "impression",
                             "--enforcement", "post", "--bound", "1",
                             "--pool", str(pool))
    assert status == 0
    assert json.loads(out)["empirical_sensitivity"] == 2.0


def test_classify_writes_artifacts(capsys, tmp_path):
    outdir = tmp_path / "matrix"
    status, out, _ = run_cli(capsys, "classify", "--trials", "4", "--seed", "3",
                             "--p-ceiling", "20", "--output", str(outdir))
    assert status == 0
    assert "impression / post" in out
    payload = json.loads((outdir / "classification.json").read_text())
    by_cell = {(p["rule"], p["relation"], p["enforcement"]): p for p in payload}
    uni_cell = by_cell[("UNI", "impression", "post_attribution")]
    assert uni_cell["verdict"] == "invalid_witnessed"
    assert uni_cell["witness"]["files"].startswith("witnesses/")
    assert (outdir / uni_cell["witness"]["files"]).exists()
    assert by_cell[("LTA", "impression", "post_attribution")]["verdict"] == \
        "valid_observed"
    assert (outdir / "classification.csv").exists()
    assert (outdir / "classification.png").stat().st_size > 0


def test_reproduce_table5_artifacts(capsys, tmp_path):
    outdir = tmp_path / "t5"
    status, out, _ = run_cli(capsys, "reproduce", "--table", "5",
                             "--trials", "3", "--p-ceiling", "10",
                             "--output", str(outdir))
    assert status == 0
    assert "impression / post" in out
    assert (outdir / "classification.json").exists()
    assert (outdir / "classification.png").stat().st_size > 0
    assert (outdir / "witness_growth.png").stat().st_size > 0


def test_classify_env_var_overrides_jobs(capsys, monkeypatch):
    monkeypatch.setenv("CONVLAB_JOBS", "2")
    status, out, _ = run_cli(capsys, "classify", "--trials", "2",
                             "--p-ceiling", "10", "--jobs", "1")
    assert status == 0
    monkeypatch.setenv("CONVLAB_JOBS", "both")
    status, _, err = run_cli(capsys, "classify", "--trials", "2")
    assert status == 1
    assert "CONVLAB_JOBS" in err


def test_unknown_flag_exits_one(capsys):
    status, _, err = run_cli(capsys, "classify", "--frobnicate")
    assert status == 1
    assert "usage" in err.lower()


def test_missing_events_file_exits_one(capsys, tmp_path):
    status, _, err = run_cli(capsys, "attribute", "--events",
                             str(tmp_path / "nope.jsonl"), "--rule", "LTA",
                             "--relation", "user")
    assert status == 1
    assert "nope.jsonl" in err


def test_bad_event_file_exits_one(capsys, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind": "impression"\n', encoding="utf-8")
    status, _, err = run_cli(capsys, "attribute", "--events", str(bad),
                             "--rule", "LTA", "--relation", "user")
    assert status == 1
    assert "line 1" in err
