import csv
import json
from pathlib import Path

import numpy as np
import pytest

from diupfc.cli import main
from diupfc.io import file_sha256, read_trace_csv, scenario_hash
from diupfc.network import build_case, scenario_to_dict

DOCS = Path(__file__).resolve().parents[1] / "docs" / "scenarios"


@pytest.fixture(scope="module")
def case_a_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("a")
    assert main(["run", "cases/A", "--out", str(out)]) == 0
    return out


def test_run_case_a_writes_artifacts(case_a_out):
    for name in ("trace.csv", "metrics.csv", "charts.svg", "manifest.json"):
        assert (case_a_out / name).is_file()
    m = json.loads((case_a_out / "manifest.json").read_text())
    assert m["passed"] is True
    assert m["scenario_sha256"] == scenario_hash(build_case("A"))
    assert m["config"] == scenario_to_dict(build_case("A"))
    for name, meta in m["files"].items():
        assert meta["sha256"] == file_sha256(case_a_out / name)
    assert any("Q" in c["name"] for c in m["checks"])
    assert (case_a_out / "charts.svg").read_text().lstrip().startswith(("<?xml", "<svg"))


def test_run_case_a_q_drop_visible_in_trace(case_a_out):
    cols, data = read_trace_csv(case_a_out / "trace.csv")
    t, q = data[:, cols.index("t")], data[:, cols.index("q_src")]
    pre = np.mean(q[(t > 0.34) & (t <= 0.38)])
    post = np.mean(q[(t > 0.52) & (t <= 0.6)])
    assert pre == pytest.approx(1280, rel=0.1)
    assert abs(post) < 0.05 * pre


def test_run_reads_scenario_file_and_env_out(tmp_path, monkeypatch):
    monkeypatch.setenv("DIUPFC_OUT", str(tmp_path / "root"))
    assert main(["run", str(DOCS / "case_B.json"), "--t-end", "0.1", "--no-charts"]) == 0
    assert (tmp_path / "root" / "B" / "manifest.json").is_file()
    assert not (tmp_path / "root" / "B" / "charts.svg").exists()


def test_run_exit_codes(tmp_path, capsys):
    assert main(["run", "cases/Z", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    doc = scenario_to_dict(build_case("A"))
    doc["line"]["r"] = "abc"
    bad.write_text(json.dumps(doc))
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "line" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert main(["bogus"]) == 2


def test_run_numerical_failure_exit_3(tmp_path):
    doc = scenario_to_dict(build_case("C"))
    doc["module"]["c_dc"] = 1e-7
    doc["sim"]["t_end"] = 0.05
    p = tmp_path / "collapse.json"
    p.write_text(json.dumps(doc))
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_cases_list(capsys):
    assert main(["cases", "list"]) == 0
    out = capsys.readouterr().out
    entries = [line for line in out.splitlines() if line[:1] in "ABCDEF" and line[1:3] == "  "]
    assert [e[0] for e in entries] == list("ABCDEF")
    assert "400 V" in out and "0.02+j0.01" in out and "48 V" in out


def test_cases_run_subset(tmp_path, capsys):
    assert main(["cases", "run-all", "q", "--out", str(tmp_path)]) == 2
    assert main(["cases", "run-all", "B", "--out", str(tmp_path), "--no-charts"]) == 0
    assert (tmp_path / "B" / "manifest.json").is_file()
    assert "B: PASS" in capsys.readouterr().out


def test_envelope_command(tmp_path, capsys):
    assert main(["envelope", "--v1", "230", "--vdc", "48", "--xline", "0.1", "--overmod",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "33.9411" in out and "8.4628" in out and "8.4861" in out
    assert "48.0000" in out and "12.0459" in out and "78064" in out
    with open(tmp_path / "limits.csv") as f:
        rows = {r["quantity"]: float(r["value"]) for r in csv.DictReader(f)}
    assert rows["gamma_deg"] == pytest.approx(8.4861, abs=1e-4)
    for kind in ("reactive_comp", "active_comp", "two_grid_limits", "regulation"):
        assert (tmp_path / f"region_{kind}.csv").is_file()
    assert (tmp_path / "envelope.svg").is_file()


def test_envelope_unreachable_exit_2():
    assert main(["envelope", "--v1", "10", "--vdc", "48"]) == 2


def test_loss_command(tmp_path, capsys):
    assert main(["loss", "--sweep", "10:10000", "--points", "40", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "209.6" in out and "246.9" in out
    assert "433.01" in out and "5094.27" in out
    with open(tmp_path / "bertotti_sweep.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 40
    h = [float(r["h"]) for r in rows]
    assert all(a >= b for a, b in zip(h, h[1:]))
    assert (tmp_path / "lineup.csv").is_file() and (tmp_path / "faults.csv").is_file()


def test_loss_bad_sweep_exit_2():
    assert main(["loss", "--sweep", "100:10"]) == 2
    assert main(["loss", "--sweep", "abc"]) == 2
