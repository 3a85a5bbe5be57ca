from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from dawcheck.cli import REPORT_SCHEMA, main

from conftest import DEMOS, ROOT

SIM = DEMOS / "sim"


@pytest.fixture
def fasta(tmp_path) -> Path:
    dst = tmp_path / "fasta"
    shutil.copytree(DEMOS / "fasta", dst)
    return dst


@pytest.fixture
def schema():
    return json.loads(REPORT_SCHEMA.read_text())


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_validate_adequate_cluster(capsys):
    assert main(["validate", str(SIM / "straggler.vcw"), "--cluster", str(SIM / "cluster-8g.json")]) == 0
    assert "setup correct" in capsys.readouterr().out


def test_validate_memory_shortfall(capsys, schema):
    code = main(["validate", str(SIM / "early_abort.vcw"), "--cluster", str(SIM / "cluster-8g.json"),
                 "--format", "json"])
    report = _json(capsys)
    assert code == 2 and report["exit_code"] == 2
    assert any(v["subject"].get("task") == "assemble" for v in report["violations"])
    jsonschema.validate(report, schema)


def test_malformed_workflow_is_exit_4(tmp_path, capsys):
    bad = tmp_path / "bad.vcw"
    bad.write_text("workflow w {\n  task a { run: }\n}\n")
    assert main(["validate", str(bad)]) == 4
    assert f"{bad}:2:" in capsys.readouterr().err


def test_fasta_good_and_bad(fasta, capsys, schema):
    wf = str(fasta / "fasta.vcw")
    assert main(["run", wf, "--sandbox", str(fasta / "sb-good")]) == 0
    capsys.readouterr()
    code = main(["run", wf, "--input", f"reads={fasta / 'data' / 'bad'}", "--sandbox", str(fasta / "sb-bad"),
                 "--format", "json"])
    report = _json(capsys)
    assert code == 3
    jsonschema.validate(report, schema)
    first = [v for v in report["violations"] if v["step"] == report["first_erroneous_step"]]
    assert first[0]["subject"]["task"] == "count"
    assert first[0]["constraint"] == "count:require1"
    assert first[0]["subject"]["file"] == "inputs/reads/sample1.fa"
    assert report["records"]["count"]["attempts"] == []


def test_human_run_output_shows_first_erroneous_step(fasta, capsys):
    main(["run", str(fasta / "fasta.vcw"), "--input", f"reads={fasta / 'data' / 'bad'}",
          "--sandbox", str(fasta / "sb")])
    out = capsys.readouterr().out
    assert "FIRST ERRONEOUS STEP: 1" in out and "count:require1" in out


def test_simulate_early_abort(capsys, schema):
    code = main(["simulate", str(SIM / "early_abort.vcw"), "--cluster", str(SIM / "cluster-8g.json"),
                 "--format", "json"])
    report = _json(capsys)
    assert code == 2
    assert report["savings"]["savings_s"] > 0
    jsonschema.validate(report, schema)


def test_simulate_needs_a_cluster(capsys):
    assert main(["simulate", str(SIM / "straggler.vcw")]) == 4


def test_simulate_with_faults_and_report_file(tmp_path, capsys, schema):
    out = tmp_path / "report.json"
    code = main(["simulate", str(SIM / "straggler.vcw"), "--cluster", str(SIM / "cluster-8g.json"),
                 "--faults", str(SIM / "straggle.faults.json"), "--report", str(out)])
    assert code == 3
    report = json.loads(out.read_text())
    jsonschema.validate(report, schema)
    capsys.readouterr()
    assert main(["explain", str(out)]) == 0
    text = capsys.readouterr().out
    assert "straggler" in text and "Attempt 1 of 3" in text


def test_keep_sandbox_writes_report_with_rechecks(tmp_path, capsys, schema):
    sb = tmp_path / "sb"
    code = main(["simulate", str(SIM / "straggler.vcw"), "--cluster", str(SIM / "cluster-8g.json"),
                 "--faults", str(SIM / "straggle.faults.json"), "--keep-sandbox", "--sandbox", str(sb)])
    assert code == 3
    report = json.loads((sb / "report.json").read_text())
    jsonschema.validate(report, schema)
    assert "posthoc" in report
    capsys.readouterr()
    # the rechecks reproduce the live failures, so they agree
    assert main(["recheck", str(SIM / "straggler.vcw"), str(sb / "report.json")]) == 0
    assert "0 disagree" in capsys.readouterr().out
    manifest = json.loads((sb / "manifest.json").read_text())
    manifest["sandboxes"]["prep/attempt-1"]["out/features"].update(content_b64="eA==", size=1)
    (sb / "manifest.json").write_text(json.dumps(manifest))
    assert main(["recheck", str(SIM / "straggler.vcw"), str(sb / "report.json")]) == 3
    assert "1 output(s) changed" in capsys.readouterr().out


def test_classify(capsys):
    assert main(["classify", "--all"]) == 0
    golden = (ROOT / "tests" / "golden" / "catalog.txt").read_text(encoding="utf-8")
    assert capsys.readouterr().out == golden
    assert main(["classify", "file/folder-exists"]) == 0
    out = capsys.readouterr().out
    assert "hard" in out and "before" in out and "maybe" in out
    assert main(["classify", "file/nope"]) == 4
    assert main(["classify"]) == 4


def test_explain_edge_cases(tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    assert main(["explain", str(empty)]) == 0
    assert capsys.readouterr().out.strip() == "no violations"
    corrupt = tmp_path / "corrupt.json"
    corrupt.write_text("{not json")
    assert main(["explain", str(corrupt)]) == 4
    assert main(["explain", str(tmp_path / "missing.json")]) == 4


def test_lint(capsys):
    assert main(["lint", str(DEMOS / "fasta" / "fasta.vcw")]) == 0
    assert "no findings" in capsys.readouterr().out


def test_bad_arguments():
    assert main(["frobnicate"]) == 4
    assert main(["run", str(SIM / "straggler.vcw"), "--param", "novalue"]) == 4


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "dawcheck.cli", "classify", "--all"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0 and len(proc.stdout.splitlines()) == 14
