from __future__ import annotations

import base64
import json
import shutil
from pathlib import Path

from dawcheck.constraints import Verdict
from dawcheck.engine import EngineConfig, RunStatus, real_defaults, run
from dawcheck.engine.posthoc import agreement, digest_checks, is_posthoc, posthoc_checks, recheck_posthoc
from dawcheck.lang import compile_file, compile_text
from dawcheck.sim import load_faults, simulate

from conftest import DEMOS, cluster

SIM = DEMOS / "sim"

OUTPUTS = """workflow o {
  task make { run: "echo payload > outputs/data" outputs: [data]
              promise { out(data).file_exists = true  out(data).file_size_bytes > 0 } }
  task use { run: "cat inputs/data > outputs/copy" inputs: [data] outputs: [copy]
             require { in(data).file_exists = true } }
  dep data: make -> use
}"""


def _kept_real(tmp_path: Path, text: str = OUTPUTS):
    wf = compile_text(text)
    result = run(wf, config=real_defaults(sandbox_root=str(tmp_path / "sb"), keep_sandbox=True))
    return wf, result


def test_is_posthoc_follows_the_catalog():
    wf = compile_text(OUTPUTS)
    kinds = {vc.id: is_posthoc(vc) for vc in wf.constraints()}
    assert kinds["make:promise1"] and kinds["use:require1"]
    assert not kinds["make:promise2"]


def test_rechecks_agree_with_a_clean_run(tmp_path):
    wf, result = _kept_real(tmp_path)
    assert result.status is RunStatus.CORRECT
    checks = posthoc_checks(result, wf)
    total, disagree = agreement(checks)
    assert total >= 2 and disagree == []
    assert recheck_posthoc(result, wf) == []


def test_recheck_from_a_stored_report(tmp_path):
    wf, result = _kept_real(tmp_path)
    report = json.loads(result.dumps())
    assert recheck_posthoc(report, wf) == []


def test_tampered_output_is_detected(tmp_path):
    wf, result = _kept_real(tmp_path)
    target = Path(result.sandbox_root) / "make" / "attempt-1" / "outputs" / "data"
    target.write_text("something else\n")
    assert [t[:3] for t in digest_checks(result)] == [("make", "make/attempt-1", "data")]
    reports = recheck_posthoc(result, wf)
    (r,) = reports
    assert r.entry == "file/file-properties" and r.step == "posthoc"
    assert r.subject["task"] == "make" and r.verdict is Verdict.VIOLATED


def test_deleted_output_is_unevaluable(tmp_path):
    wf, result = _kept_real(tmp_path)
    (Path(result.sandbox_root) / "make" / "attempt-1" / "outputs" / "data").unlink()
    reports = recheck_posthoc(result, wf)
    assert reports and all(r.unevaluable for r in reports)
    assert {r.constraint_id for r in reports} >= {"make:promise1"}


def test_missing_evidence_is_unevaluable(tmp_path):
    wf, result = _kept_real(tmp_path)
    shutil.rmtree(result.sandbox_root)
    reports = recheck_posthoc(result, wf)
    assert reports and all(r.unevaluable for r in reports)


def test_simulated_straggler_recheck_matches_live(tmp_path):
    wf = compile_file(SIM / "straggler.vcw")
    cfg = EngineConfig(keep_sandbox=True, sandbox_root=str(tmp_path))
    result = simulate(wf, cluster(8, 8), cfg, load_faults(SIM / "straggle.faults.json"))
    checks = [c for c in posthoc_checks(result, wf) if c.constraint == "classify:max-runtime"]
    assert len(checks) == 3
    assert all(c.live is False and c.posthoc is False for c in checks)
    assert agreement(checks)[1] == []


def test_simulated_tamper_via_manifest(tmp_path):
    wf = compile_file(SIM / "straggler.vcw")
    cfg = EngineConfig(keep_sandbox=True, sandbox_root=str(tmp_path))
    result = simulate(wf, cluster(8, 8), cfg)
    assert result.status is RunStatus.CORRECT and recheck_posthoc(result, wf) == []
    manifest = tmp_path / "manifest.json"
    data = json.loads(manifest.read_text())
    entry = data["sandboxes"]["prep/attempt-1"]["out/features"]
    entry["content_b64"] = base64.b64encode(b"tampered").decode()
    entry["size"] = len(b"tampered")
    manifest.write_text(json.dumps(data))
    reports = recheck_posthoc(result, wf)
    assert any(r.subject.get("task") == "prep" and "posthoc-digest" in r.constraint_id for r in reports)
