from __future__ import annotations

from decimal import Decimal

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from dawcheck.catalog import CheckTime, Severity
from dawcheck.constraints import VcKind
from dawcheck.lang import ParseError, compile_file, compile_text, lint, parse, parse_file, serialize
from dawcheck.lang.syntax import Builtin, ContractSet, ForAll, IfThen, ShellProbe
from dawcheck.model import END, START

from conftest import DEMOS, ROOT

FIXTURE = ROOT / "tests" / "fixtures" / "all_kinds.vcw"


def test_fasta_contract_parses_to_expected_clauses():
    doc = parse_file(DEMOS / "fasta" / "fasta.vcw")
    c = doc.task("count").contracts
    loop = c.requires[0]
    assert isinstance(loop, ForAll) and loop.var == "f" and loop.pattern == "inputs/reads/*.fa"
    assert isinstance(loop.body, IfThen) and loop.body.action == "fail"
    assert loop.body.condition == ShellProbe("grep -Ev '^[>ACTGUN;]' $f")
    assert c.promises[:2] == (Builtin("COMMAND_LOGGED_NO_ERROR"), Builtin("INPUTS_NOT_CHANGED"))


def test_empty_contract_blocks():
    doc = parse("workflow w { task a { run: \"true\" require {} promise {} } }")
    assert doc.task("a").contracts == ContractSet((), ())


def test_self_loop_is_a_structural_error():
    text = "workflow w { task a { run: \"true\" outputs: [x] inputs: [x] } dep x: a -> a }"
    with pytest.raises(ParseError, match="cycle|itself"):
        compile_text(text)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as exc:
        parse("workflow w {\n  task a {\n    bogus: 1\n  }\n}", "bad.vcw")
    assert str(exc.value).startswith("bad.vcw:3:5")


@pytest.mark.parametrize("text", [
    "workflow w { task a { run: 1 } }",
    "workflow w { task a { require { exit_code >= \"x\" } } }",
    "workflow w { task a { require { stderr_empty > true } } }",
    "workflow w { task a { require { FOR_ALL(f, ITER(\"/etc/*\"), COND(\"test -s $f\")) } } }",
    "workflow w { task a { require { COND(\"test -s $g\") } } }",
    "workflow w { task a { } task a { } }",
    "workflow w { requires { exit_code = 0 } }",
    "workflow w { task __start__ { } }",
    "workflow w {",
])
def test_malformed_documents(text):
    with pytest.raises(ParseError):
        compile_text(text)


def test_resources_and_max_runtime_lower_to_catalog_constraints():
    wf = compile_text("""
        workflow w {
          task a { run: "true" resources { memory: 4Gi } max_runtime: 90s }
        }""")
    by_id = {vc.id: vc for vc in wf.constraints()}
    mem = by_id["a:node-memory_bytes"]
    assert mem.entry == "task/resource-availability" and mem.kind is VcKind.DYNAMIC
    assert mem.lhs.name == "memory_bytes" and mem.rhs == 4 * 2**30 and mem.task == "a"
    assert mem.metadata.times() == [CheckTime.BEFORE]
    limit = by_id["a:max-runtime"]
    assert limit.entry == "task/ends-within-limits"
    assert limit.metadata.times() == [CheckTime.DURING] and limit.rhs == Decimal(90)
    fits = by_id["a:fits-memory_bytes"]
    assert fits.kind is VcKind.STATIC and fits.entry == "setup/resource-availability"


def test_no_contracts_means_no_user_constraints():
    wf = compile_text('workflow w { task a { sim { runtime: 1s } } }')
    assert wf.constraints() == []
    assert wf.daw.tasks == {START, "a", END}


def test_all_catalog_kinds_are_reachable_from_the_language():
    wf = compile_file(FIXTURE)
    assert len({vc.entry for vc in wf.constraints()}) == 13
    soft = [vc for vc in wf.constraints() if vc.severity is Severity.SOFT]
    assert {vc.entry for vc in soft} == {"setup/file-must-exist", "task/metamorphic-relation"}


@pytest.mark.parametrize("path", [DEMOS / "fasta" / "fasta.vcw", FIXTURE,
                                  *sorted((DEMOS / "sim").glob("*.vcw"))], ids=lambda p: p.name)
def test_round_trip_of_shipped_documents(path):
    doc = parse_file(path)
    assert parse(serialize(doc)) == doc
    assert serialize(parse(serialize(doc))) == serialize(doc)


def test_round_trip_empty_workflow():
    doc = parse("workflow empty { }")
    assert parse(serialize(doc)) == doc


# random documents assembled from valid pieces
_REQUIRE = [
    "node.memory_bytes >= 1Gi", "in.file_exists = true", "config_param(k) = 3", "node.alive = true",
    'license_available("tool-L") = true [soft]', "in.line_count > 2", 'in.format_ok(fasta) = true',
    'FOR_ALL(f, ITER("inputs/*/*.txt"), IF_THEN(COND("test -s $f"), warn))', 'COND("true") [soft]',
]
_PROMISE = [
    "exit_code = 0", "runtime_seconds <= 2m", "out.file_size_bytes > 0", "peak_memory_bytes < 3Gi",
    "COMMAND_LOGGED_NO_ERROR()", "INPUTS_NOT_CHANGED()", "stderr_empty = true [soft]", 'out.checksum = "abc"',
    'metamorphic("id") = true', "out.folder_exists = false",
]
_STATIC = ["all_nodes.cpu_cores >= 2", "at_least_one_node.gpu_count >= 1 [soft]", 'node("n1").alive = true',
           "workflow.config_param(k) = 1", 'input(reads).file_size_bytes > 10']


@st.composite
def documents(draw):
    n = draw(st.integers(0, 4))
    lines = ["workflow gen {"]
    lines.append('  input reads = "data/reads"')
    if draw(st.booleans()):
        lines.append("  param k: int = 1 in [0, 9]")
    if draw(st.booleans()):
        lines.append("  requires { " + " ".join(draw(st.lists(st.sampled_from(_STATIC), max_size=3))) + " }")
    for i in range(n):
        body = [f'run: "echo {i} > outputs/o{i}"'] if draw(st.booleans()) else []
        body.append(f"outputs: [o{i}]")
        if i:
            body.append(f"inputs: [o{i - 1}]")
        if draw(st.booleans()):
            body.append(f"sim {{ runtime: {draw(st.integers(0, 500))}s  output o{i} size "
                        f"{draw(st.integers(0, 4096))} }}")
        if draw(st.booleans()):
            body.append(f"max_runtime: {draw(st.integers(1, 99))}m")
        if draw(st.booleans()):
            body.append(f"resources {{ memory: {draw(st.integers(0, 64))}Gi }}")
        req = draw(st.lists(st.sampled_from(_REQUIRE), max_size=3))
        pro = draw(st.lists(st.sampled_from(_PROMISE), max_size=3))
        if req or draw(st.booleans()):
            body.append("require { " + "\n".join(req) + " }")
        if pro:
            body.append("promise { " + "\n".join(pro) + " }")
        lines.append(f"  task t{i} {{ " + "\n".join(body) + " }")
        if i:
            lines.append(f"  dep o{i - 1}: t{i - 1} -> t{i}")
    lines.append("}")
    return "\n".join(lines)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(documents())
def test_round_trip_property(text):
    doc = parse(text)
    again = parse(serialize(doc))
    assert again == doc
    assert serialize(again) == serialize(doc)


# ---- lint -------------------------------------------------------------------

def _codes(text: str) -> list[str]:
    return [f.code for f in lint(parse(text))]


def test_lint_tautology():
    assert "tautology" in _codes('workflow w { task a { run: "x" promise { exit_code >= 0 } } }')


def test_lint_require_on_output():
    assert "require-on-output" in _codes(
        'workflow w { task a { run: "x" outputs: [o] require { out(o).file_size_bytes > 0 } } }')


def test_lint_contradiction():
    assert "contradiction" in _codes(
        'workflow w { task a { run: "x" promise { runtime_seconds < 10s  runtime_seconds > 20s } } }')


def test_lint_clean_documents():
    assert lint(parse_file(DEMOS / "fasta" / "fasta.vcw")) == []
    assert _codes('workflow w { task a { run: "x" promise { exit_code = 0 } } }') == []
