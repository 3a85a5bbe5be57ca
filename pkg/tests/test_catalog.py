from __future__ import annotations

import pytest

from dawcheck import catalog
from dawcheck.catalog import (
    AffectedObject, CheckTime, Component, Recoverable, Severity, UnknownEntry, VcMetadata, VcType, classify,
)
from dawcheck.constraints import SchemaMismatch, VcKind, instantiate_catalog
from dawcheck.properties import TargetKind

from conftest import ROOT

NAMES = [
    "setup/resource-availability", "setup/file-must-exist", "setup/infrastructure-health",
    "task/executable-must-exist", "task/resource-availability", "task/configuration-parameters",
    "task/licence-valid", "task/metamorphic-relation", "task/ends-within-limits", "task/ends-correctly",
    "file/file-properties", "file/file-must-exist", "file/folder-exists",
]

PARAMS = {
    "setup/resource-availability": {"property": "memory_bytes", "value": "8Gi"},
    "setup/file-must-exist": {"path": "/ref/genome.fa"},
    "setup/infrastructure-health": {},
    "task/executable-must-exist": {"executable": "bwa", "task": "align"},
    "task/resource-availability": {"property": "memory_bytes", "value": "4Gi", "task": "align"},
    "task/configuration-parameters": {"key": "threads", "value": 4, "task": "align"},
    "task/licence-valid": {"license": "tool-L", "task": "align"},
    "task/metamorphic-relation": {"predicate": "reverse-twice", "task": "align"},
    "task/ends-within-limits": {"max_runtime": "60s", "task": "align"},
    "task/ends-correctly": {"task": "align"},
    "file/file-properties": {"property": "file_size_bytes", "op": ">", "value": 0, "label": "bam"},
    "file/file-must-exist": {"label": "reads"},
    "file/folder-exists": {"label": "outdir"},
}


def test_catalog_has_thirteen_entries_in_table_order():
    assert list(catalog.CATALOG) == NAMES


def test_classify_examples():
    m = classify("file/file-must-exist")
    assert m.severity is Severity.HARD
    assert m.affected_object is AffectedObject.FILE
    assert m.times() == [CheckTime.BEFORE, CheckTime.AFTER]
    assert m.components() == [Component.EE]
    assert m.vc_type is VcType.POSTHOC and m.posthoc
    assert m.recoverable is Recoverable.MAYBE

    m = classify("setup/infrastructure-health")
    assert (m.severity, m.times(), m.components(), m.vc_type, m.recoverable) == (
        Severity.BOTH, [CheckTime.DURING], [Component.M], VcType.DYNAMIC, Recoverable.YES)

    m = classify("task/executable-must-exist")
    assert (m.severity, m.times(), m.components(), m.vc_type, m.recoverable) == (
        Severity.HARD, [CheckTime.BEFORE], [Component.EE], VcType.DYNAMIC, Recoverable.NO)

    m = classify("file/folder-exists")
    assert (m.severity, m.times(), m.components(), m.vc_type, m.recoverable) == (
        Severity.HARD, [CheckTime.BEFORE], [Component.EE], VcType.DYNAMIC, Recoverable.MAYBE)


def test_unknown_entry():
    with pytest.raises(UnknownEntry):
        classify("task/does-not-exist")


def test_render_table_matches_golden():
    golden = (ROOT / "tests" / "golden" / "catalog.txt").read_text(encoding="utf-8")
    assert catalog.render_table() == golden
    assert len(golden.splitlines()) == 14


def test_metadata_json_round_trip():
    for name in NAMES:
        m = classify(name)
        assert VcMetadata.from_json(m.to_json()) == m


@pytest.mark.parametrize("name", NAMES)
def test_every_entry_instantiates(name):
    vc = instantiate_catalog(name, PARAMS[name])
    assert vc.entry == name
    assert vc.severity in (Severity.HARD, Severity.SOFT)
    if name.startswith("setup/") and name != "setup/infrastructure-health":
        assert vc.kind is VcKind.STATIC
    else:
        assert vc.kind is VcKind.DYNAMIC


def test_instantiation_examples():
    vc = instantiate_catalog("task/resource-availability", PARAMS["task/resource-availability"])
    assert vc.kind is VcKind.DYNAMIC and vc.lhs.kind is TargetKind.NODE and vc.task == "align"
    vc = instantiate_catalog("task/metamorphic-relation", PARAMS["task/metamorphic-relation"])
    assert vc.metadata.times() == [CheckTime.AFTER]
    vc = instantiate_catalog("task/licence-valid", PARAMS["task/licence-valid"])
    assert vc.metadata.times() == [CheckTime.BEFORE] and vc.lhs.name == "license_available"


def test_severity_override_and_schema_errors():
    vc = instantiate_catalog("file/file-properties", PARAMS["file/file-properties"], severity="soft")
    assert vc.severity is Severity.SOFT
    with pytest.raises(SchemaMismatch):
        instantiate_catalog("task/ends-within-limits", {})
    with pytest.raises(SchemaMismatch):
        instantiate_catalog("task/resource-availability", {"property": "no_such_thing", "value": 1})
