"""The builtin constraint catalog and its six-dimension classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping


class Severity(str, enum.Enum):
    HARD = "hard"
    SOFT = "soft"
    BOTH = "both"  # catalog rows only: the author picks per instance


class AffectedObject(str, enum.Enum):
    SETUP = "setup"
    TASK = "task"
    FILE = "file"


class VcType(str, enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    POSTHOC = "posthoc-capable"  # dynamic, and re-checkable from preserved evidence


class CheckTime(str, enum.Enum):
    BEFORE = "before"
    DURING = "during"
    AFTER = "after"


class Component(str, enum.Enum):
    EE = "EE"
    S = "S"
    RM = "RM"
    M = "M"


class Recoverable(str, enum.Enum):
    YES = "yes"
    NO = "no"
    MAYBE = "maybe"


_TIME_ORDER = [CheckTime.BEFORE, CheckTime.DURING, CheckTime.AFTER]
_COMPONENT_ORDER = [Component.S, Component.EE, Component.RM, Component.M]  # the order the table lists them in


@dataclass(frozen=True)
class VcMetadata:
    severity: Severity
    affected_object: AffectedObject
    vc_type: VcType
    time_of_check: frozenset[CheckTime]
    component: frozenset[Component]
    recoverable: Recoverable

    def __post_init__(self):
        if not self.time_of_check:
            raise ValueError("time_of_check must not be empty")
        if not self.component:
            raise ValueError("component must not be empty")

    @property
    def discrete(self) -> bool:
        """Point-in-time checks are discrete; polled 'during' checks are continuous."""
        return CheckTime.DURING not in self.time_of_check

    @property
    def posthoc(self) -> bool:
        return self.vc_type is VcType.POSTHOC

    def times(self) -> list[CheckTime]:
        return [t for t in _TIME_ORDER if t in self.time_of_check]

    def components(self) -> list[Component]:
        return [c for c in _COMPONENT_ORDER if c in self.component]

    def with_severity(self, severity: Severity) -> "VcMetadata":
        return replace(self, severity=severity)

    def to_json(self) -> dict:
        return {
            "severity": self.severity.value,
            "affected_object": self.affected_object.value,
            "vc_type": self.vc_type.value,
            "time_of_check": [t.value for t in self.times()],
            "component": [c.value for c in self.components()],
            "recoverable": self.recoverable.value,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "VcMetadata":
        return cls(
            Severity(data["severity"]),
            AffectedObject(data["affected_object"]),
            VcType(data["vc_type"]),
            frozenset(CheckTime(t) for t in data["time_of_check"]),
            frozenset(Component(c) for c in data["component"]),
            Recoverable(data["recoverable"]),
        )


def _meta(sev, obj, typ, times, comps, rec) -> VcMetadata:
    return VcMetadata(Severity(sev), AffectedObject(obj), VcType(typ),
                      frozenset(CheckTime(t) for t in times),
                      frozenset(Component(c) for c in comps), Recoverable(rec))


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    metadata: VcMetadata
    targets: str
    params: Mapping[str, str] = field(default_factory=dict)
    summary: str = ""
    remedy: str = ""


D, P = "dynamic", "posthoc-capable"

CATALOG: dict[str, CatalogEntry] = {e.name: e for e in [
    CatalogEntry(
        "setup/resource-availability",
        _meta("hard", "setup", D, ["before", "during"], ["S", "M"], "yes"),
        "P_C(c) | P_T(s)",
        {"property": "node resource property", "op": "comparison", "value": "bound",
         "quantifier": "at_least_one_node | all_nodes"},
        "cluster nodes provide a minimum amount of a resource",
        "run on a cluster with larger nodes, or lower the task's resource request"),
    CatalogEntry(
        "setup/file-must-exist",
        _meta("hard", "setup", P, ["before", "after"], ["EE"], "maybe"),
        "P_D^i(s), P_D^o(s)",
        {"path": "file path", "quantifier": "at_least_one_node | all_nodes"},
        "a reference or input file is present and accessible",
        "stage the file onto the nodes before starting the workflow"),
    CatalogEntry(
        "setup/infrastructure-health",
        _meta("both", "setup", D, ["during"], ["M"], "yes"),
        "P_C(c), P_C(s,t)",
        {"threshold": "missed heartbeats before a node counts as dead"},
        "nodes answer the engine's heartbeat",
        "check the node's health; tasks on it were moved to other nodes where possible"),
    CatalogEntry(
        "task/executable-must-exist",
        _meta("hard", "task", D, ["before"], ["EE"], "no"),
        "P_T(s)",
        {"executable": "program name", "task": "task id"},
        "the task's program is installed on its node",
        "install the program on every node or make it part of the task's environment"),
    CatalogEntry(
        "task/resource-availability",
        _meta("hard", "task", D, ["before", "during"], ["S", "M"], "yes"),
        "P_C(c) | P_T(s)",
        {"property": "node resource property", "op": "comparison", "value": "bound", "task": "task id"},
        "the task's node has the resources the task requests",
        "reduce the task's request or add a node with enough capacity"),
    CatalogEntry(
        "task/configuration-parameters",
        _meta("both", "task", D, ["before"], ["EE"], "no"),
        "P_T(t)",
        {"key": "parameter name", "op": "comparison", "value": "bound", "task": "task id"},
        "a task parameter lies in its allowed range",
        "fix the parameter value in the workflow or its invocation"),
    CatalogEntry(
        "task/licence-valid",
        _meta("hard", "task", D, ["before"], ["EE"], "maybe"),
        "P_T(t)",
        {"license": "license name", "task": "task id"},
        "a valid licence is available when the task starts",
        "renew the licence or wait for a free licence seat"),
    CatalogEntry(
        "task/metamorphic-relation",
        _meta("both", "task", P, ["after"], ["EE"], "maybe"),
        "P_T(t)",
        {"predicate": "registered input/output predicate", "task": "task id"},
        "the task's input/output pair satisfies a registered relation",
        "inspect the task's outputs; the relation between inputs and outputs was broken"),
    CatalogEntry(
        "task/ends-within-limits",
        _meta("hard", "task", P, ["during"], ["S", "EE"], "maybe"),
        "P_T(s)",
        {"max_runtime": "duration", "task": "task id"},
        "the task finishes within its runtime limit",
        "look for a straggling node or input; raise max_runtime if the limit is too tight"),
    CatalogEntry(
        "task/ends-correctly",
        _meta("both", "task", D, ["after"], ["EE"], "maybe"),
        "P_T(s)",
        {"property": "exit_code | logged_no_error", "task": "task id"},
        "the task ends with the expected status and no logged error",
        "read the task's captured stderr for the failure cause"),
    CatalogEntry(
        "file/file-properties",
        _meta("both", "file", D, ["before", "after"], ["EE", "RM"], "maybe"),
        "P_D^i(s), P_D^o(s)",
        {"label": "dependency label", "direction": "in | out", "property": "file property",
         "op": "comparison", "value": "bound"},
        "a file exchanged between tasks has the expected size, format or digest",
        "inspect the producing task; its output does not look as expected"),
    CatalogEntry(
        "file/file-must-exist",
        _meta("hard", "file", P, ["before", "after"], ["EE"], "maybe"),
        "P_D^i(s), P_D^o(s)",
        {"label": "dependency label", "direction": "in | out"},
        "a file exchanged between tasks exists and is accessible",
        "check that the producing task writes the declared output"),
    CatalogEntry(
        "file/folder-exists",
        _meta("hard", "file", D, ["before"], ["EE"], "maybe"),
        "P_D^o(s)",
        {"label": "dependency label"},
        "a folder exists and is readable",
        "create the folder or fix the path"),
]}


class UnknownEntry(KeyError):
    pass


def classify(entry_name: str) -> VcMetadata:
    try:
        return CATALOG[entry_name].metadata
    except KeyError:
        raise UnknownEntry(f"no catalog entry named {entry_name!r}") from None


def entry(entry_name: str) -> CatalogEntry:
    try:
        return CATALOG[entry_name]
    except KeyError:
        raise UnknownEntry(f"no catalog entry named {entry_name!r}") from None


_SHORT_SEV = {Severity.HARD: "h", Severity.SOFT: "s", Severity.BOTH: "b"}
_SHORT_TYPE = {VcType.STATIC: "s", VcType.DYNAMIC: "d", VcType.POSTHOC: "d/p"}
_SHORT_REC = {Recoverable.YES: "+", Recoverable.NO: "-", Recoverable.MAYBE: "±"}

COLUMNS = ("constraint", "severity", "affected", "targets", "time", "component", "type", "recoverable")


def render_row(e: CatalogEntry) -> list[str]:
    m = e.metadata
    return [
        e.name,
        _SHORT_SEV[m.severity],
        m.affected_object.value,
        e.targets,
        ",".join(t.value for t in m.times()),
        ",".join(c.value for c in m.components()),
        _SHORT_TYPE[m.vc_type],
        _SHORT_REC[m.recoverable],
    ]


def render_table(entries=None) -> str:
    """Tab-separated listing; the ``--all`` form is compared byte-for-byte in tests."""
    rows = [list(COLUMNS)] + [render_row(e) for e in (entries or CATALOG.values())]
    return "".join("\t".join(r) + "\n" for r in rows)


def describe(e: CatalogEntry) -> str:
    m = e.metadata
    return (
        f"{e.name}: {e.summary}\n"
        f"  severity:     {m.severity.value}\n"
        f"  affected:     {m.affected_object.value} ({e.targets})\n"
        f"  type:         {m.vc_type.value}\n"
        f"  time:         {', '.join(t.value for t in m.times())}\n"
        f"  component:    {', '.join(c.value for c in m.components())}\n"
        f"  recoverable:  {m.recoverable.value}\n"
    )
