"""Typed property registry, comparison operators and unit parsing.

Every property a constraint can mention is listed here with its target
kind, value type and unit.  Sizes are bytes, durations seconds, counts
plain integers.  Constants accept binary suffixes (``8Gi``) and duration
suffixes (``90s``, ``5m``, ``1h``).
"""

from __future__ import annotations

import enum
import operator
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation


class TargetKind(str, enum.Enum):
    TASK = "task"
    LABEL = "label"
    NODE = "node"


class Direction(str, enum.Enum):
    IN = "in"
    OUT = "out"


class ValueType(str, enum.Enum):
    INT = "int"
    DECIMAL = "decimal"
    BOOL = "bool"
    STR = "str"
    SCALAR = "scalar"  # config parameters: whatever the workflow declares


class ComparisonOp(str, enum.Enum):
    EQ = "="
    LT = "<"
    GT = ">"
    LE = "<="
    GE = ">="

    def __call__(self, lhs, rhs) -> bool:
        return _OPS[self](lhs, rhs)

    @classmethod
    def parse(cls, text: str) -> "ComparisonOp":
        aliases = {"==": "=", "≤": "<=", "≥": ">=", "=<": "<=", "=>": ">="}
        return cls(aliases.get(text, text))

    def complement(self) -> "ComparisonOp":
        """Operator for the negated comparison over a total order (not defined for '=')."""
        if self is ComparisonOp.EQ:
            raise ValueError("'=' has no complement among the allowed operators")
        return {ComparisonOp.LT: ComparisonOp.GE, ComparisonOp.GE: ComparisonOp.LT,
                ComparisonOp.GT: ComparisonOp.LE, ComparisonOp.LE: ComparisonOp.GT}[self]


_OPS = {
    ComparisonOp.EQ: operator.eq,
    ComparisonOp.LT: operator.lt,
    ComparisonOp.GT: operator.gt,
    ComparisonOp.LE: operator.le,
    ComparisonOp.GE: operator.ge,
}


@dataclass(frozen=True)
class PropertySpec:
    kind: TargetKind
    name: str
    value_type: ValueType
    unit: str = ""
    arg: str | None = None  # what the parenthesised argument names, if any
    nonnegative: bool = False
    description: str = ""


_REGISTRY_LIST = [
    PropertySpec(TargetKind.NODE, "memory_bytes", ValueType.INT, "bytes", nonnegative=True,
                 description="main memory of the node"),
    PropertySpec(TargetKind.NODE, "cpu_cores", ValueType.INT, "cores", nonnegative=True),
    PropertySpec(TargetKind.NODE, "gpu_count", ValueType.INT, "gpus", nonnegative=True),
    PropertySpec(TargetKind.NODE, "disk_free_bytes", ValueType.INT, "bytes", nonnegative=True),
    PropertySpec(TargetKind.NODE, "executable_present", ValueType.BOOL, arg="executable"),
    PropertySpec(TargetKind.NODE, "file_exists", ValueType.BOOL, arg="path"),
    PropertySpec(TargetKind.NODE, "folder_exists", ValueType.BOOL, arg="path"),
    PropertySpec(TargetKind.NODE, "alive", ValueType.BOOL),
    PropertySpec(TargetKind.NODE, "heartbeat_age_seconds", ValueType.DECIMAL, "seconds", nonnegative=True),

    PropertySpec(TargetKind.TASK, "exit_code", ValueType.INT, nonnegative=True),
    PropertySpec(TargetKind.TASK, "runtime_seconds", ValueType.DECIMAL, "seconds", nonnegative=True),
    PropertySpec(TargetKind.TASK, "peak_memory_bytes", ValueType.INT, "bytes", nonnegative=True),
    PropertySpec(TargetKind.TASK, "requested_memory_bytes", ValueType.INT, "bytes", nonnegative=True),
    PropertySpec(TargetKind.TASK, "stderr_empty", ValueType.BOOL),
    PropertySpec(TargetKind.TASK, "logged_no_error", ValueType.BOOL,
                 description="exit status 0 and nothing but whitespace on stderr"),
    PropertySpec(TargetKind.TASK, "config_param", ValueType.SCALAR, arg="key"),
    PropertySpec(TargetKind.TASK, "license_available", ValueType.BOOL, arg="license"),
    PropertySpec(TargetKind.TASK, "metamorphic", ValueType.BOOL, arg="predicate"),
    PropertySpec(TargetKind.TASK, "clause_holds", ValueType.BOOL, arg="clause"),

    PropertySpec(TargetKind.LABEL, "file_exists", ValueType.BOOL),
    PropertySpec(TargetKind.LABEL, "folder_exists", ValueType.BOOL),
    PropertySpec(TargetKind.LABEL, "file_size_bytes", ValueType.INT, "bytes", nonnegative=True),
    PropertySpec(TargetKind.LABEL, "line_count", ValueType.INT, "lines", nonnegative=True),
    PropertySpec(TargetKind.LABEL, "checksum", ValueType.STR, description="sha256 hex digest"),
    PropertySpec(TargetKind.LABEL, "format_ok", ValueType.BOOL, arg="format"),
    PropertySpec(TargetKind.LABEL, "unchanged", ValueType.BOOL,
                 description="digest after the task equals digest before it"),
]

REGISTRY: dict[tuple[TargetKind, str], PropertySpec] = {(p.kind, p.name): p for p in _REGISTRY_LIST}
REGISTRY_VERSION = 1


class UnknownProperty(KeyError):
    pass


def lookup(kind: TargetKind, name: str) -> PropertySpec:
    try:
        return REGISTRY[(kind, name)]
    except KeyError:
        raise UnknownProperty(f"no {kind.value} property named {name!r}") from None


def kinds_with(name: str) -> list[TargetKind]:
    return [k for (k, n) in REGISTRY if n == name]


_BYTE_SUFFIX = {"": 1, "B": 1, "Ki": 2**10, "Mi": 2**20, "Gi": 2**30, "Ti": 2**40,
                "K": 10**3, "M": 10**6, "G": 10**9, "T": 10**12}
_TIME_SUFFIX = {"s": 1, "m": 60, "h": 3600, "d": 86400}
_QUANTITY = re.compile(r"^([0-9]+(?:\.[0-9]+)?)([A-Za-z]*)$")


class QuantityError(ValueError):
    pass


def parse_bytes(text: str) -> int:
    m = _QUANTITY.match(text.strip())
    if not m or m.group(2) not in _BYTE_SUFFIX:
        raise QuantityError(f"not a byte quantity: {text!r}")
    value = Decimal(m.group(1)) * _BYTE_SUFFIX[m.group(2)]
    if value != value.to_integral_value():
        raise QuantityError(f"byte quantity is fractional: {text!r}")
    return int(value)


def parse_duration(text: str) -> Decimal:
    m = _QUANTITY.match(text.strip())
    if not m or (m.group(2) and m.group(2) not in _TIME_SUFFIX):
        raise QuantityError(f"not a duration: {text!r}")
    return Decimal(m.group(1)) * _TIME_SUFFIX.get(m.group(2), 1)


def format_bytes(n: int) -> str:
    for suffix in ("Ti", "Gi", "Mi", "Ki"):
        unit = _BYTE_SUFFIX[suffix]
        if n and n % unit == 0:
            return f"{n // unit}{suffix}"
    return str(n)


def format_decimal(d: Decimal) -> str:
    d = Decimal(d)
    if d == d.to_integral_value():
        return str(int(d))
    return format(d.normalize(), "f")


def coerce_constant(spec: PropertySpec, raw: object) -> object:
    """Convert a literal (already typed or a suffixed string) to the property's value type."""
    vt = spec.value_type
    if vt is ValueType.BOOL:
        if isinstance(raw, bool):
            return raw
        raise TypeError(f"{spec.name} is boolean; got {raw!r}")
    if vt is ValueType.STR:
        if isinstance(raw, str):
            return raw
        raise TypeError(f"{spec.name} is a string; got {raw!r}")
    if vt is ValueType.SCALAR:
        return raw
    if isinstance(raw, bool):
        raise TypeError(f"{spec.name} is numeric; got {raw!r}")
    if isinstance(raw, str):
        try:
            if spec.unit == "bytes":
                return parse_bytes(raw)
            if spec.unit == "seconds":
                return parse_duration(raw)
            return Decimal(raw) if vt is ValueType.DECIMAL else int(raw)
        except (QuantityError, InvalidOperation, ValueError):
            raise TypeError(f"{spec.name} expects a {spec.unit or vt.value} quantity; got {raw!r}") from None
    if vt is ValueType.INT:
        if isinstance(raw, int):
            return raw
        if isinstance(raw, Decimal) and raw == raw.to_integral_value():
            return int(raw)
        raise TypeError(f"{spec.name} is an integer; got {raw!r}")
    if isinstance(raw, (int, Decimal)):
        return Decimal(raw)
    raise TypeError(f"{spec.name} expects a number; got {raw!r}")


def check_operator(spec: PropertySpec, op: ComparisonOp) -> None:
    if spec.value_type in (ValueType.BOOL, ValueType.STR) and op is not ComparisonOp.EQ:
        raise TypeError(f"{spec.name} is {spec.value_type.value}-valued and only supports '='")
