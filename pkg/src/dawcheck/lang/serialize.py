"""Canonical text form of a workflow document.

``parse(serialize(doc)) == doc`` for every document the parser accepts.
"""

from __future__ import annotations

from ..constraints import render_constant, render_label
from ..properties import format_bytes, format_decimal
from .syntax import Atom, ParamDecl, SimBlock, TaskBlock, WorkflowDocument

INDENT = "  "


def _clause(c) -> str:
    text = str(c)
    sev = getattr(c, "severity", None)
    return f"{text} [{sev.value}]" if sev is not None else text


def _param_value(value, type_: str) -> str:
    if type_ == "bytes":
        return format_bytes(value)
    if type_ == "duration":
        return format_decimal(value) + "s"
    return render_constant(value)


def _param(p: ParamDecl) -> str:
    text = f"param {p.name}: {p.type} = {_param_value(p.default, p.type)}"
    if p.low is not None:
        text += f" in [{_param_value(p.low, p.type)}, {_param_value(p.high, p.type)}]"
    return text


def _labels(labels) -> str:
    return "[" + ", ".join(render_label(x) for x in labels) + "]"


def _sim(sim: SimBlock, pad: str) -> list[str]:
    lines = [f"{pad}sim {{"]
    inner = pad + INDENT
    lines.append(f"{inner}runtime: {format_decimal(sim.runtime_s)}s")
    if sim.memory_bytes:
        lines.append(f"{inner}memory: {format_bytes(sim.memory_bytes)}")
    if sim.exit_code:
        lines.append(f"{inner}exit_code: {sim.exit_code}")
    if sim.stderr:
        lines.append(f"{inner}stderr: {render_constant(sim.stderr)}")
    if sim.jitter:
        lines.append(f"{inner}jitter: {format_decimal(sim.jitter)}")
    for out in sim.outputs:
        text = f"{inner}output {render_label(out.label)} size {format_bytes(out.size_bytes)}"
        if out.empty:
            text += " empty"
        if out.corrupt:
            text += " corrupt"
        if out.content is not None:
            text += f" content {render_constant(out.content)}"
        lines.append(text)
    lines.append(f"{pad}}}")
    return lines


def _block(name: str, clauses, pad: str) -> list[str]:
    if not clauses:
        return [f"{pad}{name} {{}}"]
    return [f"{pad}{name} {{"] + [pad + INDENT + _clause(c) for c in clauses] + [f"{pad}}}"]


def _task(t: TaskBlock) -> list[str]:
    pad = INDENT * 2
    lines = [f"{INDENT}task {t.id} {{"]
    if t.run is not None:
        lines.append(f"{pad}run: {render_constant(t.run)}")
    if t.inputs is not None:
        lines.append(f"{pad}inputs: {_labels(t.inputs)}")
    if t.outputs is not None:
        lines.append(f"{pad}outputs: {_labels(t.outputs)}")
    if t.resources:
        lines.append(f"{pad}resources {{")
        for k, v in t.resources:
            shown = format_bytes(v) if k in ("memory_bytes", "disk_bytes") else str(v)
            lines.append(f"{pad}{INDENT}{k}: {shown}")
        lines.append(f"{pad}}}")
    if t.max_runtime is not None:
        lines.append(f"{pad}max_runtime: {format_decimal(t.max_runtime)}s")
    if t.params:
        lines.append(f"{pad}params {{")
        for k, v in t.params:
            lines.append(f"{pad}{INDENT}{k}: {render_constant(v)}")
        lines.append(f"{pad}}}")
    if t.licenses:
        lines.append(f"{pad}licenses: [{', '.join(t.licenses)}]")
    if t.sim is not None:
        lines.extend(_sim(t.sim, pad))
    if t.contracts is not None:
        lines.extend(_block("require", t.contracts.requires, pad))
        lines.extend(_block("promise", t.contracts.promises, pad))
    lines.append(f"{INDENT}}}")
    return lines


def serialize(doc: WorkflowDocument) -> str:
    lines = [f"workflow {doc.name} {{"]
    for i in doc.inputs:
        lines.append(f"{INDENT}input {render_label(i.label)} = {render_constant(i.path)}")
    for p in doc.params:
        lines.append(INDENT + _param(p))
    if doc.requires:
        lines.extend(_block("requires", doc.requires, INDENT))
    for t in doc.tasks:
        lines.append("")
        lines.extend(_task(t))
    if doc.deps:
        lines.append("")
    for d in doc.deps:
        lines.append(f"{INDENT}dep {render_label(d.label)}: {d.producer} -> {d.consumer}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def atom_text(a: Atom) -> str:
    return _clause(a)

