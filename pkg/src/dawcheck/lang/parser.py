"""Lexer and recursive-descent parser for ``.vcw`` workflow documents.

Whitespace and newlines are insignificant; ``#`` starts a comment that
runs to the end of the line.  Identifiers are ``[A-Za-z_][A-Za-z0-9_]*``;
labels that are not identifiers (``"reads.fa"``) are written as strings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal

from ..catalog import Severity
from ..constraints import PropertyRef, Quantifier
from ..model import START
from ..properties import (
    ComparisonOp,
    Direction,
    QuantityError,
    TargetKind,
    UnknownProperty,
    check_operator,
    coerce_constant,
    kinds_with,
    lookup,
    parse_bytes,
    parse_duration,
)
from .syntax import (
    BUILTINS,
    PARAM_TYPES,
    Atom,
    Builtin,
    ContractSet,
    DepDecl,
    ForAll,
    IfThen,
    InputDecl,
    ParamDecl,
    Pos,
    ShellProbe,
    SimBlock,
    SimOutput,
    TaskBlock,
    WorkflowDocument,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int, filename: str = "<input>"):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename

    def __str__(self):
        return f"{self.filename}:{self.line}:{self.col}: {self.message}"


@dataclass(frozen=True)
class Token:
    kind: str  # ident, string, number, op, punct, arrow, eof
    text: str
    line: int
    col: int
    value: object = None

    @property
    def pos(self) -> Pos:
        return Pos(self.line, self.col)


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<arrow>->)
  | (?P<number>-?[0-9]+(?:\.[0-9]+)?[A-Za-z]*)
  | (?P<op><=|>=|==|=<|=>|≤|≥|<|>|=)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}()\[\],:;.])
""", re.VERBOSE)

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


def _unescape(body: str, line: int, col: int, filename: str) -> str:
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ParseError(f"unknown escape \\{nxt}", line, col + i + 1, filename)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            ch = text[pos]
            if ch == '"':
                raise ParseError("unterminated string", line, col, filename)
            raise ParseError(f"unexpected character {ch!r}", line, col, filename)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "string":
            tokens.append(Token("string", chunk, line, col, _unescape(chunk[1:-1], line, col, filename)))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


_QUANTIFIERS = {q.value: q for q in Quantifier}
_RESOURCE_NAMES = {
    "memory_bytes": "memory_bytes", "memory": "memory_bytes",
    "cpu_cores": "cpu_cores", "cpu": "cpu_cores", "cpus": "cpu_cores",
    "gpu_count": "gpu_count", "gpu": "gpu_count", "gpus": "gpu_count",
    "disk_bytes": "disk_bytes", "disk": "disk_bytes",
}
COMBINATORS = ("FOR_ALL", "IF_THEN", "COND", "ITER") + BUILTINS


class Parser:
    def __init__(self, text: str, filename: str = "<input>"):
        self.filename = filename
        self.tokens = tokenize(text, filename)
        self.i = 0

    # -- token helpers ------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col, self.filename)

    def advance(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.tok.kind in ("punct", "op", "arrow", "ident") and self.tok.text == text

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            return self.advance()
        return None

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def string(self, what: str = "string") -> str:
        if self.tok.kind != "string":
            raise self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        return self.advance().value

    def label(self) -> str:
        tok = self.tok
        if tok.kind == "ident":
            return self.advance().text
        if tok.kind == "string":
            value = self.advance().value
            if not value or "->" in value or "/" in value:
                raise self.error(f"invalid label {value!r}", tok)
            return value
        raise self.error(f"expected a label, found {tok.text or 'end of input'!r}")

    def label_list(self) -> tuple[str, ...]:
        self.expect("[")
        items = []
        while not self.at("]"):
            items.append(self.label())
            if not self.accept(","):
                break
        self.expect("]")
        return tuple(items)

    def skip_separators(self):
        while self.accept(",") or self.accept(";"):
            pass

    # -- literals -----------------------------------------------------------
    def literal(self):
        """A literal as written: bool, str, or the raw text of a number/quantity."""
        tok = self.tok
        if tok.kind == "string":
            return self.advance().value
        if tok.kind == "ident" and tok.text in ("true", "false"):
            self.advance()
            return tok.text == "true"
        if tok.kind == "number":
            return self.advance().text
        raise self.error(f"expected a constant, found {tok.text or 'end of input'!r}")

    def typed_literal(self, type_: str, tok: Token):
        kind = self.tok.kind
        raw = self.literal()
        try:
            return _convert(raw, type_, kind)
        except (ValueError, TypeError, QuantityError) as exc:
            raise self.error(str(exc), tok) from None

    # -- document -----------------------------------------------------------
    def document(self) -> WorkflowDocument:
        start = self.expect("workflow")
        name = self.ident("workflow name").text
        self.expect("{")
        inputs, params, requires, tasks, deps = [], [], [], [], []
        seen_tasks: dict[str, Token] = {}
        while not self.at("}"):
            tok = self.tok
            if self.accept("task"):
                task = self.task_block(tok)
                if task.id in seen_tasks:
                    raise self.error(f"duplicate task id {task.id!r}", tok)
                seen_tasks[task.id] = tok
                tasks.append(task)
            elif self.accept("dep"):
                deps.append(self.dep_decl(tok))
            elif self.accept("input"):
                label = self.label()
                self.expect("=")
                inputs.append(InputDecl(label, self.string("input path"), tok.pos))
            elif self.accept("param"):
                params.append(self.param_decl(tok))
            elif self.accept("requires"):
                requires.extend(self.static_block())
            elif tok.kind == "eof":
                raise self.error("unexpected end of input; missing '}'")
            else:
                raise self.error(f"unexpected {tok.text!r} in workflow body")
            self.skip_separators()
        self.expect("}")
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r} after workflow")
        return WorkflowDocument(name, tuple(inputs), tuple(params), tuple(requires), tuple(tasks),
                                tuple(deps), start.pos)

    def dep_decl(self, tok: Token) -> DepDecl:
        label = self.label()
        self.expect(":")
        producer = self.ident("producer task").text
        self.expect("->")
        consumer = self.ident("consumer task").text
        return DepDecl(label, producer, consumer, tok.pos)

    def param_decl(self, tok: Token) -> ParamDecl:
        name = self.ident("parameter name").text
        type_ = "str"
        if self.accept(":"):
            type_tok = self.ident("parameter type")
            if type_tok.text not in PARAM_TYPES:
                raise self.error(f"unknown parameter type {type_tok.text!r}", type_tok)
            type_ = type_tok.text
        self.expect("=")
        default = self.typed_literal(type_, self.tok)
        low = high = None
        if self.accept("in"):
            self.expect("[")
            low = self.typed_literal(type_, self.tok)
            self.expect(",")
            high = self.typed_literal(type_, self.tok)
            self.expect("]")
            if not low <= default <= high:
                raise self.error(f"default of parameter {name} lies outside [{low}, {high}]", tok)
        return ParamDecl(name, type_, default, low, high, tok.pos)

    def task_block(self, start: Token) -> TaskBlock:
        task_id = self.ident("task id").text
        if task_id in (START, "__end__"):
            raise self.error(f"task id {task_id!r} is reserved")
        self.expect("{")
        fields: dict[str, object] = {}

        def once(key: str, tok: Token):
            if key in fields:
                raise self.error(f"{key} given twice in task {task_id}", tok)

        while not self.at("}"):
            tok = self.tok
            if tok.kind != "ident":
                raise self.error(f"unexpected {tok.text or 'end of input'!r} in task {task_id}")
            key = tok.text
            once(key, tok)
            self.advance()
            if key == "run":
                self.expect(":")
                fields[key] = self.string("command")
            elif key in ("inputs", "outputs"):
                self.expect(":")
                fields[key] = self.label_list()
            elif key == "licenses":
                self.expect(":")
                self.expect("[")
                names = []
                while not self.at("]"):
                    names.append(self.ident("licence name").text)
                    if not self.accept(","):
                        break
                self.expect("]")
                fields[key] = tuple(names)
            elif key == "max_runtime":
                self.expect(":")
                fields[key] = self.typed_literal("duration", self.tok)
                if not fields[key] > 0:
                    raise self.error("max_runtime must be positive", tok)
            elif key == "resources":
                fields[key] = self.resources_block()
            elif key == "params":
                fields[key] = self.params_block()
            elif key == "sim":
                fields[key] = self.sim_block()
            elif key in ("require", "promise"):
                fields[key] = self.contract_block()
            else:
                raise self.error(f"unknown task field {key!r}", tok)
            self.skip_separators()
        self.expect("}")
        contracts = None
        if "require" in fields or "promise" in fields:
            contracts = ContractSet(tuple(fields.get("require", ())), tuple(fields.get("promise", ())))
        return TaskBlock(
            task_id,
            run=fields.get("run"),
            inputs=fields.get("inputs"),
            outputs=fields.get("outputs"),
            resources=fields.get("resources", ()),
            max_runtime=fields.get("max_runtime"),
            params=fields.get("params", ()),
            licenses=fields.get("licenses", ()),
            sim=fields.get("sim"),
            contracts=contracts,
            pos=start.pos,
        )

    def resources_block(self) -> tuple[tuple[str, int], ...]:
        self.expect("{")
        items = {}
        while not self.at("}"):
            tok = self.ident("resource name")
            name = _RESOURCE_NAMES.get(tok.text)
            if name is None:
                raise self.error(f"unknown resource {tok.text!r}", tok)
            self.expect(":")
            vtok = self.tok
            raw = self.literal()
            try:
                value = parse_bytes(raw) if name in ("memory_bytes", "disk_bytes") else int(raw)
            except (QuantityError, ValueError, TypeError):
                raise self.error(f"bad quantity for {name}: {raw!r}", vtok) from None
            if value < 0:
                raise self.error(f"{name} must be >= 0", vtok)
            items[name] = value
            self.skip_separators()
        self.expect("}")
        order = ("memory_bytes", "cpu_cores", "gpu_count", "disk_bytes")
        return tuple((k, items[k]) for k in order if k in items)

    def params_block(self) -> tuple[tuple[str, object], ...]:
        self.expect("{")
        items = []
        while not self.at("}"):
            name = self.ident("parameter name").text
            self.expect(":")
            kind = self.tok.kind
            raw = self.literal()
            items.append((name, _auto_value(raw) if kind == "number" else raw))
            self.skip_separators()
        self.expect("}")
        return tuple(items)

    def sim_block(self) -> SimBlock:
        self.expect("{")
        kw: dict[str, object] = {}
        outputs = []
        while not self.at("}"):
            tok = self.ident("sim field")
            key = tok.text
            try:
                if key == "runtime":
                    self.expect(":")
                    kw["runtime_s"] = parse_duration(self.literal())
                elif key == "memory":
                    self.expect(":")
                    kw["memory_bytes"] = parse_bytes(self.literal())
                elif key == "exit_code":
                    self.expect(":")
                    kw["exit_code"] = int(self.literal())
                elif key == "stderr":
                    self.expect(":")
                    kw["stderr"] = self.string("stderr text")
                elif key == "jitter":
                    self.expect(":")
                    kw["jitter"] = Decimal(self.literal())
                elif key == "output":
                    label = self.label()
                    size = 0
                    empty = corrupt = False
                    content = None
                    while self.tok.kind == "ident" and self.tok.text in ("size", "empty", "corrupt", "content"):
                        flag = self.advance().text
                        if flag == "size":
                            size = parse_bytes(self.literal())
                        elif flag == "content":
                            content = self.string("content")
                        elif flag == "empty":
                            empty = True
                        else:
                            corrupt = True
                    outputs.append(SimOutput(label, size, empty, corrupt, content))
                else:
                    raise self.error(f"unknown sim field {key!r}", tok)
            except (QuantityError, ValueError, TypeError, ArithmeticError) as exc:
                if isinstance(exc, ParseError):
                    raise
                raise self.error(f"bad value for sim {key}: {exc}", tok) from None
            self.skip_separators()
        self.expect("}")
        return SimBlock(outputs=tuple(outputs), **kw)

    # -- contracts ------------------------------------------------------------
    def contract_block(self) -> list:
        self.expect("{")
        clauses = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unexpected end of input in contract block")
            clauses.append(self.clause(static=False))
            self.skip_separators()
        self.expect("}")
        return clauses

    def static_block(self) -> list:
        self.expect("{")
        clauses = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unexpected end of input in requires block")
            clause = self.clause(static=True)
            clauses.append(clause)
            self.skip_separators()
        self.expect("}")
        return clauses

    def severity_suffix(self) -> Severity | None:
        if self.at("[") and self.peek().kind == "ident" and self.peek().text in ("hard", "soft"):
            self.advance()
            sev = Severity(self.advance().text)
            self.expect("]")
            return sev
        return None

    def clause(self, static: bool, bound: frozenset[str] = frozenset(), top: bool = True):
        """One clause; a ``[hard]``/``[soft]`` suffix is only allowed on top-level clauses."""
        tok = self.tok
        if static:
            node = self.atom(static=True, bound=bound)
        elif tok.kind == "ident" and tok.text.isupper() and len(tok.text) > 1:
            node = self.combinator(bound)
        else:
            node = self.atom(static=False, bound=bound)
        if not top:
            return node
        return _with_severity(node, self.severity_suffix())

    def combinator(self, bound: frozenset[str]):
        tok = self.advance()
        name = tok.text
        if name not in COMBINATORS:
            raise self.error(f"unknown combinator {name!r}", tok)
        if name in BUILTINS:
            if self.accept("("):
                self.expect(")")
            return Builtin(name, pos=tok.pos)
        if name == "COND":
            self.expect("(")
            cmd = self.string("shell command")
            self.expect(")")
            _check_template(cmd, bound, self, tok)
            return ShellProbe(cmd, pos=tok.pos)
        if name == "IF_THEN":
            self.expect("(")
            cond = self.clause(static=False, bound=bound, top=False)
            self.expect(",")
            action_tok = self.tok
            action = self.string() if self.tok.kind == "string" else self.ident("failure action").text
            if re.fullmatch(r"exit\s+[1-9][0-9]*", action.strip()):
                action = "fail"  # shell-style spelling of the failure action
            if action not in ("fail", "warn"):
                raise self.error(f"IF_THEN action must be fail or warn, not {action!r}", action_tok)
            self.expect(")")
            return IfThen(cond, action, pos=tok.pos)
        if name == "FOR_ALL":
            self.expect("(")
            var_tok = self.tok
            var = self.string() if self.tok.kind == "string" else self.ident("loop variable").text
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", var):
                raise self.error(f"invalid loop variable {var!r}", var_tok)
            self.expect(",")
            self.expect("ITER")
            self.expect("(")
            pattern = self.string("glob pattern")
            if pattern.startswith("/") or ".." in pattern.split("/"):
                raise self.error("glob patterns must stay inside the task sandbox", var_tok)
            self.expect(")")
            self.expect(",")
            body = self.clause(static=False, bound=bound | {var}, top=False)
            self.expect(")")
            return ForAll(var, pattern, body, pos=tok.pos)
        raise self.error(f"{name} cannot start a clause", tok)

    def atom(self, static: bool, bound: frozenset[str]) -> Atom:
        tok = self.tok
        ref, quantifier = self.property_ref(static)
        op_tok = self.tok
        if op_tok.kind != "op":
            raise self.error(f"expected a comparison operator, found {op_tok.text or 'end of input'!r}")
        self.advance()
        op = ComparisonOp.parse(op_tok.text)
        vtok = self.tok
        raw = self.literal()
        spec = ref.spec
        try:
            check_operator(spec, op)
            if vtok.kind == "string" and spec.value_type.value not in ("str", "scalar"):
                raise TypeError(f"{spec.name} expects an unquoted {spec.value_type.value} constant")
            if vtok.kind == "number" and spec.value_type.value == "scalar":
                raw = _auto_value(raw)
            value = coerce_constant(spec, raw)
        except TypeError as exc:
            raise self.error(str(exc), vtok) from None
        return Atom(ref, op, value, quantifier=quantifier, static=static, pos=tok.pos)

    def name(self, what: str) -> str:
        if self.tok.kind == "string":
            return self.advance().value
        return self.ident(what).text

    def _arg(self) -> str | None:
        if self.accept("("):
            tok = self.tok
            if tok.kind == "string":
                arg = self.advance().value
            else:
                arg = self.ident("argument").text
            self.expect(")")
            return arg
        return None

    def _prop(self, kind: TargetKind) -> tuple[str, str | None, Token]:
        tok = self.ident("property name")
        try:
            spec = lookup(kind, tok.text)
        except UnknownProperty:
            raise self.error(f"unknown {kind.value} property {tok.text!r}", tok) from None
        arg = self._arg()
        if spec.arg and arg is None:
            raise self.error(f"{tok.text} needs an argument ({spec.arg})", tok)
        if not spec.arg and arg is not None:
            raise self.error(f"{tok.text} takes no argument", tok)
        return tok.text, arg, tok

    def property_ref(self, static: bool) -> tuple[PropertyRef, Quantifier | None]:
        tok = self.ident("property")
        head = tok.text
        if static:
            if head in _QUANTIFIERS and self.at("."):
                self.advance()
                name, arg, _ = self._prop(TargetKind.NODE)
                return PropertyRef(TargetKind.NODE, name, arg), _QUANTIFIERS[head]
            if head == "node" and self.at("("):
                self.advance()
                node = self.name("node id")
                self.expect(")")
                self.expect(".")
                name, arg, _ = self._prop(TargetKind.NODE)
                return PropertyRef(TargetKind.NODE, name, arg, node=node), None
            if head == "task" and self.at("("):
                self.advance()
                task = self.name("task id")
                self.expect(")")
                self.expect(".")
                name, arg, _ = self._prop(TargetKind.TASK)
                return PropertyRef(TargetKind.TASK, name, arg, task=task), None
            if head == "workflow" and self.at("."):
                self.advance()
                name, arg, _ = self._prop(TargetKind.TASK)
                return PropertyRef(TargetKind.TASK, name, arg, task=START), None
            if head == "input" and self.at("("):
                self.advance()
                label = self.label()
                self.expect(")")
                self.expect(".")
                name, arg, _ = self._prop(TargetKind.LABEL)
                return PropertyRef(TargetKind.LABEL, name, arg, label=label), None
            raise self.error(
                f"workflow requirements start with all_nodes, at_least_one_node, node(ID), task(ID), "
                f"workflow or input(LABEL); found {head!r}", tok)

        if head == "node" and (self.at(".") or self.at("(")):
            node = None
            if self.accept("("):
                node = self.name("node id")
                self.expect(")")
            self.expect(".")
            name, arg, _ = self._prop(TargetKind.NODE)
            return PropertyRef(TargetKind.NODE, name, arg, node=node), None
        if head in ("in", "out") and (self.at(".") or self.at("(")):
            label = None
            if self.accept("("):
                label = self.label()
                self.expect(")")
            self.expect(".")
            name, arg, _ = self._prop(TargetKind.LABEL)
            return PropertyRef(TargetKind.LABEL, name, arg, label=label, direction=Direction(head)), None
        if head in _QUANTIFIERS:
            raise self.error("node quantifiers are only allowed in workflow-level requires blocks", tok)
        try:
            spec = lookup(TargetKind.TASK, head)
        except UnknownProperty:
            kinds = kinds_with(head)
            hint = f" (did you mean {kinds[0].value}.{head}?)" if kinds else ""
            raise self.error(f"unknown task property {head!r}{hint}", tok) from None
        arg = self._arg()
        if spec.arg and arg is None:
            raise self.error(f"{head} needs an argument ({spec.arg})", tok)
        if not spec.arg and arg is not None:
            raise self.error(f"{head} takes no argument", tok)
        return PropertyRef(TargetKind.TASK, head, arg), None


def _numeric(raw) -> bool:
    return isinstance(raw, str) and bool(re.fullmatch(r"-?[0-9]+(?:\.[0-9]+)?[A-Za-z]*", raw))


def _auto_value(raw):
    """Type a bare literal: integers, decimals, byte quantities and durations."""
    if not isinstance(raw, str) or not _numeric(raw):
        return raw
    m = re.fullmatch(r"(-?[0-9]+(?:\.[0-9]+)?)([A-Za-z]*)", raw)
    number, suffix = m.groups()
    if not suffix:
        return int(number) if "." not in number else Decimal(number)
    if suffix in ("s", "m", "h", "d"):
        return parse_duration(raw)
    return parse_bytes(raw)


def _convert(raw, type_: str, kind: str):
    if type_ == "bool":
        if not isinstance(raw, bool):
            raise TypeError(f"expected true or false, got {raw!r}")
        return raw
    if type_ == "str":
        if kind != "string":
            raise TypeError(f"expected a quoted string, got {raw!r}")
        return raw
    if kind != "number":
        raise TypeError(f"expected a {type_}, got {raw!r}")
    if type_ == "int":
        return int(raw)
    if type_ == "decimal":
        return Decimal(raw)
    if type_ == "bytes":
        return parse_bytes(raw)
    return parse_duration(raw)


def _with_severity(node, severity):
    if severity is None:
        return node
    from dataclasses import replace
    return replace(node, severity=severity)


_VAR_REF = re.compile(r"\$\{?([A-Za-z_][A-Za-z0-9_]*)\}?")


def _check_template(cmd: str, bound: frozenset[str], parser: Parser, tok: Token) -> None:
    for m in _VAR_REF.finditer(cmd):
        name = m.group(1)
        if name not in bound and name not in ("inputs", "outputs"):
            raise parser.error(f"probe references unbound variable ${name}", tok)


def parse(text: str, filename: str = "<input>") -> WorkflowDocument:
    return Parser(text, filename).document()


def parse_file(path) -> WorkflowDocument:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), str(path))
