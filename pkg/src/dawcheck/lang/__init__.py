"""Workflow description language: parse, print, lower and lint ``.vcw`` files."""

from .desugar import CompiledWorkflow, DesugarError, compile_file, compile_text, desugar
from .lint import LintFinding, lint
from .parser import ParseError, parse, parse_file
from .serialize import serialize

__all__ = [
    "CompiledWorkflow", "DesugarError", "LintFinding", "ParseError",
    "compile_file", "compile_text", "desugar", "lint", "parse", "parse_file", "serialize",
]
