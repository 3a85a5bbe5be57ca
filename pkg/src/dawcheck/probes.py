"""Filesystem probes behind the file-related properties.

Digests are SHA-256 over file contents; for a directory, over the sorted
relative paths and contents of every file below it.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from pathlib import Path
from typing import Callable

DIGEST_ALGORITHM = "sha256"

_FASTA_LINE = re.compile(r"^[>ACTGUN;]")


def _fasta_ok(path: Path) -> bool:
    with open(path, encoding="utf-8", errors="replace") as fh:
        return all(_FASTA_LINE.match(line) for line in fh.read().splitlines())


def _json_ok(path: Path) -> bool:
    try:
        with open(path, encoding="utf-8") as fh:
            json.load(fh)
    except (ValueError, UnicodeDecodeError):
        return False
    return True


def _text_ok(path: Path) -> bool:
    try:
        path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        return False
    return True


FORMATS: dict[str, Callable[[Path], bool]] = {
    "fasta": _fasta_ok,
    "json": _json_ok,
    "text": _text_ok,
}


def register_format(name: str, check: Callable[[Path], bool]) -> None:
    FORMATS[name] = check


def digest(path: str | os.PathLike) -> str:
    p = Path(path)
    h = hashlib.sha256()
    if p.is_dir():
        for f in sorted(q for q in p.rglob("*") if q.is_file()):
            h.update(str(f.relative_to(p)).encode())
            h.update(b"\0")
            h.update(f.read_bytes())
            h.update(b"\0")
    else:
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                h.update(chunk)
    return h.hexdigest()


class ProbeFailed(Exception):
    pass


def probe_file(path: str | os.PathLike, name: str, arg: str | None = None):
    """Value of a file property for the file or folder at ``path``."""
    p = Path(path)
    if name == "file_exists":
        return p.exists() and os.access(p, os.R_OK)  # a label may carry a folder of files
    if name == "folder_exists":
        return p.is_dir() and os.access(p, os.R_OK)
    if not p.exists():
        raise ProbeFailed(f"{p} does not exist")
    if name == "file_size_bytes":
        if p.is_dir():
            return sum(f.stat().st_size for f in p.rglob("*") if f.is_file())
        return p.stat().st_size
    if name == "line_count":
        with open(p, "rb") as fh:
            return sum(1 for _ in fh)
    if name == "checksum":
        return digest(p)
    if name == "format_ok":
        check = FORMATS.get(arg or "")
        if check is None:
            raise ProbeFailed(f"unknown file format {arg!r}")
        return check(p)
    raise ProbeFailed(f"no file probe for {name!r}")
