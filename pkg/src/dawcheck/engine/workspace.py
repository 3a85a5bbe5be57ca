"""Per-attempt sandboxes and the store of produced files.

Layout of one attempt (real mode, and sim mode once materialized)::

    <root>/<task>/attempt-<n>/
        inputs/<label>      staged copies of the task's inputs
        outputs/<label>     what the task wrote
        .contract/          stdout, stderr, probe transcripts, check log

The command runs with the attempt directory as working directory.
Outputs are copied to ``<root>/store/<label>`` once the task's promises
hold; consumers stage their inputs from there.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..probes import FORMATS, ProbeFailed, digest, probe_file
from ..properties import Direction

CONTRACT_DIR = ".contract"
MANIFEST = "manifest.json"  # saved state of a simulated workspace


@dataclass
class Sandbox:
    task: str
    attempt: int
    path: Path | None  # None for a purely virtual sandbox
    rel: str

    def dir_for(self, direction: Direction) -> Path:
        return self.path / ("inputs" if direction is Direction.IN else "outputs")

    @property
    def contract_dir(self) -> Path:
        return self.path / CONTRACT_DIR


class DiskWorkspace:
    """Real files under ``root``."""

    virtual = False

    def __init__(self, root: str | os.PathLike, input_paths: dict[str, str] | None = None):
        self.root = Path(root)
        self.input_paths = dict(input_paths or {})
        self.store = self.root / "store"
        self.store.mkdir(parents=True, exist_ok=True)

    def sandbox(self, task: str, attempt: int) -> Sandbox:
        rel = f"{task}/attempt-{attempt}"
        return Sandbox(task, attempt, self.root / rel, rel)

    def prepare(self, task: str, attempt: int) -> Sandbox:
        sb = self.sandbox(task, attempt)
        if sb.path.exists():
            shutil.rmtree(sb.path)
        for sub in ("inputs", "outputs", CONTRACT_DIR):
            (sb.path / sub).mkdir(parents=True)
        return sb

    def source(self, label: str) -> Path | None:
        p = self.store / label
        if p.exists():
            return p
        if label in self.input_paths and os.path.exists(self.input_paths[label]):
            return Path(self.input_paths[label])
        return None

    def stage(self, sb: Sandbox, label: str) -> None:
        src = self.source(label)
        if src is None:
            return
        dst = sb.dir_for(Direction.IN) / label
        if src.is_dir():
            shutil.copytree(src, dst)
        else:
            shutil.copyfile(src, dst)

    def path(self, sb: Sandbox, direction: Direction, label: str) -> Path:
        return sb.dir_for(direction) / label

    def probe(self, sb: Sandbox, direction: Direction, label: str, name: str, arg: str | None):
        return probe_file(self.path(sb, direction, label), name, arg)

    def digest(self, sb: Sandbox, direction: Direction, label: str) -> str | None:
        p = self.path(sb, direction, label)
        return digest(p) if p.exists() else None

    def size(self, sb: Sandbox, direction: Direction, label: str) -> int | None:
        p = self.path(sb, direction, label)
        return probe_file(p, "file_size_bytes") if p.exists() else None

    def collect(self, sb: Sandbox, label: str) -> None:
        src = self.path(sb, Direction.OUT, label)
        dst = self.store / label
        if dst.is_dir():
            shutil.rmtree(dst)
        if src.is_dir():
            shutil.copytree(src, dst)
        elif src.exists():
            shutil.copyfile(src, dst)

    def materialize(self, sb: Sandbox) -> Path:
        return sb.path

    def has(self, sb: Sandbox) -> bool:
        return sb.path.is_dir()

    def store_digest(self, label: str) -> str | None:
        p = self.store / label
        return digest(p) if p.exists() else None

    def release(self, path: Path) -> None:
        pass

    def result_path(self, label: str) -> str | None:
        p = self.store / label
        return str(p) if p.exists() else None

    def write_json(self, sb: Sandbox, name: str, data) -> None:
        with open(sb.contract_dir / name, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)


@dataclass(frozen=True)
class VFile:
    size: int
    content: bytes | None = None
    corrupt: bool = False
    origin: str = ""

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        if self.content is not None:
            h.update(self.content)
        else:
            h.update(f"virtual:{self.origin}:{self.size}".encode())
        if self.corrupt:
            h.update(b"\0corrupt")
        return h.hexdigest()

    def corrupted(self) -> "VFile":
        return replace(self, corrupt=True)

    def data(self) -> bytes | None:
        if self.corrupt:
            return b"\x00corrupted\n" + (self.content or b"")
        return self.content


@dataclass
class VSandbox:
    files: dict[tuple[str, str], VFile] = field(default_factory=dict)  # (direction, label) -> file


class VirtualWorkspace:
    """In-memory files for simulation; written to disk only when a shell probe needs them."""

    virtual = True
    MAX_INLINE = 1 << 20

    def __init__(self, input_paths: dict[str, str] | None = None, root: str | os.PathLike | None = None):
        self.input_paths = dict(input_paths or {})
        self.root = Path(root) if root else None
        self.store: dict[str, VFile] = {}
        self.boxes: dict[tuple[str, int], VSandbox] = {}
        self._corrupt_pending: set[str] = set()

    def sandbox(self, task: str, attempt: int) -> Sandbox:
        return Sandbox(task, attempt, None, f"{task}/attempt-{attempt}")

    def prepare(self, task: str, attempt: int) -> Sandbox:
        self.boxes[(task, attempt)] = VSandbox()
        return self.sandbox(task, attempt)

    def _box(self, sb: Sandbox) -> VSandbox:
        return self.boxes.setdefault((sb.task, sb.attempt), VSandbox())

    def _from_disk(self, label: str) -> VFile | None:
        path = self.input_paths.get(label)
        if path is None or not os.path.isfile(path):
            return None
        size = os.path.getsize(path)
        if size <= self.MAX_INLINE:
            with open(path, "rb") as fh:
                return VFile(size, fh.read(), origin=f"input:{label}")
        return VFile(size, None, origin=f"input:{label}:{digest(path)}")

    def stage(self, sb: Sandbox, label: str) -> None:
        f = self.store.get(label) or self._from_disk(label)
        if f is not None:
            self._box(sb).files[("in", label)] = f

    def write_output(self, sb: Sandbox, label: str, f: VFile) -> None:
        if label in self._corrupt_pending:
            f = f.corrupted()
        self._box(sb).files[("out", label)] = f

    def corrupt(self, label: str) -> list[str]:
        """Corrupt every copy of ``label``; returns where it was found. Later productions are corrupted too."""
        hits = []
        self._corrupt_pending.add(label)
        if label in self.store:
            self.store[label] = self.store[label].corrupted()
            hits.append("store")
        for (task, n), box in sorted(self.boxes.items()):
            for key in list(box.files):
                if key[1] == label:
                    box.files[key] = box.files[key].corrupted()
                    hits.append(f"{task}/attempt-{n}/{key[0]}")
        return hits

    def file(self, sb: Sandbox, direction: Direction, label: str) -> VFile | None:
        return self._box(sb).files.get((direction.value, label))

    def probe(self, sb: Sandbox, direction: Direction, label: str, name: str, arg: str | None):
        f = self.file(sb, direction, label)
        if name == "file_exists":
            return f is not None
        if name == "folder_exists":
            return False
        if f is None:
            raise ProbeFailed(f"{direction.value}put {label} does not exist")
        if name == "file_size_bytes":
            return f.size
        if name == "checksum":
            return f.digest
        data = f.data()
        if name == "line_count":
            if data is None:
                raise ProbeFailed(f"{label}: simulated file has no content to count lines in")
            return data.count(b"\n") + (1 if data and not data.endswith(b"\n") else 0)
        if name == "format_ok":
            check = FORMATS.get(arg or "")
            if check is None:
                raise ProbeFailed(f"unknown file format {arg!r}")
            if f.corrupt:
                return False
            if data is None:
                return True
            with tempfile.TemporaryDirectory() as tmp:
                p = Path(tmp) / label
                p.write_bytes(data)
                return check(p)
        raise ProbeFailed(f"no file probe for {name!r}")

    def digest(self, sb: Sandbox, direction: Direction, label: str) -> str | None:
        f = self.file(sb, direction, label)
        return f.digest if f else None

    def size(self, sb: Sandbox, direction: Direction, label: str) -> int | None:
        f = self.file(sb, direction, label)
        return f.size if f else None

    def collect(self, sb: Sandbox, label: str) -> None:
        f = self.file(sb, Direction.OUT, label)
        if f is not None:
            self.store[label] = f

    def materialize(self, sb: Sandbox) -> Path:
        """Write the sandbox to a scratch directory (sizes without content become sparse files)."""
        tmp = Path(tempfile.mkdtemp(prefix="dawcheck-sim-"))
        for sub in ("inputs", "outputs", CONTRACT_DIR):
            (tmp / sub).mkdir()
        for (direction, label), f in self._box(sb).files.items():
            p = tmp / ("inputs" if direction == "in" else "outputs") / label
            data = f.data()
            if data is not None:
                p.write_bytes(data)
            else:
                with open(p, "wb") as fh:
                    fh.truncate(f.size)
        return tmp

    def release(self, path: Path) -> None:
        shutil.rmtree(path, ignore_errors=True)

    def result_path(self, label: str) -> str | None:
        return f"sim://{label}" if label in self.store else None

    def write_json(self, sb: Sandbox, name: str, data) -> None:
        if self.root is None:
            return
        d = self.root / sb.rel / CONTRACT_DIR
        d.mkdir(parents=True, exist_ok=True)
        with open(d / name, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)

    def has(self, sb: Sandbox) -> bool:
        return (sb.task, sb.attempt) in self.boxes

    def store_digest(self, label: str) -> str | None:
        f = self.store.get(label)
        return f.digest if f else None

    def manifest(self) -> dict:
        def entry(f: VFile):
            out = {"size": f.size, "digest": f.digest, "corrupt": f.corrupt, "origin": f.origin}
            if f.content is not None:
                out["content_b64"] = base64.b64encode(f.content).decode("ascii")
            return out
        return {
            "store": {k: entry(v) for k, v in sorted(self.store.items())},
            "sandboxes": {f"{t}/attempt-{n}": {f"{d}/{lbl}": entry(f) for (d, lbl), f in sorted(b.files.items())}
                          for (t, n), b in sorted(self.boxes.items())},
        }

    def save(self) -> None:
        if self.root is None:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / MANIFEST, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, root: str | os.PathLike, input_paths: dict[str, str] | None = None) -> "VirtualWorkspace":
        """Rebuild a saved workspace from ``<root>/manifest.json``."""
        ws = cls(input_paths, root)
        with open(Path(root) / MANIFEST) as fh:
            data = json.load(fh)

        def vfile(e: dict) -> VFile:
            content = base64.b64decode(e["content_b64"]) if "content_b64" in e else None
            return VFile(e["size"], content, e.get("corrupt", False), e.get("origin", ""))

        ws.store = {k: vfile(v) for k, v in data.get("store", {}).items()}
        for rel, files in data.get("sandboxes", {}).items():
            task, _, n = rel.rpartition("/attempt-")
            box = VSandbox()
            for key, e in files.items():
                direction, _, label = key.partition("/")
                box.files[(direction, label)] = vfile(e)
            ws.boxes[(task, int(n))] = box
        return ws

    def delete(self, sb: Sandbox, direction: Direction, label: str) -> None:
        self._box(sb).files.pop((direction.value, label), None)

    def tamper(self, sb: Sandbox, direction: Direction, label: str, content: bytes) -> None:
        self._box(sb).files[(direction.value, label)] = VFile(len(content), content, origin="tampered")
