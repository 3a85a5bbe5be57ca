"""Real execution on this host.

Each attempt runs ``/bin/sh -c COMMAND`` in its sandbox directory, in its
own process group so a kill takes its children along.  A waiter thread
per attempt reaps the process with ``os.wait4`` (which also yields the
peak resident set size) and posts the completion to the clock; all
decisions stay with the coordinator thread.
"""

from __future__ import annotations

import heapq
import itertools
import os
import queue
import shutil
import signal
import subprocess
import threading
import time
from decimal import Decimal

import psutil

from ..model import ClusterSpec, NodeDescriptor
from .coordinator import Completion

_US = Decimal("0.000001")


class RealClock:
    """Wall-clock timers plus a thread-safe inbox, with the interface of :class:`SimClock`."""

    def __init__(self):
        self._t0 = time.monotonic()
        self._heap: list[tuple[Decimal, int, object]] = []
        self._seq = itertools.count()
        self._cancelled: set[int] = set()
        self._inbox: queue.Queue = queue.Queue()

    def now(self) -> Decimal:
        return Decimal(time.monotonic() - self._t0).quantize(_US)

    def schedule(self, at, item) -> int:
        seq = next(self._seq)
        heapq.heappush(self._heap, (Decimal(at), seq, item))
        return seq

    def after(self, delay, item) -> int:
        return self.schedule(self.now() + Decimal(delay), item)

    def cancel(self, handle: int | None) -> None:
        if handle is not None:
            self._cancelled.add(handle)

    def post(self, item) -> None:
        """Deliver ``item`` from any thread."""
        self._inbox.put(item)

    def _drop_cancelled(self):
        while self._heap and self._heap[0][1] in self._cancelled:
            self._cancelled.discard(heapq.heappop(self._heap)[1])

    def _due(self, now: Decimal) -> list:
        out = []
        self._drop_cancelled()
        while self._heap and self._heap[0][0] <= now:
            out.append(heapq.heappop(self._heap)[2])
            self._drop_cancelled()
        return out

    def _drain(self) -> list:
        out = []
        while True:
            try:
                out.append(self._inbox.get_nowait())
            except queue.Empty:
                return out

    def pop_batch(self, block: bool = True) -> tuple[Decimal, list] | None:
        """Everything due now; waits for the next timer or posted item.

        Returns None when nothing is scheduled and ``block`` is false.
        """
        while True:
            now = self.now()
            items = self._drain() + self._due(now)
            if items:
                return now, items
            self._drop_cancelled()
            if not self._heap and not block:
                return None
            timeout = float(self._heap[0][0] - now) if self._heap else None
            try:
                first = self._inbox.get(timeout=timeout)
            except queue.Empty:
                continue
            now = self.now()
            return now, [first] + self._drain() + self._due(now)

    def items(self) -> list:
        return [item for _, seq, item in sorted(self._heap) if seq not in self._cancelled]

    def peek_time(self) -> Decimal | None:
        self._drop_cancelled()
        return self._heap[0][0] if self._heap else None


def local_cluster(node_id: str = "local", root: str | None = None) -> ClusterSpec:
    """One node describing this host."""
    mem = psutil.virtual_memory().total
    disk = shutil.disk_usage(root or os.getcwd()).free
    node = NodeDescriptor(node_id, memory_bytes=mem, cpu_cores=os.cpu_count() or 1, disk_free_bytes=disk,
                          root=root)
    return ClusterSpec((node,))


def _tree_rss(pid: int) -> int | None:
    try:
        proc = psutil.Process(pid)
        procs = [proc] + proc.children(recursive=True)
    except psutil.Error:
        return None
    total = 0
    for p in procs:
        try:
            total += p.memory_info().rss
        except psutil.Error:
            pass
    return total


class LocalBackend:
    mode = "real"
    assume_installed = False

    def __init__(self, clock: RealClock, workspace, cluster: ClusterSpec):
        self.clock = clock
        self.workspace = workspace
        self.cluster = cluster
        self._threads: list[threading.Thread] = []
        self._procs: dict[tuple[str, int], subprocess.Popen] = {}

    def licenses(self) -> frozenset[str]:
        return self.cluster.licenses

    def node_up(self, node: str) -> bool:
        return True

    def watches_nodes(self) -> bool:
        return False

    def start(self, coordinator) -> None:
        pass

    def launch(self, run, task_def, env: dict[str, str]) -> None:
        sb = run.sandbox
        if not task_def.command:
            self.clock.post(Completion(run.key, 0, "", 0))
            return
        full_env = dict(os.environ)
        full_env.update(env)
        with open(sb.contract_dir / "stdout", "wb") as out, open(sb.contract_dir / "stderr", "wb") as err:
            proc = subprocess.Popen(["/bin/sh", "-c", task_def.command], cwd=sb.path, env=full_env,
                                    stdin=subprocess.DEVNULL, stdout=out, stderr=err, start_new_session=True)
        self._procs[run.key] = proc
        run.handle = proc
        th = threading.Thread(target=self._wait, args=(run.key, proc, sb), daemon=True)
        self._threads.append(th)
        th.start()

    def _wait(self, key, proc: subprocess.Popen, sb) -> None:
        _, status, usage = os.wait4(proc.pid, 0)
        code = os.waitstatus_to_exitcode(status)
        proc.returncode = code  # keep Popen from reaping a second time
        if code < 0:
            code = 128 - code  # killed by a signal, shell convention
        try:
            stderr = (sb.contract_dir / "stderr").read_text(errors="replace")
        except OSError:
            stderr = ""
        self.clock.post(Completion(key, code, stderr, usage.ru_maxrss * 1024))

    def finalize(self, run, completion) -> None:
        self._procs.pop(run.key, None)

    def kill(self, run) -> None:
        proc = self._procs.pop(run.key, None)
        if proc is not None and proc.returncode is None:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass

    def sample(self, run) -> dict:
        proc = self._procs.get(run.key)
        if proc is None or proc.returncode is not None:
            return {}
        return {"peak_memory_bytes": _tree_rss(proc.pid)}

    def finish(self) -> None:
        for key in list(self._procs):
            proc = self._procs.pop(key)
            if proc.returncode is None:
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except ProcessLookupError:
                    pass
        for th in self._threads:
            th.join(timeout=10)
