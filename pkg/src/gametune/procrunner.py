"""Runner that co-locates real local processes and reads their progress files.

Progress protocol: each workload overwrites a UTF-8 text file holding a single
line, either a decimal work fraction or the token ``done``. Writers should
replace the file atomically (write a temp file, then rename). The runner polls
every ``poll_interval`` seconds; a process that exits with status 0 counts as
done, any other exit status before completion marks the player failed.
"""
from __future__ import annotations

import logging
import os
import shlex
import shutil
import signal
import string
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .space import Configuration, SearchSpace

log = logging.getLogger(__name__)

RESERVED = ("python", "workdir", "progress", "game", "player")

GROUP_REAP_WAIT = 5.0


def _fields(template: str) -> list[str]:
    out = []
    for _, name, _, _ in string.Formatter().parse(template):
        if name is not None:
            if name == "" or not name.isidentifier():
                raise ConfigError("workload", f"bad placeholder {{{name}}} in {template!r}")
            out.append(name)
    return out


@dataclass(frozen=True)
class WorkloadTemplate:
    """How to launch one player.

    ``command`` is an argv list (or a shell-style string, split with shlex)
    whose ``{name}`` placeholders are filled from the configuration's parameter
    values plus the reserved names ``python``, ``workdir``, ``progress``,
    ``game`` and ``player``. The progress file value divided by ``total_work``
    is the work fraction.
    """

    command: tuple[str, ...]
    workdir: str = "{game}/{player}"
    progress_file: str = "{workdir}/progress"
    total_work: float = 1.0
    timeout: float = 300.0
    grace: float = 5.0

    def __post_init__(self):
        cmd = self.command
        if isinstance(cmd, str):
            cmd = tuple(shlex.split(cmd))
        object.__setattr__(self, "command", tuple(str(c) for c in cmd))
        if not self.command:
            raise ConfigError("workload.command", "command is empty")
        if self.total_work <= 0:
            raise ConfigError("workload.total_work", "must be positive")
        if self.timeout <= 0 or self.grace <= 0:
            raise ConfigError("workload.timeout", "timeout and grace must be positive")

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkloadTemplate":
        if "command" not in d:
            raise ConfigError("workload.command", "missing required field")
        known = {"command", "workdir", "progress_file", "total_work", "timeout", "grace"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"workload.{sorted(extra)[0]}", "unknown field")
        return cls(**dict(d))

    def to_dict(self) -> dict:
        return {"command": list(self.command), "workdir": self.workdir,
                "progress_file": self.progress_file, "total_work": self.total_work,
                "timeout": self.timeout, "grace": self.grace}

    def validate(self, space: SearchSpace) -> None:
        """Every placeholder must resolve, and no parameter may appear twice."""
        names = set(space.names)
        clash = names & set(RESERVED)
        if clash:
            raise ConfigError("space", f"parameter name {sorted(clash)[0]!r} is reserved")
        seen: list[str] = []
        for part in self.command:
            seen.extend(_fields(part))
        for f in seen:
            if f not in names and f not in RESERVED:
                raise ConfigError("workload.command", f"unresolved placeholder {{{f}}}")
        for name in names:
            if seen.count(name) > 1:
                raise ConfigError("workload.command", f"parameter {name!r} appears more than once")
        for label, tpl, allowed in (("workload.workdir", self.workdir, {"game", "player"}),
                                    ("workload.progress_file", self.progress_file,
                                     {"game", "player", "workdir"})):
            for f in _fields(tpl):
                if f not in allowed:
                    raise ConfigError(label, f"unresolved placeholder {{{f}}}")

    def instantiate(self, space: SearchSpace, config: Configuration, root: Path,
                    game: str, player: int) -> tuple[list[str], Path, Path]:
        """Return (argv, working directory, progress file) for one player."""
        safe_game = game.replace("/", "_")
        workdir = root / self.workdir.format(game=safe_game, player=player)
        progress = Path(self.progress_file.format(game=safe_game, player=player,
                                                  workdir=str(workdir)))
        if not progress.is_absolute():
            progress = workdir / progress
        values = {k: v for k, v in config.values(space).items()}
        values.update(python=sys.executable, workdir=str(workdir), progress=str(progress),
                      game=safe_game, player=player)
        argv = [part.format(**values) for part in self.command]
        return argv, workdir, progress


def parse_progress(text: str) -> float | None:
    """Parse one progress record; None when malformed."""
    s = text.strip()
    if s == "done":
        return 1.0
    try:
        v = float(s)
    except ValueError:
        return None
    if not np.isfinite(v) or v < 0:
        return None
    return v


@dataclass
class _Slot:
    argv: list[str]
    progress: Path
    proc: subprocess.Popen | None = None
    pgid: int | None = None
    best: float = 0.0
    seen_file: bool = False
    done: bool = False
    failed: bool = False
    returncode: int | None = None


class ProcSession:
    """One live game: a process group per player, polled on a fixed wall-clock cadence."""

    def __init__(self, slots: list[_Slot], workdirs: list[Path], template: WorkloadTemplate,
                 poll_interval: float, cleanup: Path | None = None):
        self.slots = slots
        self.template = template
        self.poll_interval = poll_interval
        self._cleanup = cleanup
        self.failed = np.zeros(len(slots), dtype=bool)
        self.k = 0
        for slot, wd in zip(slots, workdirs):
            wd.mkdir(parents=True, exist_ok=True)
            slot.progress.parent.mkdir(parents=True, exist_ok=True)
        self.t0 = time.monotonic()
        for i, slot in enumerate(slots):
            try:
                slot.proc = subprocess.Popen(
                    slot.argv, cwd=workdirs[i], stdin=subprocess.DEVNULL,
                    stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
                    start_new_session=True)
                slot.pgid = slot.proc.pid
            except OSError as exc:
                log.warning("player %d failed to start: %s", i, exc)
                slot.failed = True
                self.failed[i] = True

    @property
    def pids(self) -> list[int]:
        return [s.proc.pid for s in self.slots if s.proc is not None]

    def read_progress(self, i: int) -> float:
        slot = self.slots[i]
        if slot.done:
            return 1.0
        try:
            text = slot.progress.read_text(encoding="utf-8")
        except FileNotFoundError:
            return slot.best
        except OSError as exc:
            log.warning("player %d: cannot read %s: %s", i, slot.progress, exc)
            return slot.best
        slot.seen_file = True
        value = parse_progress(text)
        if value is None:
            log.warning("player %d: malformed progress %r, keeping %.4f", i, text[:40], slot.best)
            return slot.best
        value = min(1.0, value / self.template.total_work)
        slot.best = max(slot.best, value)
        if slot.best >= 1.0:
            slot.done = True
        return slot.best

    def _check(self, i: int, elapsed: float) -> None:
        slot = self.slots[i]
        if slot.failed or slot.done or slot.proc is None:
            return
        code = slot.proc.poll()
        if code is not None:
            slot.returncode = code
            self.read_progress(i)
            if code == 0:
                slot.done = True
                slot.best = 1.0
            elif not slot.done:
                log.warning("player %d exited with status %d", i, code)
                slot.failed = True
        elif not slot.seen_file and elapsed > self.template.grace:
            log.warning("player %d wrote no progress within %.1fs", i, self.template.grace)
            slot.failed = True
            self._kill(slot)
        elif elapsed > self.template.timeout:
            log.warning("player %d timed out after %.1fs", i, self.template.timeout)
            slot.failed = True
            self._kill(slot)
        self.failed[i] = slot.failed

    def poll(self) -> tuple[float, np.ndarray]:
        self.k += 1
        target = self.t0 + self.k * self.poll_interval
        now = time.monotonic()
        if target > now:
            time.sleep(target - now)
        elapsed = time.monotonic() - self.t0
        fr = np.zeros(len(self.slots))
        for i, slot in enumerate(self.slots):
            if not slot.failed:
                fr[i] = self.read_progress(i)
            self._check(i, elapsed)
            fr[i] = 0.0 if self.slots[i].failed else self.slots[i].best
        return elapsed, fr

    def _kill(self, slot: _Slot) -> None:
        proc = slot.proc
        if proc is None:
            return
        for sig, wait in ((signal.SIGTERM, 1.0), (signal.SIGKILL, 5.0)):
            try:
                os.killpg(slot.pgid, sig)
            except ProcessLookupError:
                pass
            try:
                proc.wait(timeout=wait)
                break
            except subprocess.TimeoutExpired:
                continue
        # grandchildren may outlive the leader
        try:
            os.killpg(slot.pgid, signal.SIGKILL)
        except ProcessLookupError:
            return
        # killed grandchildren linger until their new parent reaps them
        deadline = time.monotonic() + GROUP_REAP_WAIT
        while time.monotonic() < deadline:
            try:
                os.killpg(slot.pgid, 0)
            except ProcessLookupError:
                return
            time.sleep(0.01)
        log.warning("process group %d still present after SIGKILL", slot.pgid)

    def close(self) -> None:
        for slot in self.slots:
            self._kill(slot)
        if self._cleanup is not None:
            shutil.rmtree(self._cleanup, ignore_errors=True)
            self._cleanup = None


def read_progress(session: ProcSession, player: int) -> float:
    return session.read_progress(player)


class ProcRunner:
    """Starts one process per player from a workload template.

    ``slots`` caps the players per game (defaults to the CPU count). Work
    directories live under ``root``; without one, a temporary directory per
    game is created and removed on close.
    """

    def __init__(self, space: SearchSpace, template: WorkloadTemplate, slots: int | None = None,
                 poll_interval: float = 0.25, root: str | os.PathLike | None = None):
        template.validate(space)
        self.space = space
        self.template = template
        self.capacity = slots if slots is not None else (os.cpu_count() or 1)
        if self.capacity < 1:
            raise ConfigError("runner.slots", "must be at least 1")
        if poll_interval <= 0:
            raise ConfigError("runner.poll_interval", "must be positive")
        self.poll_interval = poll_interval
        self.root = Path(root) if root is not None else None
        # one live process game at a time
        self.max_concurrent_games = 1

    def start(self, configs: Sequence[Configuration], game_id: str) -> ProcSession:
        if self.root is None:
            root = Path(tempfile.mkdtemp(prefix="gametune-"))
            cleanup = root
        else:
            root, cleanup = self.root, None
        slots, dirs = [], []
        for i, cfg in enumerate(configs):
            argv, wd, progress = self.template.instantiate(self.space, cfg, root, game_id, i)
            if progress.exists():
                progress.unlink()
            slots.append(_Slot(argv, progress))
            dirs.append(wd)
        return ProcSession(slots, dirs, self.template, self.poll_interval, cleanup)


def launch_game(runner: ProcRunner, configs: Sequence[Configuration], game_id: str) -> ProcSession:
    return runner.start(configs, game_id)
