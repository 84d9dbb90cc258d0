"""Live run lifecycle: one engine per run, stepped by a worker thread at the
requested playback rate, with pause/resume/abort and fault injection applied
at tick boundaries. Event readers (websockets) tail a shared buffer."""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Optional

from ..scenario import FaultEvent, load_scenario
from ..sim import SimEngine, build_run_artifacts, trace_lines


class RunError(RuntimeError):
    def __init__(self, message: str, status_code: int = 409):
        super().__init__(message)
        self.status_code = status_code


class LiveRun:
    def __init__(self, run_id: str, mission_id: str, scenario_doc: dict,
                 playback_rate: float, out_dir: Path):
        self.run_id = run_id
        self.mission_id = mission_id
        self.seed = scenario_doc["seed"]
        self.playback_rate = playback_rate
        self.out_dir = out_dir
        self.status = "Planned"
        self._engine = SimEngine(load_scenario(scenario_doc))
        self._events: list[dict] = []
        self._lock = threading.Condition()
        self._commands: list[FaultEvent] = []
        self._thread: Optional[threading.Thread] = None

    @property
    def tick(self) -> int:
        return self._engine.tick

    def start(self) -> None:
        with self._lock:
            if self.status != "Planned":
                raise RunError(f"run is {self.status}, cannot start")
            self.status = "Running"
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _apply_commands_locked(self) -> None:
        for fault in self._commands:
            self._engine.add_fault(fault)
        self._commands = []

    def _loop(self) -> None:
        interval = 1.0 / self.playback_rate if self.playback_rate > 0 else 0.0
        while True:
            with self._lock:
                self._apply_commands_locked()
                if self.status == "Aborted" or self._engine.done:
                    break
                if self.status == "Paused":
                    self._drain_locked()
                    self._lock.wait(timeout=0.05)
                    continue
                self._engine.step_tick()
                self._drain_locked()
                if self._engine.done:
                    self.status = "Done"
                    self._lock.notify_all()
                    break
            if interval:
                time.sleep(interval)
        with self._lock:
            self._drain_locked()
            self._finalize_locked()
            self._lock.notify_all()

    def _drain_locked(self) -> None:
        fresh = self._engine.drain_events()
        if fresh:
            self._events.extend(fresh)
            self._lock.notify_all()

    def _finalize_locked(self) -> None:
        report = self._engine.build_report()
        build_run_artifacts(
            self.out_dir, report, trace_lines(self._engine.trace), self._engine
        )

    # -- control -----------------------------------------------------------

    def command(self, kind: str) -> None:
        """Status transition, applied at the next tick boundary: the worker
        holds the same lock while stepping, so a transition never lands
        mid-tick."""
        with self._lock:
            if self.status in ("Done", "Aborted"):
                raise RunError(f"run is {self.status}; {kind} is not a legal transition")
            if kind == "pause":
                if self.status != "Running":
                    raise RunError(f"cannot pause a {self.status} run")
                self.status = "Paused"
            elif kind == "resume":
                if self.status != "Paused":
                    raise RunError(f"cannot resume a {self.status} run")
                self.status = "Running"
            elif kind == "abort":
                self._engine.abort()
                self.status = "Aborted"
            else:
                raise RunError(f"unknown command {kind}", status_code=400)
            self._lock.notify_all()

    def inject_fault(self, fault: FaultEvent) -> None:
        with self._lock:
            if self.status in ("Done", "Aborted"):
                raise RunError(f"run is {self.status}; cannot inject faults")
            self._commands.append(fault)
            self._lock.notify_all()

    def wait_done(self, timeout: float = 60.0) -> bool:
        deadline = time.monotonic() + timeout
        with self._lock:
            while self.status not in ("Done", "Aborted"):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._lock.wait(timeout=min(0.1, remaining))
        if self._thread is not None:
            self._thread.join(timeout=max(0.0, deadline - time.monotonic()))
        return True

    # -- event stream --------------------------------------------------------

    def events_since(self, index: int, timeout: float = 0.25) -> tuple[list[dict], int, bool]:
        """Events from buffer position ``index``; blocks briefly for fresh
        ones. Returns (batch, next_index, terminal_reached)."""
        with self._lock:
            if index >= len(self._events) and self.status not in ("Done", "Aborted"):
                self._lock.wait(timeout=timeout)
            batch = self._events[index:]
            next_index = len(self._events)
            terminal = self.status in ("Done", "Aborted") and next_index == len(self._events)
        return batch, next_index, terminal and not batch

    def handle(self) -> dict:
        with self._lock:
            return {
                "run_id": self.run_id,
                "mission_id": self.mission_id,
                "seed": self.seed,
                "playback_rate": self.playback_rate,
                "status": self.status,
                "tick": self._engine.tick,
            }

    def artifact(self, name: str) -> bytes:
        with self._lock:
            if self.status not in ("Done", "Aborted"):
                raise RunError("run has not finished; artifact not available yet")
        path = self.out_dir / name
        if not path.exists():
            raise RunError(f"artifact {name} missing", status_code=404)
        return path.read_bytes()


class RunManager:
    def __init__(self, runs_dir: Path):
        self.runs_dir = runs_dir
        self._runs: dict[str, LiveRun] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def create(self, mission_id: str, scenario_doc: dict, playback_rate: float) -> LiveRun:
        with self._lock:
            self._counter += 1
            run_id = f"run-{self._counter:04d}"
            run = LiveRun(
                run_id, mission_id, scenario_doc, playback_rate, self.runs_dir / run_id
            )
            self._runs[run_id] = run
        run.start()
        return run

    def get(self, run_id: str) -> LiveRun:
        run = self._runs.get(run_id)
        if run is None:
            raise RunError(f"unknown run {run_id}", status_code=404)
        return run
