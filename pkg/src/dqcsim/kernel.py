"""Deterministic discrete-event kernel.

Time is a float number of nanoseconds. Events are ordered by
``(fire_time, seq)`` where ``seq`` is a global insertion counter, so events
scheduled for the same instant fire in FIFO order.

Tasks are plain generators. A task yields a :class:`Signal` (or the result
of :meth:`Kernel.timeout`) and is resumed with the signal's value once it
fires. Nothing preempts a task.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Generator, Optional

import numpy as np


class SimulationError(RuntimeError):
    pass


class DeadlockError(SimulationError):
    """Raised when tasks remain blocked after the event queue drains."""

    def __init__(self, blocked: list[tuple[str, str]]):
        self.blocked = blocked
        lines = [f"  {name}: waiting on {what}" for name, what in blocked]
        super().__init__("deadlock, blocked tasks:\n" + "\n".join(lines))


@dataclass(order=True)
class Event:
    fire_time: float
    seq: int
    handler: Callable[[Any], None] = field(compare=False)
    payload: Any = field(compare=False, default=None)
    label: str = field(compare=False, default="")


class TaskState(Enum):
    RUNNABLE = "runnable"
    BLOCKED = "blocked"
    FINISHED = "finished"


class Signal:
    """One-shot condition a task can block on."""

    def __init__(self, kernel: "Kernel", description: str = "signal"):
        self.kernel = kernel
        self.description = description
        self.fired = False
        self.value: Any = None
        self._waiters: list[Task] = []

    def fire(self, value: Any = None) -> None:
        if self.fired:
            raise SimulationError(f"signal {self.description!r} fired twice")
        self.fired = True
        self.value = value
        waiters, self._waiters = self._waiters, []
        for task in waiters:
            self.kernel._wake(task, value)

    def __repr__(self) -> str:
        return f"Signal({self.description!r}, fired={self.fired})"


class Task:
    def __init__(self, kernel: "Kernel", name: str, gen: Generator):
        self.kernel = kernel
        self.name = name
        self._gen = gen
        self.state = TaskState.RUNNABLE
        self.waiting_on: Optional[Signal] = None
        self.result: Any = None
        self.done = Signal(kernel, f"task {name} finished")

    def _step(self, value: Any) -> None:
        if self.state is TaskState.FINISHED:
            raise SimulationError(f"finished task {self.name} was resumed")
        self.state = TaskState.RUNNABLE
        self.waiting_on = None
        try:
            sig = self._gen.send(value)
        except StopIteration as stop:
            self.state = TaskState.FINISHED
            self.result = stop.value
            self.done.fire(stop.value)
            return
        if not isinstance(sig, Signal):
            raise SimulationError(
                f"task {self.name} yielded {sig!r}; tasks must yield Signals"
            )
        if sig.fired:
            self.kernel._wake(self, sig.value)
        else:
            self.state = TaskState.BLOCKED
            self.waiting_on = sig
            sig._waiters.append(self)

    def __repr__(self) -> str:
        return f"Task({self.name!r}, {self.state.value})"


class Kernel:
    """Event queue, clock, task scheduler and the single RNG stream."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.reset()

    def reset(self, seed: Optional[int] = None) -> None:
        if seed is not None:
            self.seed = seed
        self._now = 0.0
        self._queue: list[Event] = []
        self._seq = itertools.count()
        self._tasks: list[Task] = []
        self.rng = np.random.default_rng(self.seed)
        self.trace: list[tuple[float, int, str]] = []
        self.log_lines: list[str] = []

    def now(self) -> float:
        return self._now

    def schedule(
        self,
        delay: float,
        handler: Callable[[Any], None],
        payload: Any = None,
        label: str = "",
    ) -> int:
        """Queue ``handler(payload)`` to run at ``now() + delay``.

        Returns the event id, which is the event's sequence number.
        """
        if delay < 0:
            raise ValueError(f"negative delay {delay!r}")
        seq = next(self._seq)
        heapq.heappush(
            self._queue, Event(self._now + delay, seq, handler, payload, label)
        )
        return seq

    def timeout(self, delay: float, description: str = "") -> Signal:
        sig = Signal(self, description or f"timeout {delay} ns")
        self.schedule(delay, sig.fire, None, label=sig.description)
        return sig

    def signal(self, description: str = "signal") -> Signal:
        return Signal(self, description)

    def spawn(self, name: str, gen: Generator) -> Task:
        task = Task(self, name, gen)
        self._tasks.append(task)
        self.schedule(0, task._step, None, label=f"start {name}")
        return task

    def _wake(self, task: Task, value: Any) -> None:
        self.schedule(0, task._step, value, label=f"resume {task.name}")

    def log(self, line: str) -> None:
        self.log_lines.append(f"t={self._now!r} {line}")

    @property
    def tasks(self) -> list[Task]:
        return list(self._tasks)

    def run(self) -> float:
        """Process events until the queue is empty; return the final clock."""
        while self._queue:
            ev = heapq.heappop(self._queue)
            # heap order guarantees monotone time; keep the check cheap
            if ev.fire_time < self._now:
                raise SimulationError("clock moved backwards")
            self._now = ev.fire_time
            self.trace.append((ev.fire_time, ev.seq, ev.label))
            ev.handler(ev.payload)
        blocked = [t for t in self._tasks if t.state is not TaskState.FINISHED]
        if blocked:
            raise DeadlockError(
                [
                    (t.name, t.waiting_on.description if t.waiting_on else "?")
                    for t in blocked
                ]
            )
        return self._now
