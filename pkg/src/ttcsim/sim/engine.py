"""Deterministic discrete-event core.

Events are ``(time, sequence, callback)`` triples; the sequence number makes
the pop order total, so equal-time events run in scheduling (FIFO) order.
Sequential procedures are written as generators that ``yield`` a
:class:`Future` and are resumed with its value once it resolves.
"""

from __future__ import annotations

import heapq
from collections.abc import Callable, Generator
from typing import Any

from ..timebase import TimePs


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[tuple[TimePs, int, Callable, tuple]] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: TimePs, callback: Callable, *args: Any) -> None:
        heapq.heappush(self._heap, (int(time), self._seq, callback, args))
        self._seq += 1

    def pop(self) -> tuple[TimePs, int, Callable, tuple]:
        return heapq.heappop(self._heap)

    def peek_time(self) -> TimePs | None:
        return self._heap[0][0] if self._heap else None


class Future:
    def __init__(self, sim: Simulation) -> None:
        self._sim = sim
        self.done = False
        self.value: Any = None
        self._callbacks: list[Callable[[Any], None]] = []

    def set(self, value: Any = None) -> None:
        if self.done:
            return
        self.done = True
        self.value = value
        for cb in self._callbacks:
            self._sim.schedule(self._sim.now, cb, value)
        self._callbacks.clear()

    def add_callback(self, cb: Callable[[Any], None]) -> None:
        if self.done:
            self._sim.schedule(self._sim.now, cb, self.value)
        else:
            self._callbacks.append(cb)


class CausalityError(RuntimeError):
    pass


class Simulation:
    def __init__(self) -> None:
        self.now: TimePs = 0
        self.queue = EventQueue()
        self.events_executed = 0

    def schedule(self, time: TimePs, callback: Callable, *args: Any) -> None:
        if time < self.now:
            raise CausalityError(f"event at {time} ps scheduled from {self.now} ps")
        self.queue.push(time, callback, *args)

    def future(self) -> Future:
        return Future(self)

    def timeout(self, delay_ps: TimePs, value: Any = None) -> Future:
        fut = Future(self)
        self.schedule(self.now + delay_ps, fut.set, value)
        return fut

    def at(self, time: TimePs, value: Any = None) -> Future:
        return self.timeout(max(0, time - self.now), value)

    def with_timeout(self, fut: Future, delay_ps: TimePs, default: Any = None) -> Future:
        """Resolves with ``fut``'s value, or ``default`` after ``delay_ps``."""
        out = Future(self)
        fut.add_callback(out.set)
        self.schedule(self.now + delay_ps, out.set, default)
        return out

    def all_of(self, futures: list[Future]) -> Future:
        """Resolves with the list of values once every future has resolved."""
        out = Future(self)
        pending = [len(futures)]
        if not futures:
            self.schedule(self.now, out.set, [])
            return out

        def one(_value: Any) -> None:
            pending[0] -= 1
            if pending[0] == 0:
                out.set([f.value for f in futures])

        for f in futures:
            f.add_callback(one)
        return out

    def process(self, gen: Generator[Future, Any, Any]) -> Future:
        """Run a generator-based procedure; the returned future holds its result."""
        result = Future(self)

        def step(value: Any) -> None:
            try:
                fut = gen.send(value)
            except StopIteration as stop:
                result.set(stop.value)
                return
            fut.add_callback(step)

        self.schedule(self.now, step, None)
        return result

    def run(self, until: TimePs | None = None, max_events: int | None = None) -> None:
        q = self.queue
        while len(q):
            t = q.peek_time()
            if until is not None and t > until:
                break
            t, _, cb, args = q.pop()
            self.now = t
            cb(*args)
            self.events_executed += 1
            if max_events is not None and self.events_executed >= max_events:
                raise RuntimeError("event budget exhausted")
        if until is not None and until > self.now:
            self.now = until
