"""Virtual time and the event scheduler.

All periodic behaviour in the platform (sensor polling, heartbeats, power
sampling, experiment lifecycles) is expressed as callbacks on an
EventScheduler.  Under test the scheduler is driven explicitly with
``run_until``, which makes every run bit-reproducible; in server mode a
driver thread advances it against the wall clock (optionally accelerated).

Events fire in (time, insertion order), so two events due at the same
instant always execute in the order they were scheduled.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Optional

# Default simulated epoch: 2025-01-01T00:00:00Z.  Having a fixed, round
# origin keeps reservation minutes and day partitions easy to eyeball.
DEFAULT_EPOCH = 1735689600.0


@dataclass(order=True)
class _Event:
    when: float
    seq: int
    fn: Callable[[], None] = field(compare=False)
    cancelled: bool = field(default=False, compare=False)


class Handle:
    """Cancellation handle for a scheduled (possibly repeating) event."""

    def __init__(self):
        self._event: Optional[_Event] = None
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True
        if self._event is not None:
            self._event.cancelled = True


class EventScheduler:
    """Discrete event scheduler over a virtual clock.

    ``now`` only moves forward, and only via run_until/run_next.  Callbacks
    may schedule further events (including at the current instant).
    """

    def __init__(self, start: float = DEFAULT_EPOCH):
        self._now = float(start)
        self._queue: list[_Event] = []
        self._seq = itertools.count()

    @property
    def now(self) -> float:
        return self._now

    def at(self, when: float, fn: Callable[[], None]) -> Handle:
        if when < self._now:
            when = self._now
        handle = Handle()
        event = _Event(when, next(self._seq), fn)
        handle._event = event
        heapq.heappush(self._queue, event)
        return handle

    def after(self, delay: float, fn: Callable[[], None]) -> Handle:
        return self.at(self._now + delay, fn)

    def every(self, interval: float, fn: Callable[[], None],
              *, first_after: float | None = None) -> Handle:
        """Run ``fn`` periodically.  First run at now+interval unless
        ``first_after`` is given.  ``fn`` may return a new interval to
        apply from the next cycle (used for poll-interval changes)."""
        if interval <= 0:
            raise ValueError("interval must be positive")
        handle = Handle()
        state = {"interval": float(interval)}

        def tick():
            if handle.cancelled:
                return
            result = fn()
            if isinstance(result, (int, float)) and result > 0:
                state["interval"] = float(result)
            if not handle.cancelled:
                event = _Event(self._now + state["interval"], next(self._seq), tick)
                handle._event = event
                heapq.heappush(self._queue, event)

        first = interval if first_after is None else first_after
        event = _Event(self._now + first, next(self._seq), tick)
        handle._event = event
        heapq.heappush(self._queue, event)
        return handle

    def next_time(self) -> float | None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].when if self._queue else None

    def run_next(self) -> bool:
        """Execute the next pending event, advancing now to it."""
        while self._queue:
            event = heapq.heappop(self._queue)
            if event.cancelled:
                continue
            self._now = max(self._now, event.when)
            event.fn()
            return True
        return False

    def run_until(self, t: float) -> None:
        """Execute every event due at or before ``t``; leave now == t."""
        while True:
            nxt = self.next_time()
            if nxt is None or nxt > t:
                break
            self.run_next()
        self._now = max(self._now, t)

    def run_for(self, dt: float) -> None:
        self.run_until(self._now + dt)


class WallDriver:
    """Drives an EventScheduler from a background thread.

    rate=1.0 paces virtual time against the wall clock; rate=0 means
    "as fast as possible" (each loop jumps straight to the next event),
    which server mode uses for scripted end-to-end runs.
    """

    def __init__(self, sched: EventScheduler, lock: threading.RLock,
                 rate: float = 1.0):
        self.sched = sched
        self.lock = lock
        self.rate = rate
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _run(self) -> None:
        anchor_wall = _time.monotonic()
        anchor_virt = self.sched.now
        while not self._stop.is_set():
            with self.lock:
                if self.rate <= 0:
                    # Accelerated: drain whatever is pending, then hop to
                    # the next event instant.
                    if not self.sched.run_next():
                        pass
                else:
                    target = anchor_virt + (_time.monotonic() - anchor_wall) * self.rate
                    self.sched.run_until(target)
            _time.sleep(0.001 if self.rate <= 0 else 0.02)


def parse_timestamp(text: str) -> float:
    """ISO 8601 UTC timestamp -> epoch seconds.  Accepts a trailing Z."""
    from datetime import datetime, timezone

    cleaned = text.strip()
    if cleaned.endswith("Z"):
        cleaned = cleaned[:-1] + "+00:00"
    dt = datetime.fromisoformat(cleaned)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(epoch: float) -> str:
    """Epoch seconds -> ISO 8601 UTC with second precision and Z suffix."""
    from datetime import datetime, timezone

    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def day_of(epoch: float) -> str:
    from datetime import datetime, timezone

    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%d")


def minute_of(epoch: float) -> int:
    """Whole minutes since the Unix epoch; scheduling granularity."""
    return int(epoch // 60)
