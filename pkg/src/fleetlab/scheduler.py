"""Node reservation calendar and the gated-network queue.

Reservations are per node, minute-granular, half-open intervals
[start, start+duration).  A multi-node reserve is atomic: one conflict and
nothing is written.  All mutations run under a single logical writer (the
caller serializes), and accepted operations append to a journal that
rebuilds the calendar on startup.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from . import errors
from .config import PlatformConfig
from .journal import Journal
from .model import AgentStateKind, NodeId


@dataclass
class Reservation:
    experiment: str
    nodes: list[NodeId]
    start_minute: int
    duration_minutes: int
    submitted_at: float

    @property
    def end_minute(self) -> int:
        return self.start_minute + self.duration_minutes

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "nodes": [n.render() for n in self.nodes],
            "start_minute": self.start_minute,
            "duration_minutes": self.duration_minutes,
            "submitted_at": self.submitted_at,
        }


def _overlaps(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    return a_start < b_end and b_start < a_end


class ReservationBook:
    def __init__(self, config: PlatformConfig, now_fn: Callable[[], float],
                 node_state: Callable[[NodeId], AgentStateKind],
                 journal: Optional[Journal] = None):
        self.config = config
        self.now_fn = now_fn
        self.node_state = node_state
        self.journal = Journal() if journal is None else journal
        self._by_experiment: dict[str, Reservation] = {}
        # node -> sorted list of (start, end, experiment)
        self._by_node: dict[NodeId, list[tuple[int, int, str]]] = {}
        self._replay()

    def _replay(self) -> None:
        for record in self.journal.replay():
            if record["op"] == "reserve":
                self._apply_reserve(Reservation(
                    experiment=record["experiment"],
                    nodes=[NodeId.parse(n) for n in record["nodes"]],
                    start_minute=record["start_minute"],
                    duration_minutes=record["duration_minutes"],
                    submitted_at=record["submitted_at"],
                ))
            elif record["op"] == "cancel":
                self._apply_cancel(record["experiment"])

    # ------------------------------------------------------------- queries

    def reservations(self) -> list[Reservation]:
        return sorted(self._by_experiment.values(),
                      key=lambda r: (r.submitted_at, r.experiment))

    def reservation_for(self, experiment: str) -> Optional[Reservation]:
        return self._by_experiment.get(experiment)

    def conflicts_for(self, nodes: Iterable[NodeId], start_minute: int,
                      duration_minutes: int) -> list[dict]:
        end = start_minute + duration_minutes
        found = []
        for node in nodes:
            for (s, e, exp) in self._by_node.get(node, []):
                if _overlaps(start_minute, end, s, e):
                    found.append({"node": node.render(), "experiment": exp,
                                  "start_minute": s, "end_minute": e})
        return found

    def availability(self, nodes: Iterable[NodeId], start_minute: int,
                     duration_minutes: int) -> list[NodeId]:
        """Nodes with no overlapping reservation whose agent is not offline."""
        free = []
        end = start_minute + duration_minutes
        for node in nodes:
            if self.node_state(node) is AgentStateKind.OFFLINE:
                continue
            busy = any(_overlaps(start_minute, end, s, e)
                       for (s, e, _) in self._by_node.get(node, []))
            if not busy:
                free.append(node)
        return free

    # ----------------------------------------------------------- mutations

    def reserve(self, experiment: str, nodes: list[NodeId], start_minute: int,
                duration_minutes: int, submitted_at: Optional[float] = None) -> Reservation:
        if duration_minutes <= 0 or duration_minutes > self.config.max_duration_minutes:
            raise errors.DurationExceeded(
                f"duration {duration_minutes} outside 1..{self.config.max_duration_minutes}",
                duration=duration_minutes)
        now_minute = int(self.now_fn() // 60)
        if start_minute < now_minute:
            raise errors.PastStart(f"start minute {start_minute} is in the past",
                                   start_minute=start_minute, now_minute=now_minute)
        if experiment in self._by_experiment:
            raise errors.Conflict(f"{experiment} already holds a reservation",
                                  conflicts=[])
        conflicts = self.conflicts_for(nodes, start_minute, duration_minutes)
        if conflicts:
            raise errors.Conflict("reservation overlaps existing bookings",
                                  conflicts=conflicts)
        res = Reservation(experiment=experiment, nodes=list(nodes),
                          start_minute=start_minute,
                          duration_minutes=duration_minutes,
                          submitted_at=self.now_fn() if submitted_at is None else submitted_at)
        self._apply_reserve(res)
        self.journal.append({"op": "reserve", **res.to_dict()})
        return res

    def cancel(self, experiment: str) -> None:
        if experiment not in self._by_experiment:
            return
        self._apply_cancel(experiment)
        self.journal.append({"op": "cancel", "experiment": experiment})

    # ------------------------------------------------------------ internal

    def _apply_reserve(self, res: Reservation) -> None:
        self._by_experiment[res.experiment] = res
        for node in res.nodes:
            slots = self._by_node.setdefault(node, [])
            slots.append((res.start_minute, res.end_minute, res.experiment))
            slots.sort()

    def _apply_cancel(self, experiment: str) -> None:
        res = self._by_experiment.pop(experiment, None)
        if res is None:
            return
        for node in res.nodes:
            self._by_node[node] = [s for s in self._by_node.get(node, [])
                                   if s[2] != experiment]


class GatedQueue:
    """FIFO queue of experiments awaiting operator release on a gated network.

    Validation verdicts live on the experiment; the queue only orders
    entries.  Activation must follow enqueue order over entries whose
    verdict is Passed (failed or pending entries do not block later ones,
    they are simply ineligible).
    """

    def __init__(self, verdict_of: Callable[[str], str]):
        self.verdict_of = verdict_of
        self._entries: list[dict] = []

    def enqueue(self, experiment: str, at: float) -> None:
        if any(e["experiment"] == experiment for e in self._entries):
            return
        self._entries.append({"experiment": experiment, "enqueued_at": at,
                              "activated": False})

    def remove(self, experiment: str) -> None:
        self._entries = [e for e in self._entries if e["experiment"] != experiment]

    def list_entries(self) -> list[dict]:
        out = []
        for e in self._entries:
            row = dict(e)
            row["verdict"] = self.verdict_of(e["experiment"])
            out.append(row)
        return out

    def head(self) -> Optional[str]:
        for e in self._entries:
            if not e["activated"] and self.verdict_of(e["experiment"]) == "Passed":
                return e["experiment"]
        return None

    def activate(self, experiment: str) -> None:
        entry = next((e for e in self._entries if e["experiment"] == experiment), None)
        if entry is None:
            raise errors.NotGated(f"{experiment} is not queued")
        if entry["activated"]:
            raise errors.InvalidState(f"{experiment} already activated")
        if self.verdict_of(experiment) != "Passed":
            raise errors.NotValidated(f"{experiment} has not passed validation")
        head = self.head()
        if head != experiment:
            raise errors.QueueOrder(
                f"{head} is ahead of {experiment} in the queue", head=head)
        entry["activated"] = True
