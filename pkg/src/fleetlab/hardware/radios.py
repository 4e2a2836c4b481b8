"""Radio profiles, firmware behavior programs, and the per-radio runtime.

A firmware image is opaque bytes; what it *does* is described by a
FirmwareBehavior program: an optional setup sequence followed by a cyclic
loop of timed actions sleep/tx/rx/log/relay.  relay exists so that
store-and-forward meshes are expressible: it retransmits the oldest
received-but-not-yet-forwarded payload (or idles when there is none).

The runtime executes the program on the event scheduler and records every
radio state transition, which gives both frame-delivery checks and power
sampling an exact history to read from.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..model import RadioKind

RADIO_STATES = ("sleep", "rx", "tx")

# Per-state current draw in mA.  These are platform defaults for the power
# simulation, not measurements of any particular chip.
DEFAULT_CURRENTS_MA = {"sleep": 0.005, "rx": 6.0, "tx": 12.0}


@dataclass(frozen=True)
class RadioProfile:
    kind: RadioKind
    tx_power_dbm: float
    sensitivity_dbm: float
    has_fem: bool
    fem_enabled: bool = True
    fem_tx_gain_db: float = 22.0
    fem_rx_gain_db: float = 6.0
    antenna_gain_dbi: float = 5.0
    currents_ma: dict = field(default_factory=lambda: dict(DEFAULT_CURRENTS_MA))

    def effective_tx_dbm(self) -> float:
        gain = self.fem_tx_gain_db if self.has_fem and self.fem_enabled else 0.0
        return self.tx_power_dbm + gain + self.antenna_gain_dbi

    def effective_sensitivity_dbm(self) -> float:
        gain = self.fem_rx_gain_db if self.has_fem and self.fem_enabled else 0.0
        return self.sensitivity_dbm - gain - self.antenna_gain_dbi

    def with_fem(self, enabled: bool) -> "RadioProfile":
        return RadioProfile(
            kind=self.kind, tx_power_dbm=self.tx_power_dbm,
            sensitivity_dbm=self.sensitivity_dbm, has_fem=self.has_fem,
            fem_enabled=enabled, fem_tx_gain_db=self.fem_tx_gain_db,
            fem_rx_gain_db=self.fem_rx_gain_db,
            antenna_gain_dbi=self.antenna_gain_dbi,
            currents_ma=dict(self.currents_ma))


DEFAULT_PROFILES: dict[RadioKind, RadioProfile] = {
    RadioKind.NRF52840: RadioProfile(RadioKind.NRF52840, tx_power_dbm=0.0,
                                     sensitivity_dbm=-95.0, has_fem=True),
    RadioKind.CC1310: RadioProfile(RadioKind.CC1310, tx_power_dbm=10.0,
                                   sensitivity_dbm=-110.0, has_fem=True),
    RadioKind.LORA_GATEWAY: RadioProfile(RadioKind.LORA_GATEWAY,
                                         tx_power_dbm=14.0,
                                         sensitivity_dbm=-130.0, has_fem=False,
                                         antenna_gain_dbi=5.0),
    RadioKind.LORA_DEVICE: RadioProfile(RadioKind.LORA_DEVICE,
                                        tx_power_dbm=14.0,
                                        sensitivity_dbm=-120.0, has_fem=False,
                                        antenna_gain_dbi=2.0),
}


# ------------------------------------------------------------ behavior

_OPS = {"sleep", "tx", "rx", "log", "relay"}


@dataclass(frozen=True)
class Action:
    op: str
    ms: int = 0
    payload: str = ""
    line: str = ""

    def to_dict(self) -> dict:
        d = {"op": self.op}
        if self.op != "log":
            d["ms"] = self.ms
        if self.op == "tx":
            d["payload"] = self.payload
        if self.op == "log":
            d["line"] = self.line
        return d


def _parse_action(raw: dict) -> Action:
    op = raw.get("op")
    if op not in _OPS:
        raise ValueError(f"unknown behavior op: {op!r}")
    if op == "log":
        line = raw.get("line")
        if not isinstance(line, str):
            raise ValueError("log action requires a line")
        return Action(op="log", line=line)
    ms = raw.get("ms")
    if not isinstance(ms, int) or ms <= 0:
        raise ValueError(f"{op} action requires positive integer ms")
    if op == "tx":
        payload = raw.get("payload")
        if not isinstance(payload, str) or not payload:
            raise ValueError("tx action requires a payload")
        return Action(op="tx", ms=ms, payload=payload)
    return Action(op=op, ms=ms)


@dataclass(frozen=True)
class FirmwareBehavior:
    setup: tuple[Action, ...]
    loop: tuple[Action, ...]

    @property
    def cycle_ms(self) -> int:
        return sum(a.ms for a in self.loop)

    @staticmethod
    def from_dict(data: dict) -> "FirmwareBehavior":
        setup = tuple(_parse_action(a) for a in data.get("setup", []))
        loop = tuple(_parse_action(a) for a in data.get("loop", []))
        if loop and sum(a.ms for a in loop) <= 0:
            raise ValueError("loop must advance time (total ms > 0)")
        return FirmwareBehavior(setup=setup, loop=loop)

    def to_dict(self) -> dict:
        return {"setup": [a.to_dict() for a in self.setup],
                "loop": [a.to_dict() for a in self.loop]}


# Factory image: sleep forever.
DUMMY_BEHAVIOR = FirmwareBehavior(setup=(),
                                  loop=(Action(op="sleep", ms=1000),))


# ------------------------------------------------------------- runtime

class RadioRuntime:
    """One physical radio: executes the flashed behavior, keeps a state
    history, collects received frames."""

    def __init__(self, env, node: str, kind: RadioKind, position, profile: RadioProfile):
        self.env = env
        self.node = node
        self.kind = kind
        self.position = position
        self.profile = profile
        self.sched = env.sched
        self.generation = 0
        self.firmware_digest = ""
        self.behavior: Optional[FirmwareBehavior] = None
        # (start_time, state) transitions, in order.
        self._starts: list[float] = [self.sched.now]
        self._states: list[str] = ["sleep"]
        self.received: list[dict] = []
        self.seen: set[str] = set()
        self.pending: deque[str] = deque()
        self.serial_cb: Optional[Callable[[float, str], None]] = None

    @property
    def key(self) -> str:
        return f"{self.node}:{self.kind.value}"

    # --------------------------------------------------------- state log

    def _set_state(self, state: str) -> None:
        self._starts.append(self.sched.now)
        self._states.append(state)

    def state_at(self, t: float) -> str:
        idx = bisect_right(self._starts, t) - 1
        return self._states[idx] if idx >= 0 else "sleep"

    def covered_by(self, state: str, t0: float, t1: float) -> bool:
        """True when the radio was in ``state`` for all of [t0, t1)."""
        idx = bisect_right(self._starts, t0) - 1
        if idx < 0:
            return False
        while idx < len(self._starts):
            if self._states[idx] != state:
                return False
            nxt = self._starts[idx + 1] if idx + 1 < len(self._starts) else None
            if nxt is None or nxt >= t1:
                return True
            idx += 1
        return True

    def current_at(self, t: float) -> float:
        return self.profile.currents_ma[self.state_at(t)]

    # ---------------------------------------------------------- program

    def start_behavior(self, behavior: FirmwareBehavior, digest: str) -> None:
        self.generation += 1
        self.behavior = behavior
        self.firmware_digest = digest
        self._set_state("sleep")
        program = list(behavior.setup)
        self._advance(self.generation, program, 0, bool(behavior.loop))

    def stop(self) -> None:
        self.generation += 1
        self.behavior = None
        self._set_state("sleep")

    def _advance(self, gen: int, setup: list[Action], index: int,
                 has_loop: bool) -> None:
        """Execute actions from ``index``; setup runs once, then the loop
        cycles.  Zero-duration actions (log) run inline."""
        if gen != self.generation:
            return
        while True:
            if index >= len(setup):
                if not has_loop:
                    self._set_state("sleep")
                    return
                setup = list(self.behavior.loop)
                index = 0
            action = setup[index]
            index += 1
            if action.op == "log":
                if self.serial_cb is not None:
                    self.serial_cb(self.sched.now, action.line)
                continue
            duration = action.ms / 1000.0
            if action.op == "sleep":
                self._set_state("sleep")
            elif action.op == "rx":
                self._set_state("rx")
            elif action.op == "tx":
                self._set_state("tx")
                self.seen.add(action.payload)
                self.env.transmit(self, action.payload, duration)
            elif action.op == "relay":
                if self.pending:
                    payload = self.pending.popleft()
                    self._set_state("tx")
                    self.seen.add(payload)
                    self.env.transmit(self, payload, duration)
                else:
                    self._set_state("sleep")
            self.sched.at(self.sched.now + duration,
                          lambda s=setup, i=index: self._advance(gen, s, i, has_loop))
            return

    def on_receive(self, payload: str, record: dict) -> None:
        self.received.append(record)
        if payload not in self.seen:
            self.seen.add(payload)
            self.pending.append(payload)


def sample_currents(radio: RadioRuntime, t0: float, t1: float,
                    rate_hz: float) -> list[float]:
    """Current draw sampled at rate_hz over [t0, t1)."""
    n = round((t1 - t0) * rate_hz)
    return [radio.current_at(t0 + k / rate_hz) for k in range(n)]
