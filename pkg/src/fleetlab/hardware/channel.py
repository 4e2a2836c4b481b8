"""Log-distance channel with seeded per-link shadowing.

    RSSI(d) = effective_tx - PL0 - 10*n*log10(max(d, 1m)) - shadowing(link)

Shadowing is a zero-mean Gaussian drawn once per unordered link from the
channel seed, so it is symmetric and reproducible.  A frame transmitted
over [t, t+dur) is delivered to every compatible radio that is in range
and stayed in rx state for the whole window.
"""

from __future__ import annotations

import hashlib
import math
import random
from typing import Optional

from ..clock import EventScheduler
from ..model import Position, RadioKind
from .radios import RadioProfile, RadioRuntime


class RadioEnvironment:
    def __init__(self, sched: EventScheduler, *, path_loss_exponent: float = 3.0,
                 path_loss_at_1m_db: float = 40.0,
                 shadowing_sigma_db: float = 4.0, seed: int = 1):
        self.sched = sched
        self.n = path_loss_exponent
        self.pl0 = path_loss_at_1m_db
        self.sigma = shadowing_sigma_db
        self.seed = seed
        self.radios: dict[tuple[str, RadioKind], RadioRuntime] = {}
        self.frames: list[dict] = []
        self.lost: int = 0

    # ----------------------------------------------------------- registry

    def add_radio(self, node: str, kind: RadioKind, position: Position,
                  profile: RadioProfile) -> RadioRuntime:
        runtime = RadioRuntime(self, node, kind, position, profile)
        self.radios[(node, kind)] = runtime
        return runtime

    def remove_radio(self, runtime: RadioRuntime) -> None:
        self.radios.pop((runtime.node, runtime.kind), None)

    def get(self, node: str, kind: RadioKind) -> Optional[RadioRuntime]:
        return self.radios.get((node, kind))

    # ------------------------------------------------------------ physics

    def shadowing_db(self, key_a: str, key_b: str) -> float:
        if self.sigma == 0.0:
            return 0.0
        lo, hi = sorted((key_a, key_b))
        digest = hashlib.sha256(f"{self.seed}|{lo}|{hi}".encode()).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        return rng.gauss(0.0, self.sigma)

    def path_loss_db(self, distance_m: float) -> float:
        d = max(distance_m, 1.0)
        return self.pl0 + 10.0 * self.n * math.log10(d)

    def rssi_link(self, tx_profile: RadioProfile, tx_pos: Position, tx_key: str,
                  rx_pos: Position, rx_key: str) -> float:
        distance = tx_pos.distance_to(rx_pos)
        return (tx_profile.effective_tx_dbm() - self.path_loss_db(distance)
                - self.shadowing_db(tx_key, rx_key))

    def rssi(self, tx: RadioRuntime, rx: RadioRuntime) -> float:
        return self.rssi_link(tx.profile, tx.position, tx.key,
                              rx.position, rx.key)

    def in_range(self, tx: RadioRuntime, rx: RadioRuntime) -> bool:
        return self.rssi(tx, rx) >= rx.profile.effective_sensitivity_dbm()

    # ----------------------------------------------------------- delivery

    def transmit(self, tx: RadioRuntime, payload: str, duration_s: float) -> None:
        t0 = self.sched.now
        t1 = t0 + duration_s
        gen = tx.generation
        candidates = [r for r in self.radios.values()
                      if r.kind == tx.kind and r is not tx]

        def resolve():
            if tx.generation != gen:
                return  # transmitter was reflashed mid-frame
            delivered = 0
            for rx in candidates:
                if self.radios.get((rx.node, rx.kind)) is not rx:
                    continue
                level = self.rssi(tx, rx)
                if level < rx.profile.effective_sensitivity_dbm():
                    continue
                if not rx.covered_by("rx", t0, t1):
                    continue
                record = {"t": t1, "tx_node": tx.node, "rx_node": rx.node,
                          "kind": tx.kind.value, "payload": payload,
                          "rssi": level}
                self.frames.append(record)
                rx.on_receive(payload, record)
                delivered += 1
            if delivered == 0:
                self.lost += 1

        self.sched.at(t1, resolve)
