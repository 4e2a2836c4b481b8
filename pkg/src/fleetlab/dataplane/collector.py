"""Sensor collector: bus subscriber feeding the time-series store.

Deliberately unbuffered: when the collector is stopped or the bus is down,
samples published in that window are simply gone.  Stored volume therefore
tracks the polling schedule while the collector is up.
"""

from __future__ import annotations

import json
from typing import Callable, Optional

from ..model import SensorSample
from .broker import Broker, Subscription
from .tsdb import TimeSeriesStore


class SensorCollector:
    def __init__(self, broker: Broker, store: TimeSeriesStore,
                 alert_cb: Optional[Callable[[dict], None]] = None):
        self.broker = broker
        self.store = store
        self.alert_cb = alert_cb
        self._sub: Optional[Subscription] = None
        self.received = 0
        self.stored = 0
        self.duplicates = 0
        self.write_failures = 0

    @property
    def running(self) -> bool:
        return self._sub is not None

    def start(self) -> None:
        if self._sub is None:
            self._sub = self.broker.subscribe("nodes/+/sensors/+", self._on_sample)

    def stop(self) -> None:
        if self._sub is not None:
            self._sub.unsubscribe()
            self._sub = None

    def _on_sample(self, topic: str, payload: bytes) -> None:
        self.received += 1
        sample = SensorSample.from_dict(json.loads(payload.decode("utf-8")))
        try:
            if self.store.write(sample):
                self.stored += 1
            else:
                self.duplicates += 1
        except Exception as exc:
            self.write_failures += 1
            if self.alert_cb is not None:
                self.alert_cb({"kind": "store_write_failure",
                               "node": sample.node, "detail": str(exc)})
