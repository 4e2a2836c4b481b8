"""Virtual ambient sensors.

Each stream produces
    value(t) = baseline + amplitude*sin(2*pi*tod(t)) + N(0, noise_sd)
               + drift_per_day*days(t)
clamped below at min_value (particulates and gas concentrations never go
negative).  tod(t) is the fraction of the UTC day, so the sinusoid has a
daily period; days(t) counts from drift_origin.

Noise is derived per (seed, timestamp) through sha256, not from a stateful
RNG, so a stream replayed at the same timestamps yields identical values
no matter how reads interleave with other streams.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Optional

from ..clock import DEFAULT_EPOCH
from ..model import Quality

_DAY = 86400.0


@dataclass(frozen=True)
class SensorStream:
    metric: str
    sensor: str
    unit: str
    baseline: float
    amplitude: float
    noise_sd: float
    drift_per_day: float
    min_value: Optional[float]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric, "sensor": self.sensor, "unit": self.unit,
            "baseline": self.baseline, "amplitude": self.amplitude,
            "noise_sd": self.noise_sd, "drift_per_day": self.drift_per_day,
            "min_value": self.min_value,
        }

    @staticmethod
    def from_dict(d: dict) -> "SensorStream":
        return SensorStream(
            metric=d["metric"], sensor=d["sensor"], unit=d["unit"],
            baseline=d["baseline"], amplitude=d.get("amplitude", 0.0),
            noise_sd=d.get("noise_sd", 0.0),
            drift_per_day=d.get("drift_per_day", 0.0),
            min_value=d.get("min_value", 0.0),
        )


def _noise(seed: str, t: float, sd: float) -> float:
    if sd == 0.0:
        return 0.0
    digest = hashlib.sha256(f"{seed}|{t!r}".encode()).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    return rng.gauss(0.0, sd)


class SensorModel:
    def __init__(self, stream: SensorStream, seed: str,
                 drift_origin: float = DEFAULT_EPOCH):
        self.stream = stream
        self.seed = seed
        self.drift_origin = drift_origin
        self.fault = False
        self._last_ts: Optional[float] = None
        self._last_value: float = stream.baseline

    def set_fault(self, flag: bool) -> None:
        self.fault = flag

    def value_at(self, t: float) -> float:
        s = self.stream
        tod = (t % _DAY) / _DAY
        days = (t - self.drift_origin) / _DAY
        value = (s.baseline + s.amplitude * math.sin(2 * math.pi * tod)
                 + _noise(self.seed, t, s.noise_sd) + s.drift_per_day * days)
        if s.min_value is not None and value < s.min_value:
            value = s.min_value
        return value

    def read(self, t: float) -> tuple[float, Quality]:
        if self.fault:
            return self._last_value, Quality.FAULT
        stale = self._last_ts is not None and t == self._last_ts
        value = self.value_at(t)
        self._last_ts = t
        self._last_value = value
        return value, Quality.STALE if stale else Quality.OK


# The on-node ambient suite: twelve streams, with particulates and CO2
# measured by two devices each.  Model parameters are plausible urban
# defaults, overridable per node in the topology file.
DEFAULT_STREAMS: list[SensorStream] = [
    SensorStream("pm2_5", "Plantower", "ug/m3", 12.0, 6.0, 2.0, 0.01, 0.0),
    SensorStream("pm2_5", "Nova PM", "ug/m3", 13.0, 6.0, 2.5, 0.01, 0.0),
    SensorStream("pm10", "Plantower", "ug/m3", 20.0, 8.0, 3.0, 0.01, 0.0),
    SensorStream("pm10", "Nova PM", "ug/m3", 22.0, 8.0, 3.5, 0.01, 0.0),
    SensorStream("co2", "SCD41", "ppm", 420.0, 40.0, 8.0, 0.05, 0.0),
    SensorStream("co2", "BME680", "ppm", 430.0, 45.0, 15.0, 0.05, 0.0),
    SensorStream("no2", "NO2-B43F", "ppb", 18.0, 8.0, 2.0, 0.0, 0.0),
    SensorStream("ox", "OX-B431", "ppb", 30.0, 10.0, 2.5, 0.0, 0.0),
    SensorStream("multi_gas", "MiCS-6814", "ppm", 0.4, 0.2, 0.05, 0.0, 0.0),
    SensorStream("pressure", "BME680", "hPa", 1013.0, 3.0, 0.4, 0.0, 0.0),
    SensorStream("temperature", "BME680", "C", 12.0, 6.0, 0.3, 0.0, None),
    SensorStream("noise", "SPH0645", "dBA", 55.0, 10.0, 3.0, 0.0, 0.0),
]
