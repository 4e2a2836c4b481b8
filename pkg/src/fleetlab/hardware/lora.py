"""Long-range uplink network core.

Registered end devices send uplinks that are heard by every in-range
gateway radio (the fleet's RSE-L nodes carry one each).  The core then
deduplicates by (device, frame counter), applies the device's service
profile rate limit, and delivers exactly one application frame annotated
with the best-RSSI gateway on the app's bus topic.

Physical order of checks: device known -> some gateway heard it ->
counter not a replay -> rate limit honoured.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

from .. import errors
from ..model import Position, RadioKind
from .channel import RadioEnvironment
from .radios import DEFAULT_PROFILES, RadioProfile


@dataclass(frozen=True)
class ServiceProfile:
    name: str
    min_uplink_interval_s: float

    def to_dict(self) -> dict:
        return {"name": self.name,
                "min_uplink_interval_s": self.min_uplink_interval_s}


@dataclass
class _Device:
    eui: str
    app: str
    position: Position
    service_profile: ServiceProfile
    radio_profile: RadioProfile
    last_fcnt: int = -1
    last_accepted_at: Optional[float] = None


class LoRaCore:
    def __init__(self, env: RadioEnvironment, broker, now_fn: Callable[[], float]):
        self.env = env
        self.broker = broker
        self.now_fn = now_fn
        self._devices: dict[str, _Device] = {}
        self._apps: dict[str, list[dict]] = {}
        self.rate_limited: list[dict] = []
        self.stats = {"delivered": 0, "duplicates": 0, "rate_limited": 0,
                      "no_coverage": 0}

    def register_app(self, app_id: str) -> None:
        self._apps.setdefault(app_id, [])

    def register_device(self, eui: str, *, app: str, position: Position,
                        service_profile: ServiceProfile,
                        radio_profile: Optional[RadioProfile] = None) -> None:
        if app not in self._apps:
            raise errors.UnknownEntity(f"no app {app}")
        self._devices[eui] = _Device(
            eui=eui, app=app, position=position,
            service_profile=service_profile,
            radio_profile=radio_profile or DEFAULT_PROFILES[RadioKind.LORA_DEVICE])

    def devices(self) -> list[dict]:
        return [{"eui": d.eui, "app": d.app,
                 "position": {"x": d.position.x, "y": d.position.y},
                 "service_profile": d.service_profile.to_dict(),
                 "last_fcnt": d.last_fcnt}
                for d in self._devices.values()]

    def uplinks(self, app: str) -> list[dict]:
        return list(self._apps.get(app, []))

    def uplink(self, eui: str, *, payload: str, fcnt: int) -> Optional[dict]:
        """Simulate one device uplink.  Returns the delivered application
        frame, or None when it was dropped as a duplicate or rate-limited."""
        device = self._devices.get(eui)
        if device is None:
            raise errors.UnknownDevice(f"device {eui} is not registered")
        now = self.now_fn()

        heard: list[tuple[float, str]] = []
        for (node, kind), runtime in self.env.radios.items():
            if kind is not RadioKind.LORA_GATEWAY:
                continue
            level = self.env.rssi_link(device.radio_profile, device.position,
                                       f"lora-dev:{eui}", runtime.position,
                                       runtime.key)
            if level >= runtime.profile.effective_sensitivity_dbm():
                heard.append((level, node))
        if not heard:
            self.stats["no_coverage"] += 1
            raise errors.NoGatewayCoverage(f"no gateway heard {eui}", device=eui)

        if fcnt <= device.last_fcnt:
            self.stats["duplicates"] += 1
            return None

        profile = device.service_profile
        if (device.last_accepted_at is not None
                and now - device.last_accepted_at < profile.min_uplink_interval_s):
            self.stats["rate_limited"] += 1
            self.rate_limited.append({"device": eui, "fcnt": fcnt, "t": now,
                                      "service_profile": profile.name})
            return None

        device.last_fcnt = fcnt
        device.last_accepted_at = now
        heard.sort(key=lambda pair: (-pair[0], pair[1]))
        best_rssi, best_gateway = heard[0]
        frame = {"device": eui, "app": device.app, "fcnt": fcnt,
                 "payload": payload, "t": now, "gateway": best_gateway,
                 "rssi": best_rssi, "gateways_heard": len(heard)}
        self._apps[device.app].append(frame)
        self.stats["delivered"] += 1
        self.broker.publish("platform", f"lora/{device.app}/uplinks",
                            json.dumps(frame, sort_keys=True).encode("utf-8"))
        return frame
