"""Declarative fleet descriptions.

A topology file is a JSON document listing networks, nodes, optional user
accounts, and optional LoRa applications.  `fleet up --topology <file>`
boots a whole platform from one; the default below is a desk-scale city
block with Wi-Fi-range spacing between neighbours.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .config import PlatformConfig
from .hardware.lora import ServiceProfile
from .model import Position
from .orchestrator import Platform

_TOP_KEYS = {"config", "networks", "nodes", "users", "lora"}
_NETWORK_KEYS = {"name", "default_roles", "gated", "description"}
_NODE_KEYS = {"id", "x", "y", "network"}
_USER_KEYS = {"email", "password", "roles", "verified"}
_LORA_KEYS = {"apps", "devices"}
_DEVICE_KEYS = {"eui", "app", "x", "y", "min_uplink_interval_s",
                "profile_name"}

DEFAULT_TOPOLOGY: dict = {
    "networks": [
        {"name": "city", "default_roles": ["city"], "gated": False,
         "description": "streetlight columns along the main road"},
        {"name": "arena", "default_roles": ["arena"], "gated": True,
         "description": "robot arena; experiments need operator sign-off"},
    ],
    "nodes": [
        {"id": "RSE-001", "x": 0.0, "y": 0.0, "network": "city"},
        {"id": "RSE-002", "x": 40.0, "y": 0.0, "network": "city"},
        {"id": "RSE-L-003", "x": 80.0, "y": 0.0, "network": "city"},
        {"id": "RSE-004", "x": 120.0, "y": 0.0, "network": "city"},
        {"id": "RSS-005", "x": 160.0, "y": 0.0, "network": "city"},
        {"id": "RSS-006", "x": 20.0, "y": 30.0, "network": "arena"},
        {"id": "RSE-007", "x": 60.0, "y": 30.0, "network": "arena"},
    ],
    "users": [],
    "lora": {"apps": [], "devices": []},
}


def _check_keys(record: dict, allowed: set, what: str) -> None:
    unknown = set(record) - allowed
    if unknown:
        raise ValueError(f"unknown {what} keys: {sorted(unknown)}")


def load_topology(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if not isinstance(spec, dict):
        raise ValueError("topology file must hold a JSON object")
    return spec


def build_platform(spec: dict, *, data_dir: Optional[str | Path] = None,
                   start: Optional[float] = None) -> Platform:
    _check_keys(spec, _TOP_KEYS, "topology")
    config = PlatformConfig.from_dict(spec.get("config", {}))

    networks = spec.get("networks", [])
    nodes = spec.get("nodes", [])
    known_networks = {n["name"] for n in networks}
    for record in networks:
        _check_keys(record, _NETWORK_KEYS, "network")
    for record in nodes:
        _check_keys(record, _NODE_KEYS, "node")
        if record["network"] not in known_networks:
            raise ValueError(f"node {record['id']} references unknown "
                             f"network {record['network']!r}")

    kwargs = {"data_dir": data_dir}
    if start is not None:
        kwargs["start"] = start
    platform = Platform(config, **kwargs)
    for record in networks:
        platform.add_network(record["name"],
                             default_roles=record.get("default_roles", []),
                             gated=record.get("gated", False),
                             description=record.get("description", ""))
    for record in nodes:
        platform.add_node(record["id"], x=float(record["x"]),
                          y=float(record["y"]), network=record["network"])

    for record in spec.get("users", []):
        _check_keys(record, _USER_KEYS, "user")
        user = platform.register_user(record["email"], record["password"])
        user.verified = bool(record.get("verified", False))
        user.roles |= set(record.get("roles", []))

    lora = spec.get("lora", {})
    _check_keys(lora, _LORA_KEYS, "lora")
    for app in lora.get("apps", []):
        platform.lora.register_app(app)
    for record in lora.get("devices", []):
        _check_keys(record, _DEVICE_KEYS, "lora device")
        platform.lora.register_device(
            record["eui"], app=record["app"],
            position=Position(float(record["x"]), float(record["y"])),
            service_profile=ServiceProfile(
                name=record.get("profile_name", "default"),
                min_uplink_interval_s=float(
                    record.get("min_uplink_interval_s", 60.0))))
    return platform
