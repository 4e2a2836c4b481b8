"""Platform configuration: timing defaults, limits, alert thresholds.

Everything here is overridable from a JSON config file; code always reads
the values through a PlatformConfig instance so tests can shrink windows
without monkeypatching.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path


@dataclass
class PlatformConfig:
    # Scheduling
    max_duration_minutes: int = 240
    cleanup_budget_minutes: int = 5

    # Agent timing (seconds)
    poll_interval_s: float = 30.0
    heartbeat_interval_s: float = 60.0
    offline_after_beats: int = 3
    flash_latency_s: float = 5.0
    stop_grace_s: float = 10.0

    # Power pipeline
    power_sample_rate_hz: float = 1000.0
    power_chunk_s: float = 1.0
    power_high_water_chunks: int = 120

    # Registry
    max_artifact_bytes: int = 64 * 1024 * 1024
    # Byte signatures the default scanner refuses; hex-encoded.
    denylist_signatures: list[str] = field(
        default_factory=lambda: ["deadbeef", "6861636b6564"])
    scan_latency_s: float = 1.0
    # Host devices a workload manifest may request.
    grantable_devices: list[str] = field(
        default_factory=lambda: ["nrf52840", "cc1310"])

    # Channel model
    path_loss_exponent: float = 3.0
    path_loss_at_1m_db: float = 40.0
    shadowing_sigma_db: float = 4.0
    channel_seed: int = 1

    # Root seed for the ambient sensor models (per-node streams derive
    # their own seeds from it, so one value pins the whole fleet).
    sensor_seed: str = "fleet"

    # Orchestration
    deploy_parallelism: int = 16
    deploy_retries: int = 2
    deploy_timeout_s: float = 300.0
    validation_window_s: float = 120.0
    retry_storm_threshold: int = 3

    # Query limits
    max_query_points: int = 1_000_000

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "PlatformConfig":
        cfg = PlatformConfig()
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise KeyError(f"unknown config key: {key}")
            setattr(cfg, key, value)
        return cfg

    @staticmethod
    def load(path: str | Path) -> "PlatformConfig":
        return PlatformConfig.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
