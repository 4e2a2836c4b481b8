"""Core domain model: identities, records, lifecycle states, JSON codec.

Wire format and disk format are the same canonical JSON encoding: snake_case
field names, sorted keys, compact separators.  Everything that crosses the
API, the bus, or a journal goes through to_dict/from_dict here.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import MalformedId

# --------------------------------------------------------------------------
# Node identity

# Fixed fleet naming: RSE-NNN fibre nodes with edge compute, RSE-L-NNN the
# same plus a long-range gateway radio, RSS-NNN wifi sensor-only nodes.
# Ordinals run 000..999 and are always zero-padded to three digits.
_ID_RE = re.compile(r"^(RSE-L|RSE|RSS)-([0-9]{3})$")


class NodeClass(str, Enum):
    EDGE_FIBRE = "EdgeFibre"
    EDGE_FIBRE_LORA = "EdgeFibreLoRa"
    WIFI_SENSOR = "WifiSensor"

    @property
    def prefix(self) -> str:
        return {"EdgeFibre": "RSE", "EdgeFibreLoRa": "RSE-L", "WifiSensor": "RSS"}[self.value]

    @property
    def has_edge_compute(self) -> bool:
        return self in (NodeClass.EDGE_FIBRE, NodeClass.EDGE_FIBRE_LORA)

    @property
    def backbone(self) -> str:
        return "wifi" if self is NodeClass.WIFI_SENSOR else "fibre"


_PREFIX_TO_CLASS = {cls.prefix: cls for cls in NodeClass}


@dataclass(frozen=True, order=True)
class NodeId:
    cls: NodeClass
    ordinal: int

    def __post_init__(self):
        if not 0 <= self.ordinal <= 999:
            raise MalformedId(f"ordinal out of range: {self.ordinal}")

    def render(self) -> str:
        return f"{self.cls.prefix}-{self.ordinal:03d}"

    def __str__(self) -> str:
        return self.render()

    @staticmethod
    def parse(text: str) -> "NodeId":
        m = _ID_RE.match(text)
        if not m:
            raise MalformedId(f"not a node id: {text!r}")
        return NodeId(_PREFIX_TO_CLASS[m.group(1)], int(m.group(2)))


# --------------------------------------------------------------------------
# Hardware descriptors

class RadioKind(str, Enum):
    NRF52840 = "NRF52840"
    CC1310 = "CC1310"
    LORA_GATEWAY = "LoRaGateway"
    LORA_DEVICE = "LoRaDevice"


class AgentStateKind(str, Enum):
    OFFLINE = "Offline"
    IDLE = "Idle"
    RESERVED = "Reserved"
    BUSY = "Busy"
    RESETTING = "Resetting"


@dataclass(frozen=True)
class Position:
    """Planar site coordinates in meters."""

    x: float
    y: float

    def distance_to(self, other: "Position") -> float:
        return ((self.x - other.x) ** 2 + (self.y - other.y) ** 2) ** 0.5


@dataclass
class Node:
    id: NodeId
    position: Position
    network: str = ""
    state: AgentStateKind = AgentStateKind.IDLE
    last_heartbeat: Optional[float] = None

    @property
    def cls(self) -> NodeClass:
        return self.id.cls

    def radio_kinds(self) -> list[RadioKind]:
        kinds = [RadioKind.NRF52840, RadioKind.CC1310]
        if self.cls is NodeClass.EDGE_FIBRE_LORA:
            kinds.append(RadioKind.LORA_GATEWAY)
        return kinds

    def to_dict(self) -> dict:
        return {
            "id": self.id.render(),
            "class": self.cls.value,
            "position": {"x": self.position.x, "y": self.position.y},
            "network": self.network,
            "state": self.state.value,
            "last_heartbeat": self.last_heartbeat,
            "radios": [k.value for k in self.radio_kinds()],
            "backbone": self.cls.backbone,
        }


# --------------------------------------------------------------------------
# Users, networks, projects

class ProjectRole(str, Enum):
    DEVELOPER = "Developer"
    VIEWER = "Viewer"


@dataclass
class User:
    id: str
    email: str
    roles: set[str] = field(default_factory=set)
    verified: bool = False
    password_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "email": self.email,
            "roles": sorted(self.roles),
            "verified": self.verified,
        }


@dataclass
class Network:
    name: str
    nodes: list[NodeId] = field(default_factory=list)
    default_roles: set[str] = field(default_factory=set)
    gated: bool = False
    description: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nodes": [n.render() for n in self.nodes],
            "default_roles": sorted(self.default_roles),
            "gated": self.gated,
            "description": self.description,
        }


@dataclass
class Project:
    id: str
    name: str
    description: str
    network: str
    owner: str
    members: dict[str, ProjectRole] = field(default_factory=dict)

    def role_of(self, user_id: str) -> Optional[ProjectRole]:
        if user_id == self.owner:
            return ProjectRole.DEVELOPER
        return self.members.get(user_id)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "network": self.network,
            "owner": self.owner,
            "members": {uid: role.value for uid, role in sorted(self.members.items())},
        }


# --------------------------------------------------------------------------
# Artifacts

class ArtifactKind(str, Enum):
    FIRMWARE = "Firmware"
    WORKLOAD = "Workload"


class ScanStatus(str, Enum):
    PENDING = "Pending"
    CLEAN = "Clean"
    VULNERABLE = "Vulnerable"


class Arch(str, Enum):
    ARM32 = "ARM32"
    ARM64 = "ARM64"


@dataclass
class Artifact:
    digest: str
    kind: ArtifactKind
    # Firmware targets a radio kind; workloads target an ARM architecture.
    target: str
    size: int
    project: str  # "" for platform base artifacts available everywhere
    uploaded_by: str
    name: str = ""
    scan: ScanStatus = ScanStatus.PENDING
    scan_detail: str = ""
    override: bool = False
    override_by: str = ""

    @property
    def usable(self) -> bool:
        return self.scan is ScanStatus.CLEAN or (
            self.scan is ScanStatus.VULNERABLE and self.override)

    def to_dict(self) -> dict:
        return {
            "digest": self.digest,
            "kind": self.kind.value,
            "target": self.target,
            "size": self.size,
            "project": self.project,
            "uploaded_by": self.uploaded_by,
            "name": self.name,
            "scan": self.scan.value,
            "scan_detail": self.scan_detail,
            "override": self.override,
            "override_by": self.override_by,
        }


# --------------------------------------------------------------------------
# Experiments

class ExperimentState(str, Enum):
    DRAFT = "Draft"
    SCHEDULED = "Scheduled"
    QUEUED_GATED = "QueuedGated"
    VALIDATING = "Validating"
    DEPLOYING = "Deploying"
    RUNNING = "Running"
    COLLECTING = "Collecting"
    CLEANING_UP = "CleaningUp"
    COMPLETED = "Completed"
    FAILED = "Failed"
    CANCELLED = "Cancelled"


TERMINAL_STATES = {ExperimentState.COMPLETED, ExperimentState.FAILED,
                   ExperimentState.CANCELLED}

# Any terminal for an experiment that reached Deploying must pass through
# CleaningUp, so failures detected while deploying/running/collecting route
# via CleaningUp rather than jumping straight to Failed.
LEGAL_TRANSITIONS: set[tuple[ExperimentState, ExperimentState]] = {
    (ExperimentState.DRAFT, ExperimentState.SCHEDULED),
    (ExperimentState.DRAFT, ExperimentState.CANCELLED),
    (ExperimentState.SCHEDULED, ExperimentState.QUEUED_GATED),
    (ExperimentState.SCHEDULED, ExperimentState.DEPLOYING),
    (ExperimentState.SCHEDULED, ExperimentState.CANCELLED),
    (ExperimentState.QUEUED_GATED, ExperimentState.VALIDATING),
    (ExperimentState.VALIDATING, ExperimentState.QUEUED_GATED),
    (ExperimentState.QUEUED_GATED, ExperimentState.DEPLOYING),
    (ExperimentState.QUEUED_GATED, ExperimentState.CANCELLED),
    (ExperimentState.DEPLOYING, ExperimentState.RUNNING),
    (ExperimentState.DEPLOYING, ExperimentState.CLEANING_UP),
    (ExperimentState.RUNNING, ExperimentState.COLLECTING),
    (ExperimentState.RUNNING, ExperimentState.CLEANING_UP),
    (ExperimentState.COLLECTING, ExperimentState.CLEANING_UP),
    (ExperimentState.CLEANING_UP, ExperimentState.COMPLETED),
    (ExperimentState.CLEANING_UP, ExperimentState.FAILED),
}


class ValidationVerdict(str, Enum):
    PENDING = "Pending"
    PASSED = "Passed"
    FAILED = "Failed"


@dataclass
class Configuration:
    """One deployment unit: a node set plus what to put on each node."""

    name: str
    nodes: list[NodeId]
    firmware: dict[RadioKind, str] = field(default_factory=dict)  # kind -> digest
    workload: str = ""  # digest, optional
    parameters: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nodes": [n.render() for n in self.nodes],
            "firmware": {k.value: d for k, d in sorted(self.firmware.items())},
            "workload": self.workload,
            "parameters": dict(sorted(self.parameters.items())),
        }

    @staticmethod
    def from_dict(data: dict) -> "Configuration":
        return Configuration(
            name=data["name"],
            nodes=[NodeId.parse(n) for n in data["nodes"]],
            firmware={RadioKind(k): d for k, d in data.get("firmware", {}).items()},
            workload=data.get("workload", ""),
            parameters=dict(data.get("parameters", {})),
        )


@dataclass
class Experiment:
    id: str
    project: str
    configurations: list[Configuration]
    state: ExperimentState = ExperimentState.DRAFT
    submitted_at: float = 0.0
    start_minute: Optional[int] = None  # minutes since epoch
    duration_minutes: int = 0
    created_by: str = ""
    failure_reason: str = ""
    validation: ValidationVerdict = ValidationVerdict.PENDING
    validation_report: str = ""
    results_ref: str = ""

    def nodes(self) -> list[NodeId]:
        seen: list[NodeId] = []
        for cfg in self.configurations:
            for node in cfg.nodes:
                if node not in seen:
                    seen.append(node)
        return seen

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "project": self.project,
            "configurations": [c.to_dict() for c in self.configurations],
            "state": self.state.value,
            "submitted_at": self.submitted_at,
            "start_minute": self.start_minute,
            "duration_minutes": self.duration_minutes,
            "created_by": self.created_by,
            "failure_reason": self.failure_reason,
            "validation": self.validation.value,
            "validation_report": self.validation_report,
            "results_ref": self.results_ref,
        }

    @staticmethod
    def from_dict(data: dict) -> "Experiment":
        return Experiment(
            id=data["id"],
            project=data["project"],
            configurations=[Configuration.from_dict(c) for c in data["configurations"]],
            state=ExperimentState(data["state"]),
            submitted_at=data["submitted_at"],
            start_minute=data["start_minute"],
            duration_minutes=data["duration_minutes"],
            created_by=data.get("created_by", ""),
            failure_reason=data.get("failure_reason", ""),
            validation=ValidationVerdict(data.get("validation", "Pending")),
            validation_report=data.get("validation_report", ""),
            results_ref=data.get("results_ref", ""),
        )


# --------------------------------------------------------------------------
# Samples and quality

class Quality(str, Enum):
    OK = "ok"
    STALE = "stale"
    FAULT = "fault"


@dataclass(frozen=True)
class SensorSample:
    node: str
    metric: str
    sensor: str
    ts: float
    value: float
    unit: str
    quality: Quality = Quality.OK

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "metric": self.metric,
            "sensor": self.sensor,
            "ts": self.ts,
            "value": self.value,
            "unit": self.unit,
            "quality": self.quality.value,
        }

    @staticmethod
    def from_dict(data: dict) -> "SensorSample":
        return SensorSample(
            node=data["node"], metric=data["metric"], sensor=data["sensor"],
            ts=data["ts"], value=data["value"], unit=data["unit"],
            quality=Quality(data.get("quality", "ok")),
        )


# --------------------------------------------------------------------------
# Canonical encoding

def canonical_json(obj) -> str:
    """The one true serialization: sorted keys, compact, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def canonical_bytes(obj) -> bytes:
    return canonical_json(obj).encode("utf-8")
