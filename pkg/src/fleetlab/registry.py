"""Content-addressed artifact registry with a vetting pipeline.

Blobs are stored under ``artifacts/<sha256>`` and metadata is journaled.
Every new digest enters the scan pipeline Pending and moves exactly once
to Clean or Vulnerable; the verdict is permanent for that digest.  A
Vulnerable artifact stays unusable until an administrator overrides it,
which is recorded for audit.

The default scanner is deliberately simple: a configurable denylist of
byte signatures, plus a manifest policy for workload bundles (no
privileged host access, requested devices must be within the grantable
set).  Scanners are pluggable via the constructor.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import errors
from .clock import EventScheduler
from .config import PlatformConfig
from .journal import Journal
from .model import Artifact, ArtifactKind, ScanStatus

# scanner(artifact, data) -> (verdict, detail)
Scanner = Callable[[Artifact, bytes], tuple[ScanStatus, str]]


@dataclass
class WorkloadBundle:
    manifest: dict
    program: list[dict]
    repeat: bool = False
    files: dict = field(default_factory=dict)


_WORKLOAD_OPS = {"log", "sleep", "open_serial", "publish", "power_profile"}


def make_workload_bundle(*, entrypoint: str, arch: str, devices: list[str],
                         program: list[dict], env: Optional[dict] = None,
                         privileged: bool = False, repeat: bool = False,
                         files: Optional[dict] = None) -> bytes:
    """Assemble workload bundle bytes (documented in docs/formats.md)."""
    doc = {
        "manifest": {
            "entrypoint": entrypoint,
            "arch": arch,
            "devices": devices,
            "env": env or {},
            "privileged": privileged,
        },
        "program": program,
        "repeat": repeat,
        "files": files or {},
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def parse_workload_bundle(data: bytes) -> WorkloadBundle:
    doc = json.loads(data.decode("utf-8"))
    manifest = doc["manifest"]
    for key in ("entrypoint", "arch", "devices"):
        if key not in manifest:
            raise ValueError(f"manifest missing {key}")
    program = doc.get("program", [])
    for step in program:
        if step.get("op") not in _WORKLOAD_OPS:
            raise ValueError(f"unknown workload op: {step.get('op')!r}")
    manifest.setdefault("env", {})
    manifest.setdefault("privileged", False)
    return WorkloadBundle(manifest=manifest, program=program,
                          repeat=bool(doc.get("repeat", False)),
                          files=doc.get("files", {}))


def default_scanner(config: PlatformConfig) -> Scanner:
    signatures = [(sig, bytes.fromhex(sig)) for sig in config.denylist_signatures]
    grantable = set(config.grantable_devices)

    def scan(artifact: Artifact, data: bytes) -> tuple[ScanStatus, str]:
        for hex_sig, raw in signatures:
            if raw in data:
                return ScanStatus.VULNERABLE, f"denylisted signature {hex_sig}"
        if artifact.kind is ArtifactKind.WORKLOAD:
            try:
                bundle = parse_workload_bundle(data)
            except Exception as exc:
                return ScanStatus.VULNERABLE, f"unreadable bundle: {exc}"
            if bundle.manifest.get("privileged"):
                return ScanStatus.VULNERABLE, "manifest requests privileged host access"
            rogue = sorted(set(bundle.manifest.get("devices", [])) - grantable)
            if rogue:
                return ScanStatus.VULNERABLE, f"devices outside grant: {', '.join(rogue)}"
        return ScanStatus.CLEAN, ""

    return scan


class ArtifactRegistry:
    def __init__(self, config: PlatformConfig, sched: Optional[EventScheduler],
                 data_dir: Optional[str | Path] = None,
                 journal: Optional[Journal] = None,
                 scanner: Optional[Scanner] = None):
        self.config = config
        self.sched = sched
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.scanner = scanner if scanner is not None else default_scanner(config)
        self._artifacts: dict[str, Artifact] = {}
        self._blobs: dict[str, bytes] = {}
        self._behaviors: dict[str, dict] = {}
        if journal is not None:
            self.journal = journal
        elif self.data_dir is not None:
            self.journal = Journal(self.data_dir / "registry.jsonl")
        else:
            self.journal = Journal()
        self._replay()

    # ------------------------------------------------------------ storage

    def _blob_path(self, digest: str) -> Optional[Path]:
        if self.data_dir is None:
            return None
        return self.data_dir / "artifacts" / digest

    def blob(self, digest: str) -> bytes:
        if digest in self._blobs:
            return self._blobs[digest]
        path = self._blob_path(digest)
        if path is not None and path.exists():
            data = path.read_bytes()
            self._blobs[digest] = data
            return data
        raise errors.UnknownEntity(f"no blob for {digest}")

    def _replay(self) -> None:
        for record in self.journal.replay():
            if record["type"] == "artifact":
                art = Artifact(
                    digest=record["digest"], kind=ArtifactKind(record["kind"]),
                    target=record["target"], size=record["size"],
                    project=record["project"], uploaded_by=record["uploaded_by"],
                    name=record.get("name", ""),
                )
                self._artifacts[art.digest] = art
                if record.get("behavior") is not None:
                    self._behaviors[art.digest] = record["behavior"]
            elif record["type"] == "verdict":
                art = self._artifacts.get(record["digest"])
                if art is not None:
                    art.scan = ScanStatus(record["scan"])
                    art.scan_detail = record.get("detail", "")
            elif record["type"] == "override":
                art = self._artifacts.get(record["digest"])
                if art is not None:
                    art.override = True
                    art.override_by = record["admin"]

    # ------------------------------------------------------------- public

    def upload(self, *, project: str, kind: ArtifactKind, target: str,
               data: bytes, uploaded_by: str, name: str = "",
               firmware_behavior: Optional[dict] = None) -> Artifact:
        if len(data) > self.config.max_artifact_bytes:
            raise errors.TooLarge(
                f"{len(data)} bytes exceeds cap {self.config.max_artifact_bytes}")
        digest = hashlib.sha256(data).hexdigest()
        existing = self._artifacts.get(digest)
        if existing is not None:
            # Same content: same artifact, and the verdict already stands.
            return existing
        art = Artifact(digest=digest, kind=kind, target=target, size=len(data),
                       project=project, uploaded_by=uploaded_by, name=name)
        self._artifacts[digest] = art
        self._blobs[digest] = data
        path = self._blob_path(digest)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        record = {"type": "artifact", **art.to_dict()}
        if firmware_behavior is not None:
            self._behaviors[digest] = firmware_behavior
            record["behavior"] = firmware_behavior
        self.journal.append(record)
        if self.sched is not None and self.config.scan_latency_s > 0:
            self.sched.after(self.config.scan_latency_s,
                             lambda: self.scan_now(digest))
        else:
            self.scan_now(digest)
        return art

    def scan_now(self, digest: str) -> bool:
        """Run the scanner once; False when a verdict already exists."""
        art = self.get(digest)
        if art.scan is not ScanStatus.PENDING:
            return False
        try:
            verdict, detail = self.scanner(art, self.blob(digest))
        except Exception as exc:
            art.scan_detail = f"scanner unavailable: {exc}"
            return False
        art.scan = verdict
        art.scan_detail = detail
        self.journal.append({"type": "verdict", "digest": digest,
                             "scan": verdict.value, "detail": detail})
        return True

    def get(self, digest: str) -> Artifact:
        art = self._artifacts.get(digest)
        if art is None:
            raise errors.UnknownEntity(f"no artifact {digest}")
        return art

    def exists(self, digest: str) -> bool:
        return digest in self._artifacts

    def list_for_project(self, project: str) -> list[Artifact]:
        return [a for a in self._artifacts.values()
                if a.project in ("", project)]

    def override(self, digest: str, admin_id: str) -> Artifact:
        art = self.get(digest)
        if art.scan is not ScanStatus.VULNERABLE:
            raise errors.NotVulnerable(
                f"{digest} is {art.scan.value}, not Vulnerable")
        art.override = True
        art.override_by = admin_id
        self.journal.append({"type": "override", "digest": digest,
                             "admin": admin_id})
        return art

    def behavior_of(self, digest: str) -> Optional[dict]:
        self.get(digest)
        return self._behaviors.get(digest)
