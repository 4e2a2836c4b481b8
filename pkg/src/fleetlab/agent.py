"""Per-node agent: the process that owns a node's radios, sensors, and
workload sandbox.

The agent speaks two channels.  Upward it publishes on the bus: ambient
sensor samples on a poll loop, heartbeat analytics every minute, workload
stdout and serial captures to the experiment log topics, and power-trace
chunks with an acknowledged-delivery buffer.  Downward it accepts control
requests (flash, start/stop workload, reset, ...) that are idempotent by
request id, so a retried command never executes twice.

Workloads run as interpreted programs in a sandbox: a step list over the
ops log / sleep / open_serial / publish / power_profile, with $VAR
substitution from the manifest env, the experiment parameters, and the
built-ins EXPERIMENT_ID / NODE_ID.  A workload touching a device its
manifest never declared faults immediately; a workload publishing outside
its own topic namespace is refused by the bus (and the violation recorded)
but keeps running.
"""

from __future__ import annotations

from collections import deque
from string import Template
from typing import Optional

from . import errors
from .clock import DEFAULT_EPOCH, EventScheduler
from .config import PlatformConfig
from .dataplane.broker import Broker
from .dataplane.power import PowerChunk, encode_chunk
from .hardware.channel import RadioEnvironment
from .hardware.radios import (DEFAULT_PROFILES, DUMMY_BEHAVIOR,
                              FirmwareBehavior, RadioRuntime, sample_currents)
from .hardware.sensors import DEFAULT_STREAMS, SensorModel, SensorStream
from .model import (ArtifactKind, Node, RadioKind, SensorSample,
                    AgentStateKind, canonical_bytes)
from .registry import ArtifactRegistry, make_workload_bundle, parse_workload_bundle

# Manifest device names -> radio kinds a workload may touch.
DEVICE_KINDS = {
    "nrf52840": RadioKind.NRF52840,
    "cc1310": RadioKind.CC1310,
    "lora_gateway": RadioKind.LORA_GATEWAY,
}

WORKLOAD_ACTIVE = ("running", "stopping")


def ensure_base_artifacts(registry: ArtifactRegistry) -> dict:
    """Upload the platform's stock artifacts (idempotent by content).

    Factory firmware images (the radios sleep) plus two reusable
    workloads: a serial logger that captures firmware output, and a power
    profiler that streams current-draw traces.  Both take a DEVICE
    parameter selecting the radio.
    """
    firmware: dict[RadioKind, str] = {}
    for kind in (RadioKind.NRF52840, RadioKind.CC1310, RadioKind.LORA_GATEWAY):
        art = registry.upload(
            project="", kind=ArtifactKind.FIRMWARE, target=kind.value,
            data=f"factory image {kind.value}\n".encode("utf-8"),
            uploaded_by="platform", name=f"factory-{kind.value.lower()}",
            firmware_behavior=DUMMY_BEHAVIOR.to_dict())
        firmware[kind] = art.digest

    logger = make_workload_bundle(
        entrypoint="serial-logger", arch="ARM32",
        devices=["nrf52840", "cc1310"],
        program=[
            {"op": "log", "line": "serial logger up on $DEVICE"},
            {"op": "open_serial", "device": "$DEVICE"},
            {"op": "sleep", "ms": 60000},
        ],
        env={"DEVICE": "nrf52840"}, repeat=True)
    profiler = make_workload_bundle(
        entrypoint="power-profiler", arch="ARM32",
        devices=["nrf52840", "cc1310"],
        program=[
            {"op": "log", "line": "profiling $DEVICE"},
            {"op": "power_profile", "device": "$DEVICE"},
            {"op": "sleep", "ms": 60000},
        ],
        env={"DEVICE": "nrf52840"}, repeat=True)
    workloads = {}
    for name, data in (("serial-logger", logger), ("power-profiler", profiler)):
        art = registry.upload(project="", kind=ArtifactKind.WORKLOAD,
                              target="ARM32", data=data,
                              uploaded_by="platform", name=name)
        workloads[name] = art.digest
    return {"firmware": firmware, "workloads": workloads}


class WorkloadRun:
    """One sandboxed workload execution on one node."""

    def __init__(self, agent: "NodeAgent", experiment: str, digest: str,
                 bundle, parameters: dict):
        self.agent = agent
        self.experiment = experiment
        self.digest = digest
        self.bundle = bundle
        self.state = "running"
        self.exit_code: Optional[int] = None
        env_map = dict(bundle.manifest.get("env", {}))
        env_map.update(parameters)
        env_map["EXPERIMENT_ID"] = experiment
        env_map["NODE_ID"] = agent.id
        self.env_map = env_map
        self.identity = f"workload:{experiment}:{agent.id}"
        self._serial_cbs: dict[RadioRuntime, object] = {}
        self._gen = 0
        self._step(list(bundle.program), 0, self._gen)

    # ------------------------------------------------------------ helpers

    def _sub(self, text) -> str:
        return Template(str(text)).safe_substitute(self.env_map)

    def stdout(self, line: str) -> None:
        self.agent._publish_log(self.experiment, "stdout", line)

    def _device_kind(self, device: str) -> RadioKind:
        kind = DEVICE_KINDS.get(device)
        if kind is None or kind not in self.agent.radios:
            raise errors.UnknownDevice(f"no device {device!r} on {self.agent.id}")
        if device not in self.bundle.manifest.get("devices", []):
            raise errors.DeviceDenied(
                f"{device} was not declared in the workload manifest")
        return kind

    def _open_serial(self, device: str) -> None:
        kind = self._device_kind(device)
        runtime = self.agent.radios[kind]
        if runtime in self._serial_cbs:
            return  # already ours; repeat cycles re-run the op harmlessly
        if runtime.serial_cb is not None:
            raise errors.Busy(f"serial port {device} already attached")

        def forward(ts: float, line: str, _kind=kind) -> None:
            self.agent._publish_log(self.experiment,
                                    f"serial:{_kind.value}", line)

        runtime.serial_cb = forward
        self._serial_cbs[runtime] = forward

    # ----------------------------------------------------------- lifecycle

    def _teardown(self) -> None:
        self._gen += 1
        for runtime, cb in self._serial_cbs.items():
            if runtime.serial_cb is cb:
                runtime.serial_cb = None
        self._serial_cbs.clear()
        self.agent.stop_power(self.experiment)
        self.agent._refresh_state()

    def _exit(self, code: int) -> None:
        self.state = "exited"
        self.exit_code = code
        self._teardown()

    def _fault(self, err: errors.FleetError) -> None:
        self.state = "faulted"
        self.exit_code = 1
        self.stdout(f"error: {err.code}: {err}")
        self._teardown()

    def stop(self, grace_s: float) -> None:
        if self.state == "running":
            self.state = "stopping"
            self.agent.sched.after(grace_s, self._halt)

    def _halt(self) -> None:
        if self.state == "stopping":
            self.state = "stopped"
            self._teardown()

    # ------------------------------------------------------------- program

    def _step(self, program: list[dict], index: int, gen: int) -> None:
        if gen != self._gen or self.state not in WORKLOAD_ACTIVE:
            return
        while True:
            if index >= len(program):
                if self.bundle.repeat:
                    index = 0
                    continue
                self._exit(0)
                return
            step = program[index]
            index += 1
            op = step.get("op")
            try:
                if op == "log":
                    self.stdout(self._sub(step.get("line", "")))
                elif op == "open_serial":
                    self._open_serial(self._sub(step.get("device", "")))
                elif op == "publish":
                    topic = self._sub(step.get("topic", ""))
                    payload = self._sub(step.get("payload", "")).encode("utf-8")
                    try:
                        self.agent.broker.publish(self.identity, topic,
                                                  payload,
                                                  qos=int(step.get("qos", 0)))
                    except (errors.AclDenied, ValueError):
                        self.stdout(f"publish denied: {topic}")
                elif op == "power_profile":
                    kind = self._device_kind(self._sub(step.get("device", "")))
                    self.agent.start_power(self.experiment, kind)
                elif op == "sleep":
                    delay = int(step.get("ms", 0)) / 1000.0
                    self.agent.sched.after(
                        delay,
                        lambda p=program, i=index, g=gen: self._step(p, i, g))
                    return
            except errors.FleetError as err:
                self._fault(err)
                return


class _PowerStream:
    """Chunked power-trace publisher with a bounded retry buffer.

    Every chunk interval the stream closes a chunk over the last window and
    tries to flush the buffer in order over qos1.  Unacknowledged chunks
    stay buffered (retried next tick, ~1s); past the high-water mark the
    oldest chunk is dropped and the loss recorded.
    """

    def __init__(self, agent: "NodeAgent", experiment: str,
                 runtime: RadioRuntime):
        self.agent = agent
        self.experiment = experiment
        self.runtime = runtime
        self.topic = (f"experiments/{experiment}/power/"
                      f"{agent.id}/{runtime.kind.value}")
        self.seq = 0
        self.buffer: deque[PowerChunk] = deque()
        self.handle = agent.sched.every(agent.config.power_chunk_s, self._tick)

    def _tick(self) -> None:
        cfg = self.agent.config
        now = self.agent.sched.now
        samples = sample_currents(self.runtime, now - cfg.power_chunk_s, now,
                                  cfg.power_sample_rate_hz)
        self.buffer.append(PowerChunk(
            experiment=self.experiment, node=self.agent.id,
            radio=self.runtime.kind.value, seq=self.seq,
            t0=now - cfg.power_chunk_s, rate_hz=cfg.power_sample_rate_hz,
            samples=samples))
        self.seq += 1
        self.flush()
        while len(self.buffer) > cfg.power_high_water_chunks:
            dropped = self.buffer.popleft()
            self.agent.power_dropped += 1
            self.agent.drop_events.append({
                "experiment": self.experiment, "node": self.agent.id,
                "radio": self.runtime.kind.value, "seq": dropped.seq,
                "t0": dropped.t0,
            })

    def flush(self) -> None:
        if not self.agent.online:
            return
        while self.buffer:
            data = encode_chunk(self.buffer[0])
            try:
                acked = self.agent.broker.publish(self.agent.identity,
                                                  self.topic, data, qos=1)
            except errors.AclDenied:
                acked = False
            if not acked:
                break
            self.buffer.popleft()

    def stop(self, flush: bool = True) -> None:
        self.handle.cancel()
        if flush:
            self.flush()
        self.buffer.clear()


class NodeAgent:
    def __init__(self, node: Node, *, env: RadioEnvironment, broker: Broker,
                 sched: EventScheduler, config: PlatformConfig,
                 registry: ArtifactRegistry,
                 factory_firmware: dict[RadioKind, str],
                 streams: Optional[list[SensorStream]] = None,
                 seed: str = "fleet", drift_origin: float = DEFAULT_EPOCH):
        self.node = node
        self.id = node.id.render()
        self.identity = f"agent:{self.id}"
        self.env = env
        self.broker = broker
        self.sched = sched
        self.config = config
        self.registry = registry
        self.online = True

        self.radios: dict[RadioKind, RadioRuntime] = {}
        for kind in node.radio_kinds():
            self.radios[kind] = env.add_radio(self.id, kind, node.position,
                                              DEFAULT_PROFILES[kind])
        self.factory = {kind: factory_firmware.get(kind, "")
                        for kind in self.radios}
        self.flashed: dict[RadioKind, str] = {}
        for kind, runtime in self.radios.items():
            digest = self.factory[kind]
            runtime.start_behavior(self._behavior_for(digest), digest)
            self.flashed[kind] = digest

        self.sensors = [
            SensorModel(s, seed=f"{seed}:{self.id}:{s.metric}:{s.sensor}",
                        drift_origin=drift_origin)
            for s in (DEFAULT_STREAMS if streams is None else streams)]

        self.poll_interval_s = config.poll_interval_s
        self.reserved_by: Optional[str] = None
        self.workloads: dict[str, WorkloadRun] = {}
        self.power: dict[tuple[str, RadioKind], _PowerStream] = {}
        self.power_dropped = 0
        self.drop_events: list[dict] = []
        self._flashing: set[RadioKind] = set()
        self._resetting = False
        self._reset_done = 0.0
        self._responses: dict[str, dict] = {}
        self._boot_time = sched.now
        sched.every(config.poll_interval_s, self._poll_tick)
        sched.every(config.heartbeat_interval_s, self._heartbeat_tick)

    # ------------------------------------------------------------ plumbing

    def _behavior_for(self, digest: str) -> FirmwareBehavior:
        if digest and self.registry.exists(digest):
            raw = self.registry.behavior_of(digest)
            if raw:
                return FirmwareBehavior.from_dict(raw)
        return DUMMY_BEHAVIOR

    def _refresh_state(self) -> None:
        if not self.online:
            return  # the heartbeat monitor owns the Offline marker
        if self._resetting:
            state = AgentStateKind.RESETTING
        elif any(r.state in WORKLOAD_ACTIVE for r in self.workloads.values()):
            state = AgentStateKind.BUSY
        elif self.reserved_by:
            state = AgentStateKind.RESERVED
        else:
            state = AgentStateKind.IDLE
        self.node.state = state

    def _publish_log(self, experiment: str, stream: str, line: str) -> None:
        payload = canonical_bytes({"ts": self.sched.now, "node": self.id,
                                   "stream": stream, "line": line})
        try:
            self.broker.publish(self.identity,
                                f"experiments/{experiment}/logs/{self.id}",
                                payload, qos=1)
        except errors.AclDenied:
            pass

    def set_offline(self, flag: bool) -> None:
        self.online = not flag
        if self.online:
            self._refresh_state()

    # --------------------------------------------------------------- loops

    def _poll_tick(self) -> float:
        if self.online:
            t = self.sched.now
            for model in self.sensors:
                value, quality = model.read(t)
                s = model.stream
                sample = SensorSample(node=self.id, metric=s.metric,
                                      sensor=s.sensor, ts=t, value=value,
                                      unit=s.unit, quality=quality)
                try:
                    self.broker.publish(
                        self.identity,
                        f"nodes/{self.id}/sensors/{s.metric}",
                        canonical_bytes(sample.to_dict()), qos=0)
                except errors.AclDenied:
                    pass
        return self.poll_interval_s

    def _heartbeat_tick(self) -> None:
        if not self.online:
            return
        beat = {
            "node": self.id,
            "ts": self.sched.now,
            "uptime_s": self.sched.now - self._boot_time,
            "state": self.node.state.value,
            "workloads": sorted(e for e, r in self.workloads.items()
                                if r.state in WORKLOAD_ACTIVE),
            "power_buffered": sum(len(s.buffer) for s in self.power.values()),
            "power_dropped": self.power_dropped,
            "flashed": {k.value: d for k, d in sorted(self.flashed.items())},
        }
        try:
            self.broker.publish(self.identity, f"nodes/{self.id}/analytics",
                                canonical_bytes(beat), qos=0)
        except errors.AclDenied:
            pass

    # --------------------------------------------------------------- power

    def start_power(self, experiment: str, kind: RadioKind) -> None:
        key = (experiment, kind)
        if key in self.power:
            return
        runtime = self.radios.get(kind)
        if runtime is None:
            raise errors.UnknownDevice(f"no {kind.value} radio on {self.id}")
        self.power[key] = _PowerStream(self, experiment, runtime)

    def stop_power(self, experiment: Optional[str], flush: bool = True) -> None:
        for key in list(self.power):
            if experiment is None or key[0] == experiment:
                self.power.pop(key).stop(flush=flush)

    # ------------------------------------------------------------- control

    def serve_control(self, request: dict) -> dict:
        if not self.online:
            raise errors.AgentUnreachable(f"{self.id} is unreachable")
        rid = request.get("request_id")
        if rid is not None and rid in self._responses:
            return dict(self._responses[rid])
        op = request.get("op", "")
        handler = getattr(self, f"_op_{op}", None)
        try:
            if handler is None:
                raise errors.UnknownEntity(f"no control op {op!r}")
            resp = handler(request)
        except errors.FleetError as err:
            resp = {"ok": False, "error": err.code, "message": str(err)}
        if rid is not None:
            self._responses[rid] = dict(resp)
        return resp

    def _op_status(self, request: dict) -> dict:
        return {
            "ok": True,
            "node": self.id,
            "state": self.node.state.value,
            "flashed": {k.value: d for k, d in sorted(self.flashed.items())},
            "workloads": {e: r.state for e, r in sorted(self.workloads.items())},
            "poll_interval_s": self.poll_interval_s,
            "reserved_by": self.reserved_by,
            "uptime_s": self.sched.now - self._boot_time,
            "power_buffered": sum(len(s.buffer) for s in self.power.values()),
            "power_dropped": self.power_dropped,
        }

    def _op_assign(self, request: dict) -> dict:
        self.reserved_by = request.get("experiment") or None
        self._refresh_state()
        return {"ok": True}

    def _op_set_poll_interval(self, request: dict) -> dict:
        seconds = float(request["seconds"])
        if seconds <= 0:
            raise errors.InvalidConfig("poll interval must be positive")
        self.poll_interval_s = seconds
        return {"ok": True}

    def _op_flash(self, request: dict) -> dict:
        try:
            kind = RadioKind(request.get("radio", ""))
        except ValueError:
            raise errors.UnknownDevice(f"no radio kind {request.get('radio')!r}")
        runtime = self.radios.get(kind)
        if runtime is None:
            raise errors.UnknownDevice(f"no {kind.value} radio on {self.id}")
        if not self.reserved_by or request.get("experiment") != self.reserved_by:
            raise errors.NotReserved(
                f"{self.id} is not reserved by {request.get('experiment')!r}")
        art = self.registry.get(request["digest"])
        if art.kind is not ArtifactKind.FIRMWARE or art.target != kind.value:
            raise errors.TargetMismatch(
                f"artifact targets {art.kind.value}/{art.target}, "
                f"not firmware for {kind.value}")
        if self._resetting or kind in self._flashing:
            raise errors.Busy(f"{kind.value} on {self.id} is busy")
        self._flashing.add(kind)
        done = self.sched.now + self.config.flash_latency_s

        def finish():
            self._flashing.discard(kind)
            if self._resetting:
                return  # reset will reimage this radio anyway
            runtime.start_behavior(self._behavior_for(art.digest), art.digest)
            self.flashed[kind] = art.digest

        self.sched.at(done, finish)
        return {"ok": True, "completed_at": done}

    def _op_start_workload(self, request: dict) -> dict:
        experiment = request["experiment"]
        if not self.reserved_by or experiment != self.reserved_by:
            raise errors.NotReserved(
                f"{self.id} is not reserved by {experiment!r}")
        existing = self.workloads.get(experiment)
        if existing is not None and existing.state in WORKLOAD_ACTIVE:
            raise errors.Busy(f"workload already running for {experiment}")
        art = self.registry.get(request["digest"])
        if art.kind is not ArtifactKind.WORKLOAD:
            raise errors.TargetMismatch(f"{art.digest} is not a workload")
        if art.target == "ARM64" and not self.node.cls.has_edge_compute:
            raise errors.StartFailure(
                f"ARM64 workload needs edge compute; {self.id} has none")
        try:
            bundle = parse_workload_bundle(self.registry.blob(art.digest))
        except ValueError as exc:
            raise errors.StartFailure(f"unreadable bundle: {exc}")
        if bundle.repeat and not any(
                s.get("op") == "sleep" and int(s.get("ms", 0)) > 0
                for s in bundle.program):
            raise errors.StartFailure("repeating program must sleep")
        run = WorkloadRun(self, experiment, art.digest, bundle,
                          dict(request.get("parameters", {})))
        self.workloads[experiment] = run
        self._refresh_state()
        return {"ok": True}

    def _op_stop_workload(self, request: dict) -> dict:
        run = self.workloads.get(request["experiment"])
        if run is None or run.state not in WORKLOAD_ACTIVE:
            return {"ok": True, "completed_at": self.sched.now}
        if run.state == "running":
            run.stop(self.config.stop_grace_s)
        return {"ok": True,
                "completed_at": self.sched.now + self.config.stop_grace_s}

    def _op_reset(self, request: dict) -> dict:
        if self._resetting:
            return {"ok": True, "completed_at": self._reset_done}
        self._resetting = True
        active = [r for r in self.workloads.values()
                  if r.state in WORKLOAD_ACTIVE]
        grace = self.config.stop_grace_s if active else 0.0
        for run in active:
            run.stop(self.config.stop_grace_s)
        done = self.sched.now + grace + self.config.flash_latency_s

        def finish():
            for run in list(self.workloads.values()):
                if run.state in WORKLOAD_ACTIVE:
                    run.state = "stopping"
                    run._halt()
            self.workloads.clear()
            self.stop_power(None, flush=False)
            for kind, runtime in self.radios.items():
                digest = self.factory[kind]
                runtime.start_behavior(self._behavior_for(digest), digest)
                self.flashed[kind] = digest
            self._flashing.clear()
            self.poll_interval_s = self.config.poll_interval_s
            self.reserved_by = None
            self._resetting = False
            self._refresh_state()

        self.sched.at(done, finish)
        self._reset_done = done
        self._refresh_state()
        return {"ok": True, "completed_at": done}

    # ------------------------------------------------------------- checks

    def verify_factory(self) -> tuple[bool, list[str]]:
        issues = []
        if self.flashed != self.factory:
            issues.append("firmware differs from the factory images")
        if any(r.state in WORKLOAD_ACTIVE for r in self.workloads.values()):
            issues.append("a workload is still active")
        if self.power:
            issues.append("power streaming is still active")
        if self.poll_interval_s != self.config.poll_interval_s:
            issues.append("poll interval was modified")
        if self.reserved_by:
            issues.append("still assigned to an experiment")
        return (not issues, issues)
