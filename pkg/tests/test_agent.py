"""Node agent behaviour: polling, heartbeats, control ops, workloads, power.

Timing oracles are derived by hand from the default config: polls fire at
t0+30,60,...; heartbeats at 60s; a flash takes 5s; power chunks close every
second.  All tests run on a virtual clock started at t=0 for readable
arithmetic.
"""

import json
from types import SimpleNamespace

import pytest

from fleetlab import errors
from fleetlab.agent import NodeAgent, ensure_base_artifacts
from fleetlab.clock import EventScheduler
from fleetlab.config import PlatformConfig
from fleetlab.dataplane.broker import Broker
from fleetlab.dataplane.collector import SensorCollector
from fleetlab.dataplane.logs import LogStore
from fleetlab.dataplane.power import PowerStore
from fleetlab.dataplane.tsdb import TimeSeriesStore
from fleetlab.hardware.channel import RadioEnvironment
from fleetlab.model import ArtifactKind, NodeId, Node, Position, RadioKind
from fleetlab.registry import ArtifactRegistry, make_workload_bundle


BEACON_BEHAVIOR = {
    "setup": [],
    "loop": [
        {"op": "log", "line": "beacon tx"},
        {"op": "tx", "ms": 100, "payload": "b"},
        {"op": "sleep", "ms": 900},
    ],
}


def make_rig(tmp_path, node_id="RSE-001"):
    sched = EventScheduler(start=0.0)
    config = PlatformConfig()
    config.scan_latency_s = 0.0  # verdicts land synchronously on upload
    broker = Broker()
    env = RadioEnvironment(sched, seed=config.channel_seed)
    registry = ArtifactRegistry(config, sched)
    base = ensure_base_artifacts(registry)
    node = Node(NodeId.parse(node_id), Position(0.0, 0.0))
    agent = NodeAgent(node, env=env, broker=broker, sched=sched,
                      config=config, registry=registry,
                      factory_firmware=base["firmware"])
    store = TimeSeriesStore(tmp_path / "ts")
    collector = SensorCollector(broker, store)
    collector.start()
    logstore = LogStore()

    def on_log(topic, payload):
        segs = topic.split("/")
        entry = json.loads(payload.decode("utf-8"))
        logstore.append(segs[1], entry["node"], entry["ts"],
                        entry["stream"], entry["line"])

    broker.subscribe("experiments/+/logs/+", on_log)
    power = PowerStore()
    broker.subscribe("experiments/+/power/+/+", power.on_message)
    return SimpleNamespace(sched=sched, config=config, broker=broker, env=env,
                           registry=registry, base=base, node=node,
                           agent=agent, store=store, collector=collector,
                           logstore=logstore, power=power)


def upload_firmware(rig, kind=RadioKind.NRF52840, behavior=None,
                    data=b"custom firmware v1\n"):
    return rig.registry.upload(
        project="p1", kind=ArtifactKind.FIRMWARE, target=kind.value,
        data=data, uploaded_by="u1", name="custom",
        firmware_behavior=behavior or BEACON_BEHAVIOR)


def ctl(rig, op, rid=None, **params):
    req = {"op": op, **params}
    if rid is not None:
        req["request_id"] = rid
    return rig.agent.serve_control(req)


# ------------------------------------------------------------------ boot

def test_boot_is_factory_state(tmp_path):
    rig = make_rig(tmp_path)
    ok, issues = rig.agent.verify_factory()
    assert ok, issues
    assert rig.agent.flashed == {k: rig.base["firmware"][k]
                                 for k in rig.agent.radios}
    resp = ctl(rig, "status")
    assert resp["ok"]
    assert resp["state"] == "Idle"
    assert resp["flashed"]["NRF52840"] == rig.base["firmware"][RadioKind.NRF52840]
    assert resp["workloads"] == {}


def test_base_artifacts_are_clean_and_idempotent(tmp_path):
    rig = make_rig(tmp_path)
    again = ensure_base_artifacts(rig.registry)
    assert again == rig.base
    for digest in again["firmware"].values():
        assert rig.registry.get(digest).usable
    for digest in again["workloads"].values():
        assert rig.registry.get(digest).usable


# --------------------------------------------------------------- polling

def test_poll_loop_publishes_all_streams(tmp_path):
    rig = make_rig(tmp_path)
    rig.sched.run_until(120.0)
    # polls at 30, 60, 90, 120 -> 4 rounds x 12 streams
    assert rig.collector.stored == 48
    temps = rig.store.query(nodes=["RSE-001"], metrics=["temperature"])
    assert [s.ts for s in temps] == [30.0, 60.0, 90.0, 120.0]
    assert len(rig.store.query(nodes=["RSE-001"], metrics=["pm2_5"])) == 8


def test_poll_interval_change_applies_next_cycle(tmp_path):
    rig = make_rig(tmp_path)
    rig.sched.run_until(45.0)
    resp = ctl(rig, "set_poll_interval", seconds=10.0)
    assert resp["ok"]
    rig.sched.run_until(100.0)
    temps = rig.store.query(nodes=["RSE-001"], metrics=["temperature"])
    # 30s cadence holds through the already-scheduled tick at 60, then 10s
    assert [s.ts for s in temps] == [30.0, 60.0, 70.0, 80.0, 90.0, 100.0]


def test_bus_outage_drops_that_cycle(tmp_path):
    rig = make_rig(tmp_path)
    rig.sched.run_until(40.0)
    rig.broker.online = False
    rig.sched.run_until(70.0)
    rig.broker.online = True
    rig.sched.run_until(120.0)
    temps = rig.store.query(nodes=["RSE-001"], metrics=["temperature"])
    assert [s.ts for s in temps] == [30.0, 90.0, 120.0]


# ------------------------------------------------------------- heartbeats

def test_heartbeats_every_minute(tmp_path):
    rig = make_rig(tmp_path)
    beats = []
    rig.broker.subscribe("nodes/+/analytics",
                         lambda t, p: beats.append(json.loads(p)))
    rig.sched.run_until(180.0)
    assert [b["ts"] for b in beats] == [60.0, 120.0, 180.0]
    assert beats[0]["node"] == "RSE-001"
    assert beats[-1]["uptime_s"] == 180.0
    assert beats[0]["state"] == "Idle"


def test_offline_silences_agent(tmp_path):
    rig = make_rig(tmp_path)
    beats = []
    rig.broker.subscribe("nodes/+/analytics",
                         lambda t, p: beats.append(json.loads(p)))
    rig.agent.set_offline(True)
    rig.sched.run_until(130.0)
    assert beats == []
    assert rig.collector.stored == 0
    with pytest.raises(errors.AgentUnreachable):
        ctl(rig, "status")
    rig.agent.set_offline(False)
    rig.sched.run_until(300.0)
    assert [b["ts"] for b in beats] == [180.0, 240.0, 300.0]


# ---------------------------------------------------------------- control

def test_control_is_idempotent_by_request_id(tmp_path):
    rig = make_rig(tmp_path)
    art = upload_firmware(rig)
    ctl(rig, "assign", experiment="exp-1")
    first = ctl(rig, "flash", rid="r1", radio="NRF52840",
                digest=art.digest, experiment="exp-1")
    assert first["ok"] and first["completed_at"] == 5.0
    again = ctl(rig, "flash", rid="r1", radio="NRF52840",
                digest=art.digest, experiment="exp-1")
    assert again == first
    rig.sched.run_until(20.0)
    runtime = rig.env.get("RSE-001", RadioKind.NRF52840)
    assert rig.agent.flashed[RadioKind.NRF52840] == art.digest
    # one boot flash + exactly one reflash
    assert runtime.generation == 2


def test_flash_validation_errors(tmp_path):
    rig = make_rig(tmp_path)
    art = upload_firmware(rig)  # targets NRF52840

    resp = ctl(rig, "flash", radio="NRF52840", digest=art.digest,
               experiment="exp-1")
    assert resp["ok"] is False
    assert resp["error"] == "not_reserved"

    ctl(rig, "assign", experiment="exp-1")
    resp = ctl(rig, "flash", radio="CC1310", digest=art.digest,
               experiment="exp-1")
    assert resp["error"] == "target_mismatch"

    resp = ctl(rig, "flash", radio="LoRaGateway", digest=art.digest,
               experiment="exp-1")
    assert resp["error"] == "unknown_device"  # RSE has no gateway radio

    resp = ctl(rig, "flash", radio="NRF52840", digest="0" * 64,
               experiment="exp-1")
    assert resp["error"] == "unknown_entity"


def test_concurrent_flash_same_radio_is_busy(tmp_path):
    rig = make_rig(tmp_path)
    nrf = upload_firmware(rig)
    cc = upload_firmware(rig, kind=RadioKind.CC1310, behavior=None,
                         data=b"cc1310 image\n")
    ctl(rig, "assign", experiment="exp-1")
    assert ctl(rig, "flash", radio="NRF52840", digest=nrf.digest,
               experiment="exp-1")["ok"]
    resp = ctl(rig, "flash", radio="NRF52840", digest=nrf.digest,
               experiment="exp-1")
    assert resp["error"] == "busy"
    # a different radio flashes in parallel
    assert ctl(rig, "flash", radio="CC1310", digest=cc.digest,
               experiment="exp-1")["ok"]
    rig.sched.run_until(10.0)
    assert rig.agent.flashed[RadioKind.NRF52840] == nrf.digest
    assert rig.agent.flashed[RadioKind.CC1310] == cc.digest


def test_flash_takes_effect_after_latency(tmp_path):
    rig = make_rig(tmp_path)
    art = upload_firmware(rig)
    ctl(rig, "assign", experiment="exp-1")
    factory = rig.base["firmware"][RadioKind.NRF52840]
    resp = ctl(rig, "flash", radio="NRF52840", digest=art.digest,
               experiment="exp-1")
    rig.sched.run_until(4.9)
    assert rig.agent.flashed[RadioKind.NRF52840] == factory
    rig.sched.run_until(5.0)
    assert rig.agent.flashed[RadioKind.NRF52840] == art.digest
    runtime = rig.env.get("RSE-001", RadioKind.NRF52840)
    assert runtime.firmware_digest == art.digest
    assert resp["completed_at"] == 5.0


# -------------------------------------------------------------- workloads

def test_serial_logger_captures_firmware_output(tmp_path):
    rig = make_rig(tmp_path)
    art = upload_firmware(rig)
    ctl(rig, "assign", experiment="exp-1")
    assert ctl(rig, "start_workload", experiment="exp-1",
               digest=rig.base["workloads"]["serial-logger"],
               parameters={})["ok"]
    rig.sched.run_for(2.0)
    ctl(rig, "flash", radio="NRF52840", digest=art.digest, experiment="exp-1")
    rig.sched.run_until(10.0)
    lines = rig.logstore.lines("exp-1", "RSE-001")
    stdout = [l for l in lines if l["stream"] == "stdout"]
    serial = [l for l in lines if l["stream"] == "serial:NRF52840"]
    assert stdout[0]["line"] == "serial logger up on nrf52840"
    # behavior lands at t=7; its loop logs at 7, 8, 9, 10
    assert [l["ts"] for l in serial] == [7.0, 8.0, 9.0, 10.0]
    assert all(l["line"] == "beacon tx" for l in serial)


def test_workload_program_logs_and_publishes(tmp_path):
    rig = make_rig(tmp_path)
    bundle = make_workload_bundle(
        entrypoint="app", arch="ARM32", devices=["nrf52840"],
        program=[
            {"op": "log", "line": "hello from $NODE_ID"},
            {"op": "sleep", "ms": 1500},
            {"op": "publish", "topic": "experiments/$EXPERIMENT_ID/app/out",
             "payload": "{\"n\": 1}"},
        ])
    art = rig.registry.upload(project="p1", kind=ArtifactKind.WORKLOAD,
                              target="ARM32", data=bundle, uploaded_by="u1")
    seen = []
    rig.broker.subscribe("experiments/+/app/#",
                         lambda t, p: seen.append((t, p)))
    ctl(rig, "assign", experiment="exp-9")
    assert ctl(rig, "start_workload", experiment="exp-9",
               digest=art.digest, parameters={})["ok"]
    rig.sched.run_until(5.0)
    run = rig.agent.workloads["exp-9"]
    assert run.state == "exited" and run.exit_code == 0
    stdout = rig.logstore.lines("exp-9", "RSE-001")
    assert stdout[0]["line"] == "hello from RSE-001"
    assert seen == [("experiments/exp-9/app/out", b"{\"n\": 1}")]


def test_workload_cross_experiment_publish_is_denied_not_fatal(tmp_path):
    rig = make_rig(tmp_path)
    bundle = make_workload_bundle(
        entrypoint="app", arch="ARM32", devices=[],
        program=[
            {"op": "publish", "topic": "alerts", "payload": "pwned"},
            {"op": "log", "line": "still alive"},
        ])
    art = rig.registry.upload(project="p1", kind=ArtifactKind.WORKLOAD,
                              target="ARM32", data=bundle, uploaded_by="u1")
    ctl(rig, "assign", experiment="exp-2")
    ctl(rig, "start_workload", experiment="exp-2", digest=art.digest,
        parameters={})
    rig.sched.run_until(1.0)
    assert rig.broker.violations == [
        {"identity": "workload:exp-2:RSE-001", "topic": "alerts"}]
    lines = rig.logstore.lines("exp-2", "RSE-001")
    assert any(l["line"] == "still alive" for l in lines)
    assert rig.agent.workloads["exp-2"].state == "exited"


def test_workload_undeclared_serial_faults(tmp_path):
    rig = make_rig(tmp_path)
    # cc1310 never declared in the manifest
    bundle = make_workload_bundle(
        entrypoint="app", arch="ARM32", devices=["nrf52840"],
        program=[{"op": "open_serial", "device": "cc1310"}])
    art = rig.registry.upload(project="p1", kind=ArtifactKind.WORKLOAD,
                              target="ARM32", data=bundle, uploaded_by="u1")
    ctl(rig, "assign", experiment="exp-3")
    ctl(rig, "start_workload", experiment="exp-3", digest=art.digest,
        parameters={})
    rig.sched.run_until(1.0)
    run = rig.agent.workloads["exp-3"]
    assert run.state == "faulted"
    lines = rig.logstore.lines("exp-3", "RSE-001")
    assert any("device_denied" in l["line"] for l in lines)


def test_arm64_workload_refused_on_sensor_node(tmp_path):
    rig = make_rig(tmp_path, node_id="RSS-001")
    bundle = make_workload_bundle(entrypoint="app", arch="ARM64", devices=[],
                                  program=[{"op": "log", "line": "hi"}])
    art = rig.registry.upload(project="p1", kind=ArtifactKind.WORKLOAD,
                              target="ARM64", data=bundle, uploaded_by="u1")
    ctl(rig, "assign", experiment="exp-4")
    resp = ctl(rig, "start_workload", experiment="exp-4", digest=art.digest,
               parameters={})
    assert resp["error"] == "start_failure"


def test_stop_workload_honours_grace(tmp_path):
    rig = make_rig(tmp_path)
    bundle = make_workload_bundle(
        entrypoint="app", arch="ARM32", devices=[],
        program=[{"op": "log", "line": "tick"}, {"op": "sleep", "ms": 1000}],
        repeat=True)
    art = rig.registry.upload(project="p1", kind=ArtifactKind.WORKLOAD,
                              target="ARM32", data=bundle, uploaded_by="u1")
    ctl(rig, "assign", experiment="exp-5")
    ctl(rig, "start_workload", experiment="exp-5", digest=art.digest,
        parameters={})
    rig.sched.run_until(3.5)
    resp = ctl(rig, "stop_workload", experiment="exp-5")
    assert resp["ok"] and resp["completed_at"] == 13.5
    run = rig.agent.workloads["exp-5"]
    assert run.state == "stopping"
    rig.sched.run_until(20.0)
    assert run.state == "stopped"
    # ticks at 0..13 inclusive (program kept running through the grace)
    ticks = [l for l in rig.logstore.lines("exp-5", "RSE-001")
             if l["line"] == "tick"]
    assert len(ticks) == 14
    # stopping an already-stopped workload is fine
    assert ctl(rig, "stop_workload", experiment="exp-5")["ok"]


# ------------------------------------------------------------------ power

def test_power_chunks_stream_in_order(tmp_path):
    rig = make_rig(tmp_path)
    ctl(rig, "assign", experiment="exp-1")
    rig.sched.run_until(10.0)
    rig.agent.start_power("exp-1", RadioKind.NRF52840)
    rig.sched.run_until(20.0)
    seqs = rig.power.sequences("exp-1", "RSE-001", "NRF52840")
    assert seqs == list(range(10))
    assert rig.power.gaps("exp-1", "RSE-001", "NRF52840") == []
    t0, rate, samples = rig.power.trace("exp-1", "RSE-001", "NRF52840")
    assert (t0, rate) == (10.0, 1000.0)
    assert len(samples) == 10_000
    # factory firmware sleeps, so every sample is the sleep current
    assert set(samples) == {0.005}


def test_power_stall_buffers_without_loss(tmp_path):
    rig = make_rig(tmp_path)
    ctl(rig, "assign", experiment="exp-1")
    rig.agent.start_power("exp-1", RadioKind.NRF52840)
    rig.sched.run_until(5.0)
    rig.power.paused = True
    rig.sched.run_until(65.0)  # 60s outage, buffer stays under high water
    assert rig.power.sequences("exp-1", "RSE-001", "NRF52840") == list(range(5))
    rig.power.paused = False
    rig.sched.run_until(70.0)
    seqs = rig.power.sequences("exp-1", "RSE-001", "NRF52840")
    assert seqs == list(range(70))
    assert rig.power.gaps("exp-1", "RSE-001", "NRF52840") == []
    assert rig.agent.power_dropped == 0


def test_power_overflow_drops_oldest_and_records(tmp_path):
    rig = make_rig(tmp_path)
    rig.config.power_high_water_chunks = 3
    ctl(rig, "assign", experiment="exp-1")
    rig.agent.start_power("exp-1", RadioKind.NRF52840)
    rig.power.paused = True
    rig.sched.run_until(8.0)  # 8 chunks land, only 3 may be held
    assert rig.agent.power_dropped == 5
    assert [e["seq"] for e in rig.agent.drop_events] == [0, 1, 2, 3, 4]
    rig.power.paused = False
    rig.sched.run_until(9.0)
    seqs = rig.power.sequences("exp-1", "RSE-001", "NRF52840")
    assert seqs == [5, 6, 7, 8]


# ------------------------------------------------------------------ reset

def test_reset_restores_factory(tmp_path):
    rig = make_rig(tmp_path)
    art = upload_firmware(rig)
    ctl(rig, "assign", experiment="exp-1")
    ctl(rig, "flash", radio="NRF52840", digest=art.digest, experiment="exp-1")
    ctl(rig, "start_workload", experiment="exp-1",
        digest=rig.base["workloads"]["power-profiler"], parameters={})
    ctl(rig, "set_poll_interval", seconds=5.0)
    rig.sched.run_until(30.0)
    assert not rig.agent.verify_factory()[0]
    assert rig.node.state.value == "Busy"

    resp = ctl(rig, "reset")
    # stop grace (10s) then reflash (5s)
    assert resp["ok"] and resp["completed_at"] == 45.0
    assert rig.node.state.value == "Resetting"
    repeat = ctl(rig, "reset")
    assert repeat["completed_at"] == 45.0  # already in progress
    rig.sched.run_until(45.0)
    ok, issues = rig.agent.verify_factory()
    assert ok, issues
    assert rig.node.state.value == "Idle"
    assert rig.agent.reserved_by is None
    assert rig.agent.workloads == {}
    # poll cadence is back to the 30s default
    before = len(rig.store.query(nodes=["RSE-001"], metrics=["temperature"]))
    rig.sched.run_until(105.0)
    after = len(rig.store.query(nodes=["RSE-001"], metrics=["temperature"]))
    assert after - before == 2  # polls at 75 and 105


def test_reset_when_already_factory_is_quick(tmp_path):
    rig = make_rig(tmp_path)
    rig.sched.run_until(7.0)
    resp = ctl(rig, "reset")
    assert resp["ok"] and resp["completed_at"] == 12.0  # no grace, flash only
    rig.sched.run_until(12.0)
    assert rig.agent.verify_factory()[0]
