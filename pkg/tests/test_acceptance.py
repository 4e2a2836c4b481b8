"""Acceptance suite: nine scaled end-to-end checks, one per criterion.

Each test prints a single "criterion N: PASS/FAIL" line (visible with
pytest -s or -rP) and asserts the same condition, so a plain pytest run
gives one pass/fail verdict per criterion.
"""

import json
import math
import random
import time
from collections import deque

from fleetlab.api import ApiRouter
from fleetlab.clock import DEFAULT_EPOCH, EventScheduler
from fleetlab.config import PlatformConfig
from fleetlab.errors import (Conflict, DurationExceeded, NotOperator,
                             NotValidated, PastStart, QueueOrder)
from fleetlab.hardware.channel import RadioEnvironment
from fleetlab.hardware.lora import ServiceProfile
from fleetlab.hardware.radios import DEFAULT_PROFILES, FirmwareBehavior
from fleetlab.model import (AgentStateKind, ArtifactKind, Configuration,
                            NodeId, Position, RadioKind)
from fleetlab.orchestrator import Platform
from fleetlab.registry import make_workload_bundle
from fleetlab.scheduler import ReservationBook

T0 = DEFAULT_EPOCH
M0 = int(T0 // 60)

BEACON = {
    "setup": [],
    "loop": [
        {"op": "log", "line": "beacon"},
        {"op": "tx", "ms": 100, "payload": "b"},
        {"op": "sleep", "ms": 900},
    ],
}


def report(num: int, label: str, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    print(f"criterion {num}: {verdict} - {label} ({detail})")
    assert ok, f"criterion {num} [{label}]: {detail}"


def quick_platform(n_nodes: int, *, gated: bool = False,
                   config: PlatformConfig = None):
    cfg = config or PlatformConfig()
    cfg.scan_latency_s = 0.0
    cfg.cleanup_budget_minutes = 1
    p = Platform(cfg)
    p.add_network("city", default_roles={"city"}, gated=gated)
    for i in range(1, n_nodes + 1):
        p.add_node(f"RSE-{i:03d}", x=30.0 * i, y=0.0, network="city")
    dev = p.register_user("dev@example.org", "pw")
    p.verify_user(p.root, dev.id)
    p.grant_roles(p.root, dev.id, {"city"})
    project = p.create_project(dev, name="airq", description="acceptance",
                               network="city")
    return p, dev, project


def upload_beacon(p, user, project):
    return p.upload_artifact(user, project.id, kind=ArtifactKind.FIRMWARE,
                             target="NRF52840", data=b"beacon v1\n",
                             name="beacon", firmware_behavior=BEACON)


# --------------------------------------------------------------- criterion 1

def test_criterion_1_daily_sample_rate():
    """10 nodes for 300 s store 1200 points; scaling the measured per-node
    rate to the full deployment clears 6 million samples per day."""
    wall_start = time.monotonic()
    p = Platform(PlatformConfig())
    p.add_network("city", default_roles={"city"}, gated=False)
    for i in range(1, 11):
        p.add_node(f"RSE-{i:03d}", x=40.0 * i, y=0.0, network="city")
    p.sched.run_until(T0 + 300.0)

    stored = p.collector.stored
    expected = 10 * 12 * 10  # nodes x metrics x polls in 300 s at 30 s
    metrics = 12
    poll_s = p.config.poll_interval_s
    per_node_daily = metrics * (86400 / poll_s)
    projected = int(200 * per_node_daily)
    wall = time.monotonic() - wall_start

    ok = (abs(stored - expected) <= expected * 0.01
          and projected == 6_912_000
          and projected > 6_000_000
          and wall < 30.0)
    report(1, "daily sample-rate figure", ok,
           f"stored={stored}/{expected}, projected={projected}/day, "
           f"wall={wall:.2f}s")


# --------------------------------------------------------------- criterion 2

def test_criterion_2_fem_range_extension():
    """Max delivery distance with the front-end module on vs off matches
    10^(28/(10n)) for path-loss exponents 2, 3 and 4."""
    wall_start = time.monotonic()
    profile = DEFAULT_PROFILES[RadioKind.NRF52840]

    def max_range(env, fem_on: bool) -> float:
        prof = profile.with_fem(fem_on)
        tx = env.add_radio("RSE-001", RadioKind.NRF52840,
                           Position(0.0, 0.0), prof)
        rx = env.add_radio("RSE-002", RadioKind.NRF52840,
                           Position(1.0, 0.0), prof)
        lo, hi = 1.0, 1.0e7
        for _ in range(80):
            mid = (lo + hi) / 2.0
            rx.position = Position(mid, 0.0)
            if env.in_range(tx, rx):
                lo = mid
            else:
                hi = mid
        env.remove_radio(tx)
        env.remove_radio(rx)
        return lo

    results = []
    worst = 0.0
    for n in (2, 3, 4):
        env = RadioEnvironment(EventScheduler(0.0), path_loss_exponent=n,
                               path_loss_at_1m_db=40.0,
                               shadowing_sigma_db=0.0, seed=1)
        ratio = max_range(env, True) / max_range(env, False)
        expected = 10.0 ** (28.0 / (10.0 * n))
        rel_err = abs(ratio / expected - 1.0)
        worst = max(worst, rel_err)
        results.append(f"n={n}: {ratio:.2f} vs {expected:.2f}")

    wall = time.monotonic() - wall_start
    ok = worst <= 0.15 and wall < 10.0
    report(2, "FEM range extension", ok,
           "; ".join(results) + f", worst err {worst * 100:.2f}%, "
           f"wall={wall:.2f}s")


# --------------------------------------------------------------- criterion 3

def test_criterion_3_mesh_dissemination():
    """20-node store-and-forward flood reaches every node the BFS oracle
    says is reachable (a connected topology, so all of them)."""
    n_nodes = 20
    rng = random.Random(15)  # chosen so the delivery graph is connected
    box = 3500.0
    positions = [Position(rng.uniform(0.0, box), rng.uniform(0.0, box))
                 for _ in range(n_nodes)]
    names = [f"RSE-{i + 1:03d}" for i in range(n_nodes)]

    sched = EventScheduler(0.0)
    env = RadioEnvironment(sched, path_loss_exponent=3.0,
                           path_loss_at_1m_db=40.0,
                           shadowing_sigma_db=0.0, seed=1)
    profile = DEFAULT_PROFILES[RadioKind.NRF52840]
    radios = [env.add_radio(names[i], RadioKind.NRF52840, positions[i],
                            profile) for i in range(n_nodes)]

    # Independent reachability oracle: BFS over the in-range graph.
    adj = {i: set() for i in range(n_nodes)}
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if env.in_range(radios[i], radios[j]):
                adj[i].add(j)
                adj[j].add(i)
    reachable = {0}
    frontier = deque([0])
    while frontier:
        u = frontier.popleft()
        for v in adj[u]:
            if v not in reachable:
                reachable.add(v)
                frontier.append(v)
    assert reachable == set(range(n_nodes)), "topology must be connected"

    # TDMA flood: 20 slots x 50 ms; node i relays in slot i, listens in
    # every other slot, so a single store-and-forward retransmission is
    # always heard by every in-range neighbour.
    payload = "fw-update-v2"
    source = FirmwareBehavior.from_dict({
        "setup": [],
        "loop": [{"op": "tx", "ms": 50, "payload": payload},
                 {"op": "rx", "ms": 950}],
    })
    radios[0].start_behavior(source, "fw-src")
    for i in range(1, n_nodes):
        behavior = FirmwareBehavior.from_dict({
            "setup": [{"op": "sleep", "ms": 50 * i}],
            "loop": [{"op": "relay", "ms": 50}, {"op": "rx", "ms": 950}],
        })
        radios[i].start_behavior(behavior, f"fw-{i}")

    sched.run_until(25.0)
    have = {r.node for r in radios if payload in r.seen}
    want = {names[i] for i in reachable}
    ok = have == want and len(have) == n_nodes and sched.now <= 30.0
    report(3, "mesh dissemination", ok,
           f"{len(have)}/{n_nodes} nodes reached in {sched.now:.0f}s virtual")


# --------------------------------------------------------------- criterion 4

def test_criterion_4_scheduler_oracle_equivalence():
    """1000 random reserve/cancel operations match a brute-force interval
    oracle outcome-for-outcome, with no overlap ever booked."""
    cfg = PlatformConfig()
    book = ReservationBook(cfg, now_fn=lambda: T0,
                           node_state=lambda n: AgentStateKind.IDLE)
    nodes = [NodeId.parse(f"RSE-{i:03d}") for i in range(1, 11)]
    rng = random.Random(4)
    held: dict[str, tuple[set, int, int]] = {}  # exp -> (names, start, end)
    discrepancies = []

    def oracle_reserve(exp, names, start, duration):
        if duration <= 0 or duration > cfg.max_duration_minutes:
            return ("duration", None)
        if start < M0:
            return ("past", None)
        end = start + duration
        clash = {(nm, other) for other, (onames, s, e) in held.items()
                 for nm in names & onames if start < e and s < end}
        if clash:
            return ("conflict", clash)
        held[exp] = (names, start, end)
        return ("ok", None)

    for k in range(1000):
        if held and rng.random() < 0.35:
            exp = rng.choice(sorted(held))
            book.cancel(exp)
            del held[exp]
        else:
            exp = f"exp-{k:04d}"
            picked = rng.sample(nodes, rng.randint(1, len(nodes)))
            start = M0 + rng.randint(-5, 3000)
            duration = rng.randint(1, 260)
            expected, clash = oracle_reserve(
                exp, {n.render() for n in picked}, start, duration)
            try:
                book.reserve(exp, picked, start, duration)
                got, got_clash = "ok", None
            except DurationExceeded:
                got, got_clash = "duration", None
            except PastStart:
                got, got_clash = "past", None
            except Conflict as err:
                got = "conflict"
                got_clash = {(c["node"], c["experiment"])
                             for c in err.details["conflicts"]}
            if (expected, clash) != (got, got_clash):
                discrepancies.append((k, expected, got))

        # invariant: per node, booked intervals stay pairwise disjoint
        per_node: dict[str, list] = {}
        for res in book.reservations():
            for node in res.nodes:
                per_node.setdefault(node.render(), []).append(
                    (res.start_minute, res.end_minute))
        for spans in per_node.values():
            spans.sort()
            for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
                if s2 < e1:
                    discrepancies.append(("overlap", s1, e1, s2, e2))

    ok = not discrepancies
    report(4, "scheduler oracle equivalence", ok,
           f"1000 ops, {len(discrepancies)} discrepancies")


# --------------------------------------------------------------- criterion 5

def _lifecycle_run(offline: str = None):
    p, dev, project = quick_platform(5)
    art = upload_beacon(p, dev, project)
    cfg = Configuration(
        name="main",
        nodes=[NodeId.parse(f"RSE-{i:03d}") for i in range(1, 6)],
        firmware={RadioKind.NRF52840: art.digest},
        workload=p.base["workloads"]["serial-logger"],
        parameters={"DEVICE": "nrf52840"})
    exp = p.create_experiment(dev, project.id, configurations=[cfg],
                              duration_minutes=3)
    p.schedule_experiment(dev, exp.id, start_minute=M0 + 1)
    if offline:
        p.agents[offline].set_offline(True)
    p.sched.run_until(T0 + 400.0)
    return p, dev, exp


def test_criterion_5_lifecycle_and_cleanup_totality():
    """Five-node run completes, leaves factory state everywhere, repeats
    byte-identically, and a dead agent flips the run to Failed with the
    survivors still reset."""
    p1, dev1, exp1 = _lifecycle_run()
    clean = [name for name, agent in p1.agents.items()
             if agent.verify_factory()[0]
             and p1.nodes[name].state is AgentStateKind.IDLE]
    bundle1 = p1.bundle_of(dev1, exp1.id)
    csv1 = p1.tsdb.export_csv()

    p2, dev2, exp2 = _lifecycle_run()
    bundle2 = p2.bundle_of(dev2, exp2.id)
    csv2 = p2.tsdb.export_csv()

    p3, dev3, exp3 = _lifecycle_run(offline="RSE-005")
    survivors = [f"RSE-{i:03d}" for i in range(1, 5)]
    reset = [name for name in survivors
             if p3.agents[name].verify_factory()[0]
             and p3.nodes[name].state is AgentStateKind.IDLE]

    ok = (exp1.state.value == "Completed"
          and len(clean) == 5
          and bundle1 == bundle2
          and csv1 == csv2
          and len(bundle1) > 0
          and exp3.state.value == "Failed"
          and reset == survivors)
    report(5, "lifecycle + cleanup totality", ok,
           f"run1={exp1.state.value} factory={len(clean)}/5, "
           f"repeat identical={bundle1 == bundle2 and csv1 == csv2}, "
           f"faulted={exp3.state.value} survivors reset="
           f"{len(reset)}/{len(survivors)}")


# --------------------------------------------------------------- criterion 6

def test_criterion_6_sensor_loss_vs_power_buffering():
    """A 60 s collector outage loses exactly the samples scheduled inside
    it; a 60 s store stall below the high-water mark loses no power chunks
    and leaves sequence numbers gap-free."""
    # Unbuffered sensors: broker outage over (119, 179) swallows the
    # polls at +120 and +150, nothing else.
    p = Platform(PlatformConfig())
    p.add_network("city", default_roles={"city"}, gated=False)
    p.add_node("RSE-001", x=0.0, y=0.0, network="city")
    p.add_node("RSE-002", x=40.0, y=0.0, network="city")
    p.sched.run_until(T0 + 119.0)
    p.broker.online = False
    p.sched.run_until(T0 + 179.0)
    p.broker.online = True
    p.sched.run_until(T0 + 300.0)

    expected_stored = 2 * 12 * 8  # 10 polls minus the 2 in the outage
    offsets = sorted(s.ts - T0 for s in p.tsdb.query(
        nodes=["RSE-001"], metrics=["temperature"]))
    sensors_ok = (p.collector.stored == expected_stored
                  and offsets == [30.0, 60.0, 90.0, 180.0, 210.0,
                                  240.0, 270.0, 300.0])

    # Buffered power: pause the store for 60 s mid-run (buffer of 60
    # chunks stays under the high-water mark of 120).
    q, dev, project = quick_platform(1)
    art = upload_beacon(q, dev, project)
    cfg = Configuration(name="main", nodes=[NodeId.parse("RSE-001")],
                        firmware={RadioKind.NRF52840: art.digest},
                        workload=q.base["workloads"]["power-profiler"],
                        parameters={"DEVICE": "nrf52840"})
    exp = q.create_experiment(dev, project.id, configurations=[cfg],
                              duration_minutes=4)
    q.schedule_experiment(dev, exp.id, start_minute=M0 + 1)
    q.sched.run_until(T0 + 100.0)
    q.power.paused = True
    q.sched.run_until(T0 + 160.0)
    q.power.paused = False
    q.sched.run_until(T0 + 460.0)

    seqs = q.power.sequences(exp.id, "RSE-001", "NRF52840")
    power_ok = (exp.state.value == "Completed"
                and q.power.gaps(exp.id, "RSE-001", "NRF52840") == []
                and q.agents["RSE-001"].power_dropped == 0
                and len(seqs) >= 170
                and seqs == list(range(len(seqs))))

    ok = sensors_ok and power_ok
    report(6, "unbuffered-sensor / buffered-power contract", ok,
           f"stored={p.collector.stored}/{expected_stored}, "
           f"power chunks={len(seqs)} gap-free, dropped="
           f"{q.agents['RSE-001'].power_dropped}")


# --------------------------------------------------------------- criterion 7

def test_criterion_7_rbac_matrix():
    """Viewer denied launches and uploads, Developer allowed, Vulnerable
    artifact blocked until an admin override; checked over the API."""
    cfg = PlatformConfig()
    cfg.scan_latency_s = 0.0
    cfg.cleanup_budget_minutes = 1
    p = Platform(cfg)
    p.add_network("city", default_roles={"city"}, gated=False)
    for i in range(1, 4):
        p.add_node(f"RSE-{i:03d}", x=30.0 * i, y=0.0, network="city")
    router = ApiRouter(p)
    checks = []

    def api(label, expected, method, path, body=None, token=None):
        resp = router.handle(method, path, body, token)
        checks.append((label, expected, resp.status))
        return json.loads(resp.body)

    root = api("root login", 200, "POST", "/api/v1/login",
               {"email": "root@local", "password": "root"})["token"]
    dev_user = api("register dev", 201, "POST", "/api/v1/users",
                   {"email": "dev@x.org", "password": "pw"})
    viewer_user = api("register viewer", 201, "POST", "/api/v1/users",
                      {"email": "viewer@x.org", "password": "pw"})
    api("verify dev", 200, "POST", f"/api/v1/users/{dev_user['id']}/verify",
        token=root)
    api("verify viewer", 200, "POST",
        f"/api/v1/users/{viewer_user['id']}/verify", token=root)
    api("grant dev", 200, "POST", f"/api/v1/users/{dev_user['id']}/roles",
        {"roles": ["city"]}, token=root)
    # network membership is a prerequisite for any project access on it
    api("grant viewer", 200, "POST",
        f"/api/v1/users/{viewer_user['id']}/roles",
        {"roles": ["city"]}, token=root)
    dev = api("dev login", 200, "POST", "/api/v1/login",
              {"email": "dev@x.org", "password": "pw"})["token"]
    viewer = api("viewer login", 200, "POST", "/api/v1/login",
                 {"email": "viewer@x.org", "password": "pw"})["token"]

    pid = api("dev creates project", 201, "POST", "/api/v1/projects",
              {"name": "airq", "network": "city"}, token=dev)["id"]
    import base64
    beacon = api("dev uploads firmware", 201, "POST",
                 f"/api/v1/projects/{pid}/artifacts",
                 {"kind": "Firmware", "target": "NRF52840", "name": "beacon",
                  "data_b64": base64.b64encode(b"beacon v1\n").decode(),
                  "firmware_behavior": BEACON}, token=dev)
    api("share with viewer", 200, "POST", f"/api/v1/projects/{pid}/share",
        {"user": "viewer@x.org", "role": "Viewer"}, token=dev)

    spec = {"duration_minutes": 3, "configurations": [{
        "name": "main", "nodes": ["RSE-001"],
        "firmware": {"NRF52840": beacon["digest"]}}]}
    api("viewer launch denied", 403, "POST",
        f"/api/v1/projects/{pid}/experiments", spec, token=viewer)
    api("viewer upload denied", 403, "POST",
        f"/api/v1/projects/{pid}/artifacts",
        {"kind": "Workload", "target": "ARM32", "name": "w",
         "data_b64": base64.b64encode(b"payload").decode()}, token=viewer)
    api("viewer may read", 200, "GET",
        f"/api/v1/projects/{pid}/artifacts", token=viewer)

    eid = api("developer launch allowed", 201, "POST",
              f"/api/v1/projects/{pid}/experiments", spec, token=dev)["id"]
    api("developer schedule allowed", 200, "POST",
        f"/api/v1/experiments/{eid}/schedule",
        {"start_minute": M0 + 1}, token=dev)

    shady = api("vulnerable upload accepted", 201, "POST",
                f"/api/v1/projects/{pid}/artifacts",
                {"kind": "Workload", "target": "ARM32", "name": "shady",
                 "data_b64": base64.b64encode(b"hacked tool").decode()},
                token=dev)
    checks.append(("scan verdict", "Vulnerable", shady["scan"]))
    bad_spec = {"duration_minutes": 3, "configurations": [{
        "name": "main", "nodes": ["RSE-002"],
        "firmware": {"NRF52840": beacon["digest"]},
        "workload": shady["digest"]}]}
    api("vulnerable blocked", 422, "POST",
        f"/api/v1/projects/{pid}/experiments", bad_spec, token=dev)
    api("developer cannot override", 403, "POST",
        f"/api/v1/artifacts/{shady['digest']}/override", token=dev)
    api("admin override", 200, "POST",
        f"/api/v1/artifacts/{shady['digest']}/override", token=root)
    api("post-override launch", 201, "POST",
        f"/api/v1/projects/{pid}/experiments", bad_spec, token=dev)

    violations = [(label, want, got) for label, want, got in checks
                  if want != got]
    report(7, "RBAC matrix", not violations,
           f"{len(checks)} checks, violations={violations or 0}")


# --------------------------------------------------------------- criterion 8

def test_criterion_8_lora_dedup_and_rate_limit():
    """Three gateways hear each uplink but exactly one app frame arrives,
    tagged with the best-RSSI gateway; a device at twice its permitted
    rate has every second frame rate-limited."""
    cfg = PlatformConfig()
    cfg.shadowing_sigma_db = 0.0  # make the best gateway deterministic
    p = Platform(cfg)
    p.add_network("city", default_roles={"city"}, gated=False)
    p.add_node("RSE-L-001", x=0.0, y=0.0, network="city")
    p.add_node("RSE-L-002", x=800.0, y=0.0, network="city")
    p.add_node("RSE-L-003", x=1600.0, y=0.0, network="city")
    p.lora.register_app("airmon")
    p.lora.register_device(
        "a1b2c3", app="airmon", position=Position(100.0, 0.0),
        service_profile=ServiceProfile(name="slow",
                                       min_uplink_interval_s=60.0))

    first = p.lora.uplink("a1b2c3", payload="01", fcnt=1)
    dup = p.lora.uplink("a1b2c3", payload="01", fcnt=1)
    dedup_ok = (first is not None
                and first["gateway"] == "RSE-L-001"
                and first["gateways_heard"] == 3
                and dup is None
                and len(p.lora.uplinks("airmon")) == 1)

    # 2x over-rate: 30 s spacing against a 60 s minimum interval.
    outcomes = []
    for k in range(2, 8):
        p.sched.run_until(T0 + 30.0 * (k - 1))
        frame = p.lora.uplink("a1b2c3", payload=f"{k:02x}", fcnt=k)
        outcomes.append(frame is not None)
    rate_ok = (outcomes == [False, True, False, True, False, True]
               and p.lora.stats["rate_limited"] == 3
               and len(p.lora.uplinks("airmon")) == 4)

    ok = dedup_ok and rate_ok
    report(8, "LoRa dedup and rate limiting", ok,
           f"gateway={first['gateway']} heard={first['gateways_heard']}, "
           f"dup dropped={dup is None}, over-rate pattern={outcomes}")


# --------------------------------------------------------------- criterion 9

def test_criterion_9_gated_queue_workflow():
    """Validation cites the violation for a bad config, passes a good one,
    activation needs the operator role, and the queue is FIFO."""
    p, dev, project = quick_platform(2, gated=True)
    beacon = upload_beacon(p, dev, project)
    good = Configuration(name="main", nodes=[NodeId.parse("RSE-001")],
                         firmware={RadioKind.NRF52840: beacon.digest})
    rogue = make_workload_bundle(
        entrypoint="app", arch="ARM32", devices=[],
        program=[{"op": "publish", "topic": "alerts", "payload": "x"},
                 {"op": "sleep", "ms": 1000}])
    rogue_art = p.upload_artifact(dev, project.id,
                                  kind=ArtifactKind.WORKLOAD,
                                  target="ARM32", data=rogue, name="rogue")
    bad = Configuration(name="main", nodes=[NodeId.parse("RSE-002")],
                        firmware={RadioKind.NRF52840: beacon.digest},
                        workload=rogue_art.digest)

    exp_a = p.create_experiment(dev, project.id, configurations=[good],
                                duration_minutes=3)
    exp_b = p.create_experiment(dev, project.id, configurations=[bad],
                                duration_minutes=3)
    exp_c = p.create_experiment(dev, project.id, configurations=[good],
                                duration_minutes=3)
    p.schedule_experiment(dev, exp_a.id, start_minute=M0 + 5)
    p.schedule_experiment(dev, exp_b.id, start_minute=M0 + 10)
    p.schedule_experiment(dev, exp_c.id, start_minute=M0 + 15)
    p.sched.run_until(T0 + 1.0)

    cited = (exp_b.validation.value == "Failed"
             and "acl violation" in exp_b.validation_report
             and "alerts" in exp_b.validation_report
             and "result: fail" in exp_b.validation_report)
    passed = (exp_a.validation.value == "Passed"
              and exp_c.validation.value == "Passed")

    flows = []
    try:
        p.activate_experiment(dev, exp_a.id)
        flows.append("developer activation went through")
    except NotOperator:
        pass
    try:
        p.activate_experiment(p.root, exp_b.id)
        flows.append("failed-validation entry activated")
    except NotValidated:
        pass
    try:
        p.activate_experiment(p.root, exp_c.id)
        flows.append("queue order violated")
    except QueueOrder:
        pass
    p.activate_experiment(p.root, exp_a.id)
    p.activate_experiment(p.root, exp_c.id)  # fine once the head moved

    ok = cited and passed and not flows
    report(9, "gated queue workflow", ok,
           f"cited={cited}, verdicts ok={passed}, "
           f"ordering breaches={flows or 0}")
