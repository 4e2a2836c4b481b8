"""Topic bus: wildcard matching, ACL, delivery semantics, wire frames."""

from __future__ import annotations

import pytest

from fleetlab import errors
from fleetlab.dataplane.broker import (
    ACL_RULES, Broker, decode_frames, encode_frame, matches, topic_acl_matches,
)


# ---------------------------------------------------------- topic matching

@pytest.mark.parametrize("pattern,topic,want", [
    ("a/b/c", "a/b/c", True),
    ("a/b/c", "a/b", False),
    ("a/+/c", "a/b/c", True),
    ("a/+/c", "a/b/d", False),
    ("a/+/c", "a/b/x/c", False),
    ("a/#", "a/b/c", True),
    ("a/#", "a", True),          # '#' also covers the parent itself
    ("#", "anything/at/all", True),
    ("+/b", "a/b", True),
    ("+/b", "a/b/c", False),
    ("nodes/+/sensors/+", "nodes/RSE-001/sensors/pm2_5", True),
    ("nodes/+/sensors/+", "nodes/RSE-001/analytics", False),
])
def test_wildcard_matching(pattern, topic, want):
    assert matches(pattern, topic) is want


def test_fifo_order_per_topic():
    broker = Broker()
    got = []
    broker.subscribe("t/x", lambda topic, payload: got.append(payload))
    for i in range(20):
        broker.publish("platform", "t/x", str(i).encode())
    assert got == [str(i).encode() for i in range(20)]


def test_overlapping_subscriptions_both_delivered():
    broker = Broker()
    a, b = [], []
    broker.subscribe("nodes/#", lambda t, p: a.append(t))
    broker.subscribe("nodes/+/sensors/+", lambda t, p: b.append(t))
    broker.publish("agent:RSE-001", "nodes/RSE-001/sensors/pm2_5", b"x")
    assert a == ["nodes/RSE-001/sensors/pm2_5"]
    assert b == ["nodes/RSE-001/sensors/pm2_5"]


def test_unsubscribe_stops_delivery():
    broker = Broker()
    got = []
    sub = broker.subscribe("t/#", lambda t, p: got.append(p))
    broker.publish("platform", "t/1", b"a")
    sub.unsubscribe()
    broker.publish("platform", "t/1", b"b")
    assert got == [b"a"]


# ------------------------------------------------------------------- ACL

AGENT_OK = [
    ("agent:RSE-001", "nodes/RSE-001/sensors/pm2_5"),
    ("agent:RSE-001", "nodes/RSE-001/analytics"),
    ("agent:RSS-002", "experiments/exp-0001/logs/RSS-002"),
    ("agent:RSS-002", "experiments/exp-0001/power/RSS-002/NRF52840"),
]

AGENT_DENIED = [
    ("agent:RSE-001", "nodes/RSE-002/sensors/pm2_5"),   # someone else's node
    ("agent:RSE-001", "experiments/exp-0001/logs/RSE-002"),
    ("agent:RSE-001", "alerts"),
    ("agent:RSE-001", "experiments/exp-0001/app/data"),  # workloads only
]


@pytest.mark.parametrize("identity,topic", AGENT_OK)
def test_acl_agent_allowed(identity, topic):
    broker = Broker()
    broker.publish(identity, topic, b"x")


@pytest.mark.parametrize("identity,topic", AGENT_DENIED)
def test_acl_agent_denied(identity, topic):
    broker = Broker()
    with pytest.raises(errors.AclDenied):
        broker.publish(identity, topic, b"x")
    assert broker.violations[-1]["identity"] == identity


def test_acl_workload_scoped_to_own_experiment():
    broker = Broker()
    broker.publish("workload:exp-0001:RSE-001", "experiments/exp-0001/app/readings", b"x")
    with pytest.raises(errors.AclDenied):
        broker.publish("workload:exp-0001:RSE-001",
                       "experiments/exp-0999/app/readings", b"x")
    with pytest.raises(errors.AclDenied):
        broker.publish("workload:exp-0001:RSE-001",
                       "nodes/RSE-001/sensors/pm2_5", b"x")


def test_acl_platform_topics():
    broker = Broker()
    broker.publish("platform", "alerts", b"x")
    broker.publish("platform", "lora/app-1/uplinks", b"x")
    with pytest.raises(errors.AclDenied):
        broker.publish("agent:RSE-001", "lora/app-1/uplinks", b"x")


def test_every_grammar_topic_matches_exactly_one_rule():
    topics = [
        "nodes/RSE-001/sensors/pm2_5",
        "nodes/RSS-310/sensors/noise",
        "nodes/RSE-L-007/analytics",
        "experiments/exp-0001/logs/RSE-001",
        "experiments/exp-0001/power/RSE-001/NRF52840",
        "experiments/exp-0001/app/anything/nested",
        "alerts",
        "lora/app-1/uplinks",
    ]
    for topic in topics:
        hits = topic_acl_matches(topic)
        assert len(hits) == 1, f"{topic} matched {hits}"


def test_platform_identity_bypass_is_not_in_rule_table():
    # The collector and orchestrator publish as "platform"; that identity is
    # allowed on platform rows only, so the rule table stays exhaustive.
    assert len(ACL_RULES) == 7


# ------------------------------------------------------- delivery semantics

def test_bus_down_drops_qos0_silently():
    broker = Broker()
    got = []
    broker.subscribe("nodes/#", lambda t, p: got.append(p))
    broker.online = False
    ok = broker.publish("agent:RSE-001", "nodes/RSE-001/sensors/pm2_5", b"x")
    assert ok is False
    assert got == []
    broker.online = True
    assert broker.publish("agent:RSE-001", "nodes/RSE-001/sensors/pm2_5", b"y")
    assert got == [b"y"]


def test_qos1_ack_requires_acceptance():
    broker = Broker()
    accept = {"value": False}
    broker.subscribe("experiments/#", lambda t, p: accept["value"])
    ok = broker.publish("agent:RSE-001",
                        "experiments/exp-0001/power/RSE-001/NRF52840", b"c", qos=1)
    assert ok is False
    accept["value"] = True
    ok = broker.publish("agent:RSE-001",
                        "experiments/exp-0001/power/RSE-001/NRF52840", b"c", qos=1)
    assert ok is True


def test_qos1_no_subscriber_is_unacked():
    broker = Broker()
    assert broker.publish("agent:RSE-001",
                          "experiments/exp-0001/power/RSE-001/NRF52840",
                          b"c", qos=1) is False


def test_subscriber_exception_does_not_break_publish():
    broker = Broker()
    def boom(t, p):
        raise RuntimeError("subscriber bug")
    got = []
    broker.subscribe("t/#", boom)
    broker.subscribe("t/#", lambda t, p: got.append(p))
    broker.publish("platform", "t/1", b"x")
    assert got == [b"x"]
    assert broker.metrics["delivery_errors"] == 1


# ------------------------------------------------------------- wire frames

def test_frame_roundtrip():
    frame = encode_frame("nodes/RSE-001/sensors/pm2_5", b"\x00\x01payload",
                         publisher="agent:RSE-001", qos=0)
    decoded, rest = decode_frames(frame)
    assert rest == b""
    assert decoded == [("nodes/RSE-001/sensors/pm2_5", b"\x00\x01payload",
                        "agent:RSE-001", 0)]


def test_frame_stream_decode_handles_partials():
    f1 = encode_frame("a/b", b"one", publisher="platform", qos=0)
    f2 = encode_frame("a/c", b"two", publisher="platform", qos=1)
    stream = f1 + f2
    # Feed in two arbitrary cuts.
    cut = len(f1) + 3
    decoded, rest = decode_frames(stream[:cut])
    assert [d[0] for d in decoded] == ["a/b"]
    decoded2, rest2 = decode_frames(rest + stream[cut:])
    assert [d[0] for d in decoded2] == ["a/c"]
    assert rest2 == b""
