"""In-platform topic bus.

Slash-separated topics with MQTT-style ``+`` (one segment) and ``#``
(remaining segments) subscription wildcards.  Delivery per topic is FIFO.
Publishing is gated by an authorization table keyed on publisher identity:

    agent:<node-id>              the per-node agent
    workload:<exp-id>:<node-id>  a workload sandbox
    platform                     collector, orchestrator, core services

Sensor topics are at-most-once: if the bus is down the sample is gone.
Power topics use qos=1: publish returns False unless every matched
subscriber accepted the chunk, and the publisher retries with the same
sequence number (consumers dedup).

The wire format for external bridges is length-prefixed JSON frames, see
encode_frame/decode_frames and docs/formats.md.
"""

from __future__ import annotations

import base64
import json
import struct
from typing import Callable, Optional

from .. import errors

Callback = Callable[[str, bytes], object]


def matches(pattern: str, topic: str) -> bool:
    """MQTT-style match: '+' one segment, trailing '#' any remainder
    (including none, so 'a/#' also matches 'a')."""
    p_segs = pattern.split("/")
    t_segs = topic.split("/")
    for i, p in enumerate(p_segs):
        if p == "#":
            return True
        if i >= len(t_segs):
            return False
        if p == "+":
            continue
        if p != t_segs[i]:
            return False
    if len(t_segs) == len(p_segs):
        return True
    # One extra case: pattern 'a/#' vs topic 'a' consumed all topic segments
    # but '#' remains in the pattern.
    return len(p_segs) == len(t_segs) + 1 and p_segs[-1] == "#"


def _agent_of(segment_index: int):
    def check(identity: str, segs: list[str]) -> bool:
        return identity == f"agent:{segs[segment_index]}"
    return check


def _workload_of_experiment(identity: str, segs: list[str]) -> bool:
    return identity.startswith(f"workload:{segs[1]}:")


def _platform_only(identity: str, segs: list[str]) -> bool:
    return identity == "platform"


# Disjoint by construction: every concrete deliverable topic matches exactly
# one row (checked by topic_acl_matches and its test).
ACL_RULES: list[tuple[str, Callable[[str, list[str]], bool]]] = [
    ("nodes/+/sensors/+", _agent_of(1)),
    ("nodes/+/analytics", _agent_of(1)),
    ("experiments/+/logs/+", _agent_of(3)),
    ("experiments/+/power/+/+", _agent_of(3)),
    ("experiments/+/app/#", _workload_of_experiment),
    ("alerts", _platform_only),
    ("lora/+/uplinks", _platform_only),
]


def topic_acl_matches(topic: str) -> list[str]:
    return [pattern for pattern, _ in ACL_RULES if matches(pattern, topic)]


class Subscription:
    def __init__(self, broker: "Broker", pattern: str, callback: Callback):
        self.broker = broker
        self.pattern = pattern
        self.callback = callback

    def unsubscribe(self) -> None:
        self.broker._subs.discard(self)


class Broker:
    def __init__(self):
        self._subs: set[Subscription] = set()
        self._sub_order: int = 0
        self._order: dict[Subscription, int] = {}
        self.online = True
        self.violations: list[dict] = []
        self.metrics = {"published": 0, "delivered": 0, "dropped": 0,
                        "denied": 0, "delivery_errors": 0}

    def subscribe(self, pattern: str, callback: Callback) -> Subscription:
        sub = Subscription(self, pattern, callback)
        self._subs.add(sub)
        self._order[sub] = self._sub_order
        self._sub_order += 1
        return sub

    def authorize(self, identity: str, topic: str) -> bool:
        segs = topic.split("/")
        for pattern, check in ACL_RULES:
            if matches(pattern, topic):
                return check(identity, segs)
        # Topics outside the deliverable grammar are platform-internal.
        return identity == "platform"

    def publish(self, identity: str, topic: str, payload: bytes,
                qos: int = 0) -> bool:
        """Deliver to current subscribers.  Returns True when delivered
        (qos 0) or accepted by all matched subscribers (qos 1)."""
        if "+" in topic or "#" in topic:
            raise ValueError("publish topics must be concrete")
        if not self.authorize(identity, topic):
            self.metrics["denied"] += 1
            self.violations.append({"identity": identity, "topic": topic})
            raise errors.AclDenied(f"{identity} may not publish on {topic}",
                                   identity=identity, topic=topic)
        self.metrics["published"] += 1
        if not self.online:
            self.metrics["dropped"] += 1
            return False
        targets = sorted((s for s in self._subs if matches(s.pattern, topic)),
                         key=lambda s: self._order[s])
        if qos == 1 and not targets:
            return False
        accepted = True
        for sub in targets:
            try:
                result = sub.callback(topic, payload)
            except Exception:
                self.metrics["delivery_errors"] += 1
                result = False
            else:
                self.metrics["delivered"] += 1
            if result is False:
                accepted = False
        return accepted if qos == 1 else True


# ------------------------------------------------------------- wire frames

def encode_frame(topic: str, payload: bytes, *, publisher: str, qos: int = 0) -> bytes:
    body = json.dumps({
        "topic": topic,
        "payload_b64": base64.b64encode(payload).decode("ascii"),
        "publisher": publisher,
        "qos": qos,
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def decode_frames(buffer: bytes) -> tuple[list[tuple[str, bytes, str, int]], bytes]:
    """Decode every complete frame in ``buffer``; return (frames, remainder)."""
    out = []
    pos = 0
    while len(buffer) - pos >= 4:
        (length,) = struct.unpack_from(">I", buffer, pos)
        if len(buffer) - pos - 4 < length:
            break
        body = json.loads(buffer[pos + 4:pos + 4 + length].decode("utf-8"))
        out.append((body["topic"], base64.b64decode(body["payload_b64"]),
                    body["publisher"], body["qos"]))
        pos += 4 + length
    return out, buffer[pos:]
