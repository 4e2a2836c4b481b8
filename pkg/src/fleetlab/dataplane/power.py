"""High-rate power trace chunks.

Agents stream 1 s chunks of current samples per (experiment, node, radio)
with strictly increasing sequence numbers.  The pipeline is at-least-once:
a chunk the store has already seen is acknowledged but not stored twice,
and a paused store refuses chunks so the agent keeps them buffered.

Chunk wire format (docs/formats.md): big-endian u64 seq, f64 t0,
f64 rate_hz, u32 count, then count f64 samples.  Identity rides on the
topic: experiments/<exp>/power/<node>/<radio>.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

_HEADER = struct.Struct(">QddI")


@dataclass
class PowerChunk:
    experiment: str
    node: str
    radio: str
    seq: int
    t0: float
    rate_hz: float
    samples: list[float]

    def __eq__(self, other):
        if not isinstance(other, PowerChunk):
            return NotImplemented
        return (self.experiment, self.node, self.radio, self.seq, self.t0,
                self.rate_hz, self.samples) == \
               (other.experiment, other.node, other.radio, other.seq,
                other.t0, other.rate_hz, other.samples)


def encode_chunk(chunk: PowerChunk) -> bytes:
    head = _HEADER.pack(chunk.seq, chunk.t0, chunk.rate_hz, len(chunk.samples))
    return head + struct.pack(f">{len(chunk.samples)}d", *chunk.samples)


def decode_chunk(data: bytes, *, experiment: str, node: str,
                 radio: str) -> PowerChunk:
    seq, t0, rate_hz, count = _HEADER.unpack_from(data, 0)
    samples = list(struct.unpack_from(f">{count}d", data, _HEADER.size))
    return PowerChunk(experiment=experiment, node=node, radio=radio, seq=seq,
                      t0=t0, rate_hz=rate_hz, samples=samples)


class PowerStore:
    def __init__(self):
        # (experiment, node, radio) -> {seq: chunk}
        self._streams: dict[tuple[str, str, str], dict[int, PowerChunk]] = {}
        self.paused = False
        self.ingested = 0

    def ingest(self, chunk: PowerChunk) -> bool:
        """Accept a chunk.  False only when the store is unavailable; a
        duplicate sequence number is acknowledged without a second copy."""
        if self.paused:
            return False
        stream = self._streams.setdefault(
            (chunk.experiment, chunk.node, chunk.radio), {})
        if chunk.seq not in stream:
            stream[chunk.seq] = chunk
            self.ingested += 1
        return True

    def on_message(self, topic: str, payload: bytes) -> bool:
        # experiments/<exp>/power/<node>/<radio>
        segs = topic.split("/")
        chunk = decode_chunk(payload, experiment=segs[1], node=segs[3],
                             radio=segs[4])
        return self.ingest(chunk)

    def _stream(self, experiment: str, node: str, radio: str) -> dict[int, PowerChunk]:
        return self._streams.get((experiment, node, radio), {})

    def sequences(self, experiment: str, node: str, radio: str) -> list[int]:
        return sorted(self._stream(experiment, node, radio))

    def chunks(self, experiment: str, node: str, radio: str) -> list[PowerChunk]:
        stream = self._stream(experiment, node, radio)
        return [stream[seq] for seq in sorted(stream)]

    def gaps(self, experiment: str, node: str, radio: str) -> list[tuple[int, int]]:
        """Missing sequence ranges [(first_missing, last_missing), ...]."""
        seqs = self.sequences(experiment, node, radio)
        out = []
        for a, b in zip(seqs, seqs[1:]):
            if b > a + 1:
                out.append((a + 1, b - 1))
        return out

    def trace(self, experiment: str, node: str,
              radio: str) -> tuple[Optional[float], Optional[float], list[float]]:
        """(t0, rate_hz, concatenated samples) across stored chunks."""
        chunks = self.chunks(experiment, node, radio)
        if not chunks:
            return None, None, []
        samples: list[float] = []
        for c in chunks:
            samples.extend(c.samples)
        return chunks[0].t0, chunks[0].rate_hz, samples

    def nodes_with_traces(self, experiment: str) -> list[tuple[str, str]]:
        return sorted({(node, radio) for (exp, node, radio) in self._streams
                       if exp == experiment})
