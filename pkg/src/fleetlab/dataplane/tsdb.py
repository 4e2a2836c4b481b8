"""Log-structured time-series store for sensor samples.

Rows are appended to JSON-lines files partitioned by (UTC day, node) and
indexed in memory; a write is idempotent on (node, metric, sensor, ts).
Queries filter by node/metric/sensor/time (t_to exclusive) and can
downsample to fixed-width bucket means.  CSV export column order is part
of the contract: ts,node,metric,sensor,value,unit,quality.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from .. import errors
from ..clock import day_of
from ..model import SensorSample, canonical_json


def _iso_ms(epoch: float) -> str:
    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{int(dt.microsecond / 1000):03d}Z"


def _fmt_value(value: float) -> str:
    # repr gives the shortest float form that round-trips exactly.
    return repr(float(value))


class TimeSeriesStore:
    def __init__(self, data_dir: Optional[str | Path] = None,
                 max_query_points: int = 1_000_000):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.max_query_points = max_query_points
        self._rows: list[SensorSample] = []
        self._keys: set[tuple] = set()
        self.fail_writes = False  # fault injection for alert tests
        self.write_failures = 0
        if self.data_dir is not None:
            self._load()

    def _load(self) -> None:
        root = self.data_dir / "ts"
        if not root.exists():
            return
        for path in sorted(root.glob("*/*.jsonl")):
            with path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    s = SensorSample.from_dict(json.loads(line))
                    key = (s.node, s.metric, s.sensor, s.ts)
                    if key not in self._keys:
                        self._keys.add(key)
                        self._rows.append(s)

    def write(self, sample: SensorSample) -> bool:
        """Store one sample.  False when it is a duplicate or the store is
        failing writes (fault injection)."""
        if self.fail_writes:
            self.write_failures += 1
            raise errors.SourceMissing("store write failed")
        key = (sample.node, sample.metric, sample.sensor, sample.ts)
        if key in self._keys:
            return False
        self._keys.add(key)
        self._rows.append(sample)
        if self.data_dir is not None:
            path = self.data_dir / "ts" / day_of(sample.ts) / f"{sample.node}.jsonl"
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(sample.to_dict()) + "\n")
        return True

    def count(self) -> int:
        return len(self._rows)

    def _matching(self, nodes, metrics, sensors, t_from, t_to) -> list[SensorSample]:
        node_set = set(nodes) if nodes else None
        metric_set = set(metrics) if metrics else None
        sensor_set = set(sensors) if sensors else None
        out = []
        for s in self._rows:
            if node_set is not None and s.node not in node_set:
                continue
            if metric_set is not None and s.metric not in metric_set:
                continue
            if sensor_set is not None and s.sensor not in sensor_set:
                continue
            if t_from is not None and s.ts < t_from:
                continue
            if t_to is not None and s.ts >= t_to:
                continue
            out.append(s)
        if len(out) > self.max_query_points:
            raise errors.RangeTooLarge(
                f"{len(out)} points exceeds cap {self.max_query_points}")
        out.sort(key=lambda s: (s.ts, s.node, s.metric, s.sensor))
        return out

    def query(self, *, nodes: Optional[Iterable[str]] = None,
              metrics: Optional[Iterable[str]] = None,
              sensors: Optional[Iterable[str]] = None,
              t_from: Optional[float] = None, t_to: Optional[float] = None,
              downsample_s: Optional[float] = None):
        rows = self._matching(nodes, metrics, sensors, t_from, t_to)
        if downsample_s is None:
            return rows
        if downsample_s <= 0:
            raise ValueError("downsample width must be positive")
        buckets: dict[tuple, list[float]] = {}
        units: dict[tuple, str] = {}
        for s in rows:
            bucket = int(s.ts // downsample_s) * downsample_s
            key = (s.node, s.metric, s.sensor, bucket)
            buckets.setdefault(key, []).append(s.value)
            units[key] = s.unit
        out = []
        for key in sorted(buckets, key=lambda k: (k[3], k[0], k[1], k[2])):
            values = buckets[key]
            out.append({"node": key[0], "metric": key[1], "sensor": key[2],
                        "ts": key[3], "value": sum(values) / len(values),
                        "count": len(values), "unit": units[key]})
        return out

    def export_csv(self, **query_kwargs) -> str:
        rows = self.query(**query_kwargs)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["ts", "node", "metric", "sensor", "value", "unit",
                         "quality"])
        for s in rows:
            writer.writerow([_iso_ms(s.ts), s.node, s.metric, s.sensor,
                             _fmt_value(s.value), s.unit, s.quality.value])
        return buf.getvalue()
