"""Experiment log storage and deterministic result bundles.

Lines are (ts, node, stream, line) tuples per experiment, persisted as
JSON lines.  bundle() produces a gzip tar with sorted member names, zeroed
timestamps and a manifest, so the same lines always produce the same
bytes, byte for byte.
"""

from __future__ import annotations

import gzip
import io
import json
import tarfile
from pathlib import Path
from typing import Optional

from ..model import canonical_json


class LogStore:
    def __init__(self, data_dir: Optional[str | Path] = None):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        # experiment -> list of {ts, node, stream, line}
        self._lines: dict[str, list[dict]] = {}
        if self.data_dir is not None:
            self._load()

    def _load(self) -> None:
        root = self.data_dir / "logs"
        if not root.exists():
            return
        for path in sorted(root.glob("*.jsonl")):
            exp = path.stem
            rows = self._lines.setdefault(exp, [])
            with path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        rows.append(json.loads(line))

    def append(self, experiment: str, node: str, ts: float, stream: str,
               line: str) -> None:
        record = {"ts": ts, "node": node, "stream": stream, "line": line}
        self._lines.setdefault(experiment, []).append(record)
        if self.data_dir is not None:
            path = self.data_dir / "logs" / f"{experiment}.jsonl"
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(record) + "\n")

    def lines(self, experiment: str, node: Optional[str] = None) -> list[dict]:
        rows = [r for r in self._lines.get(experiment, [])
                if node is None or r["node"] == node]
        return sorted(rows, key=lambda r: (r["ts"], r["node"], r["stream"]))

    def experiments(self) -> list[str]:
        return sorted(self._lines)

    def bundle(self, experiment: str) -> bytes:
        """Deterministic gzip tar of per-node log files plus a manifest."""
        per_node: dict[str, list[dict]] = {}
        for row in self.lines(experiment):
            per_node.setdefault(row["node"], []).append(row)

        members: dict[str, bytes] = {}
        node_counts = {}
        for node, rows in per_node.items():
            text = "".join(f"{row['ts']!r}\t{row['stream']}\t{row['line']}\n"
                           for row in rows)
            members[f"logs/{node}.log"] = text.encode("utf-8")
            node_counts[node] = len(rows)
        members["manifest.json"] = canonical_json({
            "experiment": experiment,
            "nodes": node_counts,
            "line_format": "ts<TAB>stream<TAB>line",
        }).encode("utf-8")

        raw = io.BytesIO()
        # mtime=0 in both the gzip header and the tar entries keeps the
        # archive independent of when it was produced.
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
            with tarfile.open(fileobj=gz, mode="w") as tar:
                for name in sorted(members):
                    data = members[name]
                    info = tarfile.TarInfo(name=name)
                    info.size = len(data)
                    info.mtime = 0
                    info.uid = info.gid = 0
                    info.uname = info.gname = ""
                    tar.addfile(info, io.BytesIO(data))
        return raw.getvalue()
