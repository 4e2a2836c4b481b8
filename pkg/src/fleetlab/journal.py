"""Append-only JSON-lines journals.

Both the reservation calendar and the orchestrator persist by appending
one canonical-JSON record per accepted mutation and replaying the file on
startup.  A journal with dir=None is memory-only (tests, sandbox clones).
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterator, Optional

import json

from .model import canonical_json


class Journal:
    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[dict] = []
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self.entries.append(json.loads(line))

    def append(self, record: dict) -> None:
        self.entries.append(record)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(record) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def replay(self) -> Iterator[dict]:
        return iter(list(self.entries))

    def __len__(self) -> int:
        return len(self.entries)
