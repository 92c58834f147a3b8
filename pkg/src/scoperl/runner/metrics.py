"""JSON-lines metric log.

The first line is a metadata header; every later line is one
:class:`MetricRecord`.  Wall-clock stamps are opt-in so that two runs with
the same seed produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

from ..trainers import MetricCallback

FORMAT_VERSION = 1


@dataclass(frozen=True)
class MetricRecord:
    timestep: int
    agent_id: str
    name: str
    value: float
    wall_clock: float | None = None

    def to_json(self) -> str:
        value = float(self.value)
        row = {"timestep": int(self.timestep), "agent_id": self.agent_id, "metric": self.name,
               "value": value if math.isfinite(value) else None}
        if self.wall_clock is not None:
            row["wall_clock"] = self.wall_clock
        return json.dumps(row, sort_keys=True)


class MetricLogError(RuntimeError):
    pass


class JsonlSink(MetricCallback):
    """Single-writer metric file; records are buffered until :meth:`flush`."""

    def __init__(self, path, metadata: dict, wall_clock: bool = False):
        self.path = Path(path)
        self.wall_clock = wall_clock
        self._buffer: list[str] = []
        self._last_step: dict[str, int] = {}
        self.closed = False
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("w", encoding="utf-8", newline="\n")
        except OSError as exc:
            raise MetricLogError(f"cannot open metric log {self.path}: {exc}") from exc
        header = {"kind": "header", "format_version": FORMAT_VERSION, **metadata}
        self._write(json.dumps(header, sort_keys=True) + "\n")

    def _write(self, text: str) -> None:
        try:
            self._fh.write(text)
            self._fh.flush()
        except OSError as exc:
            raise MetricLogError(f"writing metric log {self.path} failed: {exc}") from exc

    def append(self, record: MetricRecord) -> None:
        if self.closed:
            raise MetricLogError("metric sink is closed")
        last = self._last_step.get(record.agent_id)
        if last is not None and record.timestep < last:
            raise MetricLogError(f"timestep went backwards for {record.agent_id!r}: {record.timestep} < {last}")
        self._last_step[record.agent_id] = record.timestep
        self._buffer.append(record.to_json())

    def log(self, timestep: int, agent_id: str, name: str, value: float) -> None:
        stamp = time.time() if self.wall_clock else None
        self.append(MetricRecord(timestep, agent_id, name, value, stamp))

    def flush(self) -> None:
        if self._buffer:
            self._write("".join(line + "\n" for line in self._buffer))
            self._buffer.clear()

    def close(self) -> None:
        if not self.closed:
            self.flush()
            self._fh.close()
            self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def log_metric(sink: JsonlSink, record: MetricRecord) -> None:
    sink.append(record)


def read_metric_log(path) -> tuple[dict, list[dict]]:
    """Return ``(header, records)`` from a metric file."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise MetricLogError(f"{path}: empty metric log")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise MetricLogError(f"{path}: first line is not a metadata header")
    return header, [json.loads(line) for line in lines[1:] if line]
