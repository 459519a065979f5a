"""Externally visible actions as a line-delimited trace.

One record per line: time, seq, kind, then kind-specific key=value fields,
all tab-separated. The same format is emitted by the simulator and the
socket transport and consumed by the checker and the metrics tooling.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional
from urllib.parse import quote_from_bytes, unquote_to_bytes

HEADER_LINE = "#paris-trace v1"

START_TX = "StartTx"
READ_SERVE = "ReadServe"
READ_RESULT = "ReadResult"
COMMIT_DONE = "CommitDone"
APPLY_LOCAL = "ApplyLocal"
APPLY_REPLICATED = "ApplyReplicated"
HEARTBEAT_RECV = "HeartbeatRecv"
FLOOR_ADVANCE = "FloorAdvance"
UST_ADVANCE = "UstAdvance"
BLOCKED_READ = "BlockedRead"

KINDS = (
    START_TX,
    READ_SERVE,
    READ_RESULT,
    COMMIT_DONE,
    APPLY_LOCAL,
    APPLY_REPLICATED,
    HEARTBEAT_RECV,
    FLOOR_ADVANCE,
    UST_ADVANCE,
    BLOCKED_READ,
)


class TraceFormatError(Exception):
    pass


def encode_key(key: bytes) -> str:
    return quote_from_bytes(key, safe="")


def decode_key(text: str) -> bytes:
    return unquote_to_bytes(text)


@dataclass(frozen=True)
class TraceEvent:
    time: int
    seq: int
    kind: str
    fields: dict

    def __getitem__(self, name: str) -> str:
        return self.fields[name]

    def get(self, name: str, default: Optional[str] = None) -> Optional[str]:
        return self.fields.get(name, default)

    def int_field(self, name: str) -> int:
        return int(self.fields[name])


class TraceCollector:
    """Accumulates trace lines in order; seq is assigned at record time."""

    def __init__(self):
        self.lines: list[str] = [HEADER_LINE]
        self._seq = 0

    def record(self, time: int, kind: str, **fields) -> None:
        parts = [str(time), str(self._seq), kind]
        self._seq += 1
        for name, value in fields.items():
            parts.append(f"{name}={value}")
        self.lines.append("\t".join(parts))

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines:
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            for line in self.lines:
                fh.write(line)
                fh.write("\n")

    def events(self) -> list[TraceEvent]:
        return list(parse_lines(self.lines))


def parse_line(line: str) -> TraceEvent:
    parts = line.rstrip("\n").split("\t")
    if len(parts) < 3:
        raise TraceFormatError(f"short trace line: {line!r}")
    try:
        time, seq = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise TraceFormatError(f"bad time/seq in {line!r}") from exc
    kind = parts[2]
    fields = {}
    for token in parts[3:]:
        name, eq, value = token.partition("=")
        if not eq:
            raise TraceFormatError(f"bad field token {token!r} in {line!r}")
        fields[name] = value
    return TraceEvent(time, seq, kind, fields)


def parse_lines(lines: Iterable[str]) -> Iterator[TraceEvent]:
    first = True
    for line in lines:
        line = line.rstrip("\n")
        if not line:
            continue
        if first:
            first = False
            if line.startswith("#"):
                if line != HEADER_LINE:
                    raise TraceFormatError(f"unsupported trace header {line!r}")
                continue
        if line.startswith("#"):
            continue
        yield parse_line(line)


def read_trace(path: str) -> list[TraceEvent]:
    with open(path) as fh:
        return list(parse_lines(fh))
