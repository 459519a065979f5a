"""Protocol message schema.

One frozen dataclass per message kind; the same values travel in-memory in
the simulator and as length-prefixed frames over sockets (see wire module).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .clocks import Timestamp, TxId
from .storage import Version

WriteSet = tuple[tuple[bytes, bytes], ...]


def write_set(pairs) -> WriteSet:
    return tuple((bytes(k), bytes(v)) for k, v in pairs)


@dataclass(frozen=True)
class Hello:
    """Transport-level handshake identifying the connecting endpoint."""

    sender: str


@dataclass(frozen=True)
class StartTxReq:
    ust_c: Timestamp


@dataclass(frozen=True)
class StartTxResp:
    tx: TxId
    ust: Timestamp


@dataclass(frozen=True)
class ReadReq:
    tx: TxId
    keys: tuple[bytes, ...]


@dataclass(frozen=True)
class ReadResp:
    items: tuple[Version, ...]


@dataclass(frozen=True)
class ReadSliceReq:
    rid: int
    keys: tuple[bytes, ...]
    ust: Timestamp
    tx: TxId


@dataclass(frozen=True)
class ReadSliceResp:
    rid: int
    items: tuple[Version, ...]


@dataclass(frozen=True)
class PrepareReq:
    tx: TxId
    ust: Timestamp
    ht: Timestamp
    writes: WriteSet


@dataclass(frozen=True)
class PrepareResp:
    tx: TxId
    pt: Timestamp


@dataclass(frozen=True)
class CommitReqClient:
    tx: TxId
    hwt: Timestamp
    ws: WriteSet


@dataclass(frozen=True)
class CommitReqCohort:
    tx: TxId
    ct: Timestamp


@dataclass(frozen=True)
class CommitResp:
    ct: Timestamp


@dataclass(frozen=True)
class Replicate:
    groups: tuple[tuple[TxId, WriteSet], ...]
    ct: Timestamp


@dataclass(frozen=True)
class Heartbeat:
    t: Timestamp


@dataclass(frozen=True)
class GsvUp:
    round: int
    mins: tuple[tuple[int, Timestamp], ...]


@dataclass(frozen=True)
class GsvDown:
    round: int
    gsv: tuple[tuple[int, Timestamp], ...]


@dataclass(frozen=True)
class RootExchange:
    dc: int
    aggregate: tuple[tuple[int, Timestamp], ...]
    s_old: Timestamp


@dataclass(frozen=True)
class SOldUp:
    round: int
    t: Timestamp


@dataclass(frozen=True)
class SOldDown:
    t: Timestamp


@dataclass(frozen=True)
class UstDown:
    ust: Timestamp


MESSAGE_TYPES = (
    Hello,
    StartTxReq,
    StartTxResp,
    ReadReq,
    ReadResp,
    ReadSliceReq,
    ReadSliceResp,
    PrepareReq,
    PrepareResp,
    CommitReqClient,
    CommitReqCohort,
    CommitResp,
    Replicate,
    Heartbeat,
    GsvUp,
    GsvDown,
    RootExchange,
    SOldUp,
    SOldDown,
    UstDown,
)

Message = object  # any of MESSAGE_TYPES
