"""Length-prefixed binary framing for the message schema.

Frame = 4-byte big-endian length (tag + body), 1-byte tag, body.
Body integers are little-endian; byte strings and sequences carry a
little-endian u32 length/count prefix. encode/decode round-trip exactly.
"""

from __future__ import annotations

import struct

from . import messages as m
from .clocks import TxId
from .storage import Version

HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024


class WireError(Exception):
    pass


class NeedMoreBytes(Exception):
    """The buffer does not yet hold a complete frame."""


TAG_OF = {cls: tag for tag, cls in enumerate(m.MESSAGE_TYPES)}
TYPE_OF = {tag: cls for tag, cls in enumerate(m.MESSAGE_TYPES)}


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u32(self, v: int):
        self.parts.append(struct.pack("<I", v))

    def u64(self, v: int):
        self.parts.append(struct.pack("<Q", v))

    def blob(self, v: bytes):
        self.parts.append(struct.pack("<I", len(v)))
        self.parts.append(bytes(v))

    def txid(self, tx: TxId):
        self.parts.append(struct.pack("<IIQ", tx.dc, tx.partition, tx.seq))

    def version(self, v: Version):
        self.blob(v.key)
        self.blob(v.value)
        self.u64(v.ut)
        self.txid(v.tx)
        self.u32(v.sr)

    def pairs(self, ws):
        self.u32(len(ws))
        for k, v in ws:
            self.blob(k)
            self.blob(v)

    def vec(self, entries):
        """Sequence of (dc, timestamp) pairs."""
        self.u32(len(entries))
        for dc, t in entries:
            self.u32(dc)
            self.u64(t)

    def done(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireError("truncated body")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def blob(self) -> bytes:
        return self._take(self.u32())

    def txid(self) -> TxId:
        dc, part, seq = struct.unpack("<IIQ", self._take(16))
        return TxId(dc, part, seq)

    def version(self) -> Version:
        key = self.blob()
        value = self.blob()
        ut = self.u64()
        tx = self.txid()
        sr = self.u32()
        return Version(key, value, ut, tx, sr)

    def pairs(self) -> tuple:
        return tuple((self.blob(), self.blob()) for _ in range(self.u32()))

    def vec(self) -> tuple:
        return tuple((self.u32(), self.u64()) for _ in range(self.u32()))

    def expect_end(self):
        if self.pos != len(self.data):
            raise WireError(f"{len(self.data) - self.pos} trailing bytes in frame")


def _encode_body(msg, w: _Writer) -> None:
    t = type(msg)
    if t is m.Hello:
        w.blob(msg.sender.encode())
    elif t is m.StartTxReq:
        w.u64(msg.ust_c)
    elif t is m.StartTxResp:
        w.txid(msg.tx)
        w.u64(msg.ust)
    elif t is m.ReadReq:
        w.txid(msg.tx)
        w.u32(len(msg.keys))
        for k in msg.keys:
            w.blob(k)
    elif t is m.ReadResp:
        w.u32(len(msg.items))
        for item in msg.items:
            w.version(item)
    elif t is m.ReadSliceReq:
        w.u64(msg.rid)
        w.u32(len(msg.keys))
        for k in msg.keys:
            w.blob(k)
        w.u64(msg.ust)
        w.txid(msg.tx)
    elif t is m.ReadSliceResp:
        w.u64(msg.rid)
        w.u32(len(msg.items))
        for item in msg.items:
            w.version(item)
    elif t is m.PrepareReq:
        w.txid(msg.tx)
        w.u64(msg.ust)
        w.u64(msg.ht)
        w.pairs(msg.writes)
    elif t is m.PrepareResp:
        w.txid(msg.tx)
        w.u64(msg.pt)
    elif t is m.CommitReqClient:
        w.txid(msg.tx)
        w.u64(msg.hwt)
        w.pairs(msg.ws)
    elif t is m.CommitReqCohort:
        w.txid(msg.tx)
        w.u64(msg.ct)
    elif t is m.CommitResp:
        w.u64(msg.ct)
    elif t is m.Replicate:
        w.u32(len(msg.groups))
        for tx, ws in msg.groups:
            w.txid(tx)
            w.pairs(ws)
        w.u64(msg.ct)
    elif t is m.Heartbeat:
        w.u64(msg.t)
    elif t is m.GsvUp:
        w.u32(msg.round)
        w.vec(msg.mins)
    elif t is m.GsvDown:
        w.u32(msg.round)
        w.vec(msg.gsv)
    elif t is m.RootExchange:
        w.u32(msg.dc)
        w.vec(msg.aggregate)
        w.u64(msg.s_old)
    elif t is m.SOldUp:
        w.u32(msg.round)
        w.u64(msg.t)
    elif t is m.SOldDown:
        w.u64(msg.t)
    elif t is m.UstDown:
        w.u64(msg.ust)
    else:
        raise WireError(f"cannot encode {t.__name__}")


def _decode_body(tag: int, r: _Reader):
    t = TYPE_OF.get(tag)
    if t is None:
        raise WireError(f"unknown message tag {tag:#x}")
    if t is m.Hello:
        return m.Hello(r.blob().decode())
    if t is m.StartTxReq:
        return m.StartTxReq(r.u64())
    if t is m.StartTxResp:
        return m.StartTxResp(r.txid(), r.u64())
    if t is m.ReadReq:
        tx = r.txid()
        keys = tuple(r.blob() for _ in range(r.u32()))
        return m.ReadReq(tx, keys)
    if t is m.ReadResp:
        return m.ReadResp(tuple(r.version() for _ in range(r.u32())))
    if t is m.ReadSliceReq:
        rid = r.u64()
        keys = tuple(r.blob() for _ in range(r.u32()))
        return m.ReadSliceReq(rid, keys, r.u64(), r.txid())
    if t is m.ReadSliceResp:
        rid = r.u64()
        return m.ReadSliceResp(rid, tuple(r.version() for _ in range(r.u32())))
    if t is m.PrepareReq:
        return m.PrepareReq(r.txid(), r.u64(), r.u64(), r.pairs())
    if t is m.PrepareResp:
        return m.PrepareResp(r.txid(), r.u64())
    if t is m.CommitReqClient:
        return m.CommitReqClient(r.txid(), r.u64(), r.pairs())
    if t is m.CommitReqCohort:
        return m.CommitReqCohort(r.txid(), r.u64())
    if t is m.CommitResp:
        return m.CommitResp(r.u64())
    if t is m.Replicate:
        groups = tuple((r.txid(), r.pairs()) for _ in range(r.u32()))
        return m.Replicate(groups, r.u64())
    if t is m.Heartbeat:
        return m.Heartbeat(r.u64())
    if t is m.GsvUp:
        return m.GsvUp(r.u32(), r.vec())
    if t is m.GsvDown:
        return m.GsvDown(r.u32(), r.vec())
    if t is m.RootExchange:
        return m.RootExchange(r.u32(), r.vec(), r.u64())
    if t is m.SOldUp:
        return m.SOldUp(r.u32(), r.u64())
    if t is m.SOldDown:
        return m.SOldDown(r.u64())
    if t is m.UstDown:
        return m.UstDown(r.u64())
    raise WireError(f"cannot decode tag {tag:#x}")


def encode(msg) -> bytes:
    tag = TAG_OF.get(type(msg))
    if tag is None:
        raise WireError(f"not a protocol message: {type(msg).__name__}")
    w = _Writer()
    _encode_body(msg, w)
    body = w.done()
    return HEADER.pack(1 + len(body)) + bytes([tag]) + body


def decode(buffer: bytes) -> tuple[object, int]:
    """Decode one frame from the front of buffer.

    Returns (message, bytes consumed). Raises NeedMoreBytes if the buffer
    holds less than one complete frame, WireError on malformed content.
    """
    if len(buffer) < 4:
        raise NeedMoreBytes
    (length,) = HEADER.unpack(buffer[:4])
    if length < 1 or length > MAX_FRAME:
        raise WireError(f"bad frame length {length}")
    if len(buffer) < 4 + length:
        raise NeedMoreBytes
    tag = buffer[4]
    r = _Reader(bytes(buffer[5 : 4 + length]))
    msg = _decode_body(tag, r)
    r.expect_end()
    return msg, 4 + length
