"""Client session: buffered writes, cache-first reads, commit, pruning.

A session is single-threaded (closed loop) and pins one coordinator for
its lifetime. Multi-step operations are continuation-based so the same
session runs unchanged under the simulator and the socket transport:
start/read/commit take an on_done callback which fires either
synchronously (fully local reads) or when the response message arrives.
"""

from __future__ import annotations

from typing import Callable, Optional

from . import messages as m
from . import trace as tr
from .clocks import TxId
from .storage import ProtocolFault, Version


class UsageError(Exception):
    """The caller broke the session protocol (e.g. read outside a transaction)."""


class ClientSession:
    def __init__(self, env, config, addr: str, dc: int, coordinator: str):
        self.env = env
        self.config = config
        self.addr = addr
        self.dc = dc
        self.coordinator = coordinator
        self.ust_c = 0  # highest stable snapshot seen
        self.hwt_c = 0  # commit time of the last update transaction
        self.wc: dict[bytes, tuple[bytes, int, TxId]] = {}  # key -> (value, ct, tx)
        self.ws: dict[bytes, bytes] = {}
        self.rs: dict[bytes, Version] = {}
        self.tx: Optional[TxId] = None
        self.snapshot = 0
        self.committed_count = 0
        self._pending: Optional[tuple] = None

    # -- public API ----------------------------------------------------------

    def start(self, on_done: Callable) -> None:
        if self.tx is not None:
            raise UsageError("transaction already open")
        if self._pending is not None:
            raise UsageError("operation already in flight")
        self._pending = ("start", on_done)
        self.env.send(self.addr, self.coordinator, m.StartTxReq(self.ust_c))

    def read(self, keys, on_done: Callable) -> None:
        if self.tx is None:
            raise UsageError("no open transaction")
        if self._pending is not None:
            raise UsageError("operation already in flight")
        result: dict[bytes, Optional[bytes]] = {}
        leftovers: list[bytes] = []
        for k in dict.fromkeys(keys):
            if k in self.ws:
                result[k] = self.ws[k]
                self._record_read(k, "ws")
            elif k in self.rs:
                version = self.rs[k]
                result[k] = version.value
                self._record_read(k, "rs", version.ut, version.tx, version.sr)
            elif k in self.wc:
                value, ct, tx = self.wc[k]
                result[k] = value
                self._record_read(k, "wc", ct, tx, self.dc)
            else:
                leftovers.append(k)
        if not leftovers:
            on_done(result)
            return
        self._pending = ("read", tuple(leftovers), result, on_done)
        self.env.send(self.addr, self.coordinator, m.ReadReq(self.tx, tuple(leftovers)))

    def write(self, pairs) -> None:
        if self.tx is None:
            raise UsageError("no open transaction")
        for k, v in pairs:
            self.ws[bytes(k)] = bytes(v)

    def commit(self, on_done: Callable) -> None:
        if self.tx is None:
            raise UsageError("no open transaction")
        if not self.ws:
            raise UsageError("empty write set; use finish() for read-only transactions")
        if self._pending is not None:
            raise UsageError("operation already in flight")
        self._pending = ("commit", on_done)
        self.env.send(
            self.addr,
            self.coordinator,
            m.CommitReqClient(self.tx, self.hwt_c, m.write_set(self.ws.items())),
        )

    def finish(self) -> None:
        """Locally end a read-only transaction; the coordinator context expires."""
        if self.tx is None:
            raise UsageError("no open transaction")
        if self.ws:
            raise UsageError("transaction has buffered writes; commit instead")
        self.rs.clear()
        self.tx = None

    # -- message handling -------------------------------------------------------

    def on_message(self, src: str, msg) -> None:
        if self._pending is None:
            raise ProtocolFault(f"unexpected {type(msg).__name__} at client {self.addr}")
        kind = self._pending[0]
        if kind == "start" and type(msg) is m.StartTxResp:
            self._on_start_resp(msg)
        elif kind == "read" and type(msg) is m.ReadResp:
            self._on_read_resp(msg)
        elif kind == "commit" and type(msg) is m.CommitResp:
            self._on_commit_resp(msg)
        else:
            raise ProtocolFault(
                f"client {self.addr} awaited {kind}, got {type(msg).__name__}"
            )

    def _on_start_resp(self, msg: m.StartTxResp) -> None:
        _, on_done = self._pending
        self._pending = None
        self.tx = msg.tx
        self.snapshot = msg.ust
        if msg.ust < self.ust_c:
            raise ProtocolFault("snapshot regressed below the session's high mark")
        self.ust_c = msg.ust
        self.rs.clear()
        self.ws.clear()
        for k in [k for k, (_, ct, _) in self.wc.items() if ct <= self.ust_c]:
            del self.wc[k]
        on_done(msg.tx, self.snapshot)

    def _on_read_resp(self, msg: m.ReadResp) -> None:
        _, leftovers, result, on_done = self._pending
        self._pending = None
        for item in msg.items:
            self.rs[item.key] = item
        for k in leftovers:
            version = self.rs.get(k)
            if version is None:
                result[k] = None
                self._record_read(k, "miss")
            else:
                result[k] = version.value
                self._record_read(k, "server", version.ut, version.tx, version.sr)
        on_done(result)

    def _on_commit_resp(self, msg: m.CommitResp) -> None:
        _, on_done = self._pending
        self._pending = None
        ct = msg.ct
        if ct <= self.snapshot:
            raise ProtocolFault(f"commit time {ct} not above snapshot {self.snapshot}")
        if ct <= self.hwt_c:
            raise ProtocolFault(f"commit time {ct} did not advance past hwt {self.hwt_c}")
        self.hwt_c = ct
        tx = self.tx
        for k, v in self.ws.items():
            self.wc[k] = (v, ct, tx)
        self.ws.clear()
        self.rs.clear()
        self.tx = None
        self.committed_count += 1
        on_done(ct)

    def _record_read(self, key: bytes, source: str, ut=None, wtx=None, sr=None) -> None:
        fields = dict(
            session=self.addr,
            tx=self.tx,
            key=tr.encode_key(key),
            src=source,
        )
        if ut is not None:
            fields.update(ut=ut, wtx=wtx, sr=sr)
        self.env.record(tr.READ_RESULT, **fields)
