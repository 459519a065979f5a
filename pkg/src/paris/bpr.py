"""Blocking partial replication baseline.

Same machinery as the non-blocking server except for two deliberate
differences: transaction snapshots come from the coordinator's current
clock (fresh, not stable), and slice reads park until the serving replica
has applied everything up to the snapshot (min over its version vector).

Piggybacked snapshots are clock-derived here, so they are NOT folded into
ust: ust must keep meaning "applied everywhere", both for GC safety and
for the freshness comparison against the non-blocking protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import messages as m
from . import trace as tr
from .server import PartitionServer


@dataclass
class _ParkedRead:
    src: str
    msg: m.ReadSliceReq
    parked_at: int


class BprServer(PartitionServer):
    protocol_name = "bpr"

    def __init__(self, env, config, dc: int, partition: int):
        super().__init__(env, config, dc, partition)
        self.wait_queue: list[_ParkedRead] = []

    def _assign_snapshot(self, ust_c: int) -> int:
        return max(ust_c, self.physical(), self.hlc)

    def _absorb_snapshot(self, t: int) -> None:
        pass

    def handle_read_slice(self, src: str, msg: m.ReadSliceReq) -> None:
        if min(self.vv) >= msg.ust:
            self._serve_slice(src, msg)
            return
        self.wait_queue.append(_ParkedRead(src, msg, self.env.now_us()))
        self.env.stats.wait_insertions += 1
        self.env.stats.blocked_reads += 1

    def _floor_changed(self) -> None:
        if not self.wait_queue:
            return
        floor = min(self.vv)
        still_parked = []
        for parked in self.wait_queue:
            if floor >= parked.msg.ust:
                now = self.env.now_us()
                blocked_for = now - parked.parked_at
                self.env.stats.blocked_time_us += blocked_for
                self.env.record(
                    tr.BLOCKED_READ,
                    server=self.addr,
                    snapshot=parked.msg.ust,
                    parked_at=parked.parked_at,
                    dur=blocked_for,
                )
                self._serve_slice(parked.src, parked.msg)
            else:
                still_parked.append(parked)
        self.wait_queue = still_parked
