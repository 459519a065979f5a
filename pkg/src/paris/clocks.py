"""Timestamps, hybrid logical clock arithmetic, and version ordering.

Every other module shares these primitives. Timestamps are plain 64-bit
tick counters: the "physical" half of the hybrid clock is whatever the
hosting environment reports (the simulator's skewed per-server clock, or
a monotonic reading in the socket transport), so no bit-packing is needed.
"""

from __future__ import annotations

from typing import NamedTuple

Timestamp = int

# Ticks are u64 on the wire; exceeding this is a fatal fault, not a wrap.
MAX_TIMESTAMP = 2**64 - 1


class TxId(NamedTuple):
    """Globally unique transaction id, totally ordered lexicographically."""

    dc: int
    partition: int
    seq: int

    def __str__(self) -> str:
        return f"{self.dc}.{self.partition}.{self.seq}"

    @classmethod
    def parse(cls, text: str) -> "TxId":
        dc, partition, seq = text.split(".")
        return cls(int(dc), int(partition), int(seq))


class VersionStamp(NamedTuple):
    """Total order over item versions: update time, then tx id, then origin DC.

    Concurrent writes to one key resolve last-writer-wins under this order.
    """

    ut: Timestamp
    tx: TxId
    sr: int


def hlc_update_on_prepare(physical: Timestamp, hlc: Timestamp, ht: Timestamp) -> Timestamp:
    """Advance the clock for a prepare carrying the client's high time ht.

    Returns max(physical, ht + 1, hlc + 1): strictly above both the current
    clock value and ht, so the proposed commit time reflects causality.
    """
    value = max(physical, ht + 1, hlc + 1)
    if value > MAX_TIMESTAMP:
        raise OverflowError("hybrid clock exceeded 64 bits")
    return value

def hlc_update_on_commit(physical: Timestamp, hlc: Timestamp, ct: Timestamp) -> Timestamp:
    """Advance the clock past a decided commit time ct (never decreases)."""
    return max(hlc, ct, physical)


def version_cmp(a: VersionStamp, b: VersionStamp) -> int:
    """-1, 0, or +1 for a <, ==, > b in the (ut, tx, sr) order."""
    if a < b:
        return -1
    if a > b:
        return 1
    return 0
