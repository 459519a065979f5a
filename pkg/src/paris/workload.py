"""YCSB-style workload generation.

Transactions execute one parallel read batch followed by one parallel
write batch (20 operations total, split by the r:w ratio). Keys are drawn
zipfian within per-partition pools; the partition set of a transaction is
local-DC-only or cluster-wide according to the locality ratio. Everything
is a pure function of (seed, dc, session index), so paired runs of the two
protocols execute identical operation streams.
"""

from __future__ import annotations

import bisect
import random
import struct
from dataclasses import dataclass

from .topology import ClusterConfig


@dataclass(frozen=True)
class TxPlan:
    reads: tuple[bytes, ...]
    writes: tuple[tuple[bytes, bytes], ...]


class ZipfSampler:
    """Zipfian ranks over [0, n) via the inverse CDF."""

    _cache: dict[tuple[int, float], list[float]] = {}

    def __init__(self, n: int, theta: float):
        key = (n, theta)
        cdf = self._cache.get(key)
        if cdf is None:
            weights = [1.0 / (i + 1) ** theta for i in range(n)]
            total = sum(weights)
            acc, cdf = 0.0, []
            for w in weights:
                acc += w / total
                cdf.append(acc)
            cdf[-1] = 1.0
            self._cache[key] = cdf
        self._cdf = cdf

    def sample(self, rng: random.Random) -> int:
        return bisect.bisect_left(self._cdf, rng.random())


def key_pools(config: ClusterConfig) -> list[list[bytes]]:
    """Per-partition key pools; assignment follows the routing hash."""
    pools: list[list[bytes]] = [[] for _ in range(config.partitions)]
    for i in range(config.workload.keys):
        key = f"k{i:08d}".encode()
        pools[config.partition_of(key)].append(key)
    return pools


def make_value(size: int, tag: int, counter: int) -> bytes:
    raw = struct.pack("<II", tag & 0xFFFFFFFF, counter & 0xFFFFFFFF)
    if size <= len(raw):
        return raw[:size]
    return (raw * (size // len(raw) + 1))[:size]


def generate_transaction(config: ClusterConfig, rng: random.Random,
                         pools: list[list[bytes]], local_partitions: list[int],
                         value_tag: int, counter: int) -> TxPlan:
    """One transaction: a read batch then a write batch, keys zipfian."""
    wl = config.workload
    nonempty = [n for n in range(config.partitions) if pools[n]]
    local_nonempty = [n for n in local_partitions if pools[n]]
    local_only = rng.random() * 100 < wl.locality_pct
    candidates = local_nonempty if (local_only and local_nonempty) else nonempty
    count = min(wl.partitions_per_tx, len(candidates))
    parts = rng.sample(candidates, count)

    def pick_key() -> bytes:
        part = parts[rng.randrange(len(parts))]
        pool = pools[part]
        return pool[ZipfSampler(len(pool), wl.zipf_theta).sample(rng)]

    reads = tuple(pick_key() for _ in range(wl.reads_per_tx))
    writes: dict[bytes, bytes] = {}
    for i in range(wl.writes_per_tx):
        key = pick_key()
        for _ in range(8):  # prefer distinct keys; tiny pools may collide
            if key not in writes:
                break
            key = pick_key()
        writes[key] = make_value(wl.value_bytes, value_tag, counter * 64 + i)
    return TxPlan(reads, tuple(writes.items()))


def session_plan(config: ClusterConfig, seed: int, dc: int, session_idx: int,
                 pools: list[list[bytes]] | None = None) -> list[TxPlan]:
    """The full deterministic op stream for one session."""
    if pools is None:
        pools = key_pools(config)
    rng = random.Random(f"{seed}:wl:{dc}:{session_idx}")
    local = config.local_partitions(dc)
    tag = dc * 4096 + session_idx
    return [
        generate_transaction(config, rng, pools, local, tag, i)
        for i in range(config.workload.txs_per_session)
    ]
