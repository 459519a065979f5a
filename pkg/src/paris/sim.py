"""Deterministic discrete-event harness.

Single-threaded: events (messages and timers) are processed in strict
(deliver_at, seq) order, so identical (config, seed) always replays the
same trace byte for byte. Channels are lossless FIFO point-to-point; each
server reads a private physical clock equal to simulated now plus a
constant per-server skew drawn deterministically from the seed.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from .topology import ClusterConfig
from .trace import TraceCollector

_MSG, _TIMER, _CONTROL = 0, 1, 2


def server_addr(dc: int, partition: int) -> str:
    return f"s{dc}.{partition}"


def client_addr(dc: int, idx: int) -> str:
    return f"c{dc}.{idx}"


def parse_server_addr(addr: str) -> tuple[int, int]:
    dc, partition = addr[1:].split(".")
    return int(dc), int(partition)


@dataclass
class Stats:
    """Run counters; `snapshot` renders them for reports."""

    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    timer_fires: int = 0
    committed: int = 0
    reads_served: int = 0
    blocked_reads: int = 0
    blocked_time_us: int = 0
    wait_insertions: int = 0
    applied_local: int = 0
    applied_replicated: int = 0
    heartbeats: int = 0
    gc_runs: int = 0
    gc_removed: int = 0
    max_ct: int = 0
    by_kind: dict = field(default_factory=dict)

    def count_kind(self, name: str) -> None:
        self.by_kind[name] = self.by_kind.get(name, 0) + 1

    def snapshot(self) -> dict:
        out = {
            k: v
            for k, v in self.__dict__.items()
            if k != "by_kind"
        }
        for name in sorted(self.by_kind):
            out[f"msg_{name}"] = self.by_kind[name]
        return out


class UnknownEndpoint(Exception):
    pass


class Simulation:
    """Event queue, channels, skewed clocks, and actor registry."""

    def __init__(self, config: ClusterConfig, seed: int, trace: TraceCollector | None = None,
                 gc_verify: bool = False):
        self.config = config
        self.seed = seed
        self.now = 0
        self.trace = trace if trace is not None else TraceCollector()
        self.stats = Stats()
        self.gc_verify = gc_verify
        self._heap: list = []
        self._seq = 0
        self._actors: dict[str, object] = {}
        self._dc_of: dict[str, int] = {}
        self._skew: dict[str, int] = {}
        self._channel_last: dict[tuple[str, str], int] = {}
        self._net_rng = random.Random(f"{seed}:net")
        self._severed: set[int] = set()
        self.in_flight = 0

    # -- registry ---------------------------------------------------------

    def add_actor(self, addr: str, actor, dc: int) -> None:
        self._actors[addr] = actor
        self._dc_of[addr] = dc
        self._skew[addr] = random.Random(f"{self.seed}:skew:{addr}").randint(
            0, self.config.skew_max_us
        )

    def actor(self, addr: str):
        return self._actors[addr]

    def actors(self) -> dict:
        return dict(self._actors)

    # -- clocks -----------------------------------------------------------

    def now_us(self) -> int:
        return self.now

    def physical_us(self, addr: str) -> int:
        return self.now + self._skew[addr]

    # -- scheduling -------------------------------------------------------

    def _push(self, time: int, etype: int, a, b, c) -> None:
        heapq.heappush(self._heap, (time, self._seq, etype, a, b, c))
        self._seq += 1

    def every(self, addr: str, kind: str, period_us: int, first_at: int | None = None) -> None:
        """Periodic timer; fires first at `first_at` (default one period in)."""
        at = (self.now + period_us) if first_at is None else first_at
        self._push(at, _TIMER, addr, kind, period_us)

    def at(self, addr: str, kind: str, time: int) -> None:
        self._push(time, _TIMER, addr, kind, 0)

    def send(self, src: str, dst: str, msg) -> None:
        if dst not in self._actors:
            raise UnknownEndpoint(dst)
        src_dc, dst_dc = self._dc_of[src], self._dc_of[dst]
        if src_dc != dst_dc and (src_dc in self._severed or dst_dc in self._severed):
            self.stats.dropped += 1
            return
        rng = self.config.latency_between(src_dc, dst_dc)
        latency = self._net_rng.randint(rng.lo_us, rng.hi_us)
        deliver_at = max(self.now + latency, self._channel_last.get((src, dst), 0))
        self._channel_last[(src, dst)] = deliver_at
        self.stats.sent += 1
        self.stats.count_kind(type(msg).__name__)
        self.in_flight += 1
        self._push(deliver_at, _MSG, src, dst, msg)

    def sever_dc(self, dc: int, at: int) -> None:
        """Cut every channel crossing the DC boundary at the given instant."""
        self._push(at, _CONTROL, "sever", dc, None)

    # -- trace helper -----------------------------------------------------

    def record(self, kind: str, **fields) -> None:
        self.trace.record(self.now, kind, **fields)

    # -- main loop --------------------------------------------------------

    def run_until(self, t: int) -> Stats:
        while self._heap and self._heap[0][0] <= t:
            time, _, etype, a, b, c = heapq.heappop(self._heap)
            self.now = time
            if etype == _MSG:
                self.in_flight -= 1
                self.stats.delivered += 1
                self._actors[b].on_message(a, c)
            elif etype == _TIMER:
                if c:
                    self._push(time + c, _TIMER, a, b, c)
                self.stats.timer_fires += 1
                self._actors[a].on_timer(b)
            else:
                self._apply_sever(b)
        self.now = max(self.now, t)
        return self.stats

    def run_while(self, keep_going, chunk_us: int = 10_000, max_time: int | None = None) -> None:
        """Advance in chunks until keep_going() is false (or max_time hit)."""
        while keep_going():
            if max_time is not None and self.now >= max_time:
                raise RuntimeError(f"simulation did not converge by t={max_time}")
            self.run_until(self.now + chunk_us)

    def _apply_sever(self, dc: int) -> None:
        self._severed.add(dc)
        kept = []
        for entry in self._heap:
            time, seq, etype, a, b, c = entry
            if etype == _MSG:
                src_dc, dst_dc = self._dc_of[a], self._dc_of[b]
                if src_dc != dst_dc and (src_dc in self._severed or dst_dc in self._severed):
                    self.in_flight -= 1
                    self.stats.dropped += 1
                    continue
            kept.append(entry)
        self._heap = kept
        heapq.heapify(self._heap)
