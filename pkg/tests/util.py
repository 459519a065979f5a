"""Shared test helpers: a scripted environment and cluster builders."""

from __future__ import annotations

from paris.sim import Simulation, Stats
from paris.topology import ClusterConfig, LatencyRange, desk_config
from paris.trace import TraceCollector


class FakeEnv:
    """Hand-cranked environment for exercising handlers in isolation."""

    def __init__(self, physical: int = 0):
        self.t = 0
        self.physical = physical
        self.sent: list[tuple[str, str, object]] = []
        self.stats = Stats()
        self.trace = TraceCollector()
        self.gc_verify = False
        self.timers: list[tuple[str, str, int]] = []

    def now_us(self) -> int:
        return self.t

    def physical_us(self, addr: str) -> int:
        return self.physical

    def send(self, src: str, dst: str, msg) -> None:
        self.sent.append((src, dst, msg))

    def record(self, kind: str, **fields) -> None:
        self.trace.record(self.t, kind, **fields)

    def every(self, addr: str, kind: str, period_us: int) -> None:
        self.timers.append((addr, kind, period_us))

    def take_sent(self) -> list:
        out, self.sent = self.sent, []
        return out


def fast_config(**overrides) -> ClusterConfig:
    """Desk topology with near-zero latencies for quick in-sim unit tests."""
    overrides.setdefault("intra_latency", LatencyRange(10, 50))
    overrides.setdefault("inter_latency", LatencyRange(200, 400))
    return desk_config(**overrides)


def make_cluster(config, protocol="paris", seed=1, timers=True):
    from paris.bench import build_cluster

    sim = Simulation(config, seed)
    servers = build_cluster(sim, config, protocol)
    if not timers:
        # build_cluster registered periodic timers; rebuild without them
        sim = Simulation(config, seed)
        from paris.bpr import BprServer
        from paris.server import PartitionServer

        cls = PartitionServer if protocol == "paris" else BprServer
        servers = {}
        for dc, n in config.servers():
            server = cls(sim, config, dc, n)
            sim.add_actor(server.addr, server, dc)
            servers[server.addr] = server
    return sim, servers


def key_for_partition(config, partition: int, tag: str = "t") -> bytes:
    for i in range(100_000):
        key = f"{tag}{i}".encode()
        if config.partition_of(key) == partition:
            return key
    raise AssertionError(f"no key found for partition {partition}")
