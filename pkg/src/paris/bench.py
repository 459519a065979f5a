"""Experiment driver: closed-loop sessions, metrics, visibility analysis.

Throughput and latency here are measured in simulated time; they compare
protocols against each other, they do not benchmark hardware.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from . import trace as tr
from .bpr import BprServer
from .client import ClientSession
from .clocks import TxId
from .server import PartitionServer
from .sim import Simulation, client_addr, parse_server_addr, server_addr
from .topology import ClusterConfig
from .trace import TraceEvent
from .workload import TxPlan, key_pools, session_plan

PROTOCOLS = ("paris", "bpr")


@dataclass
class Metrics:
    committed: int = 0
    read_ops: int = 0
    write_ops: int = 0
    start_latencies: list = field(default_factory=list)
    read_latencies: list = field(default_factory=list)
    commit_latencies: list = field(default_factory=list)
    tx_latencies: list = field(default_factory=list)
    sim_duration_us: int = 0
    blocked_reads: int = 0
    blocked_time_us: int = 0
    wait_insertions: int = 0

    def throughput_tx_per_s(self) -> float:
        if self.sim_duration_us == 0:
            return 0.0
        return self.committed / (self.sim_duration_us / 1e6)

    def mean_blocked_us(self) -> float:
        if self.blocked_reads == 0:
            return 0.0
        return self.blocked_time_us / self.blocked_reads

    def rows(self) -> list[tuple[str, str]]:
        out = [
            ("committed_txs", str(self.committed)),
            ("read_ops", str(self.read_ops)),
            ("write_ops", str(self.write_ops)),
            ("sim_duration_us", str(self.sim_duration_us)),
            ("throughput_tx_per_s", f"{self.throughput_tx_per_s():.3f}"),
            ("blocked_reads", str(self.blocked_reads)),
            ("blocked_time_us", str(self.blocked_time_us)),
            ("mean_blocked_us", f"{self.mean_blocked_us():.3f}"),
        ]
        for name, values in (
            ("start", self.start_latencies),
            ("read", self.read_latencies),
            ("commit", self.commit_latencies),
            ("tx", self.tx_latencies),
        ):
            if values:
                ordered = sorted(values)
                out.append((f"{name}_latency_us_mean", f"{sum(values) / len(values):.1f}"))
                for pct in (50, 90, 99):
                    out.append((f"{name}_latency_us_p{pct}", str(percentile(ordered, pct))))
        return out


def percentile(ordered: list, pct: float):
    if not ordered:
        raise ValueError("empty sample list")
    rank = max(0, min(len(ordered) - 1, -(-len(ordered) * pct // 100) - 1))
    return ordered[int(rank)]


class SessionDriver:
    """Closed-loop execution of a precomputed transaction plan."""

    def __init__(self, sim: Simulation, session: ClientSession, plans: list[TxPlan],
                 metrics: Metrics, stop_at_us: int = 0):
        self.sim = sim
        self.session = session
        self.plans = plans
        self.metrics = metrics
        self.stop_at_us = stop_at_us
        self.idx = 0
        self.done = False
        self._t0 = 0
        self._t_read = 0

    def on_timer(self, kind: str) -> None:
        if kind == "kick":
            self._next_tx()

    def on_message(self, src: str, msg) -> None:
        self.session.on_message(src, msg)

    def _next_tx(self) -> None:
        if self.idx >= len(self.plans) or (
            self.stop_at_us and self.sim.now_us() >= self.stop_at_us
        ):
            self.done = True
            return
        self._t0 = self.sim.now_us()
        self.session.start(self._after_start)

    def _after_start(self, tx: TxId, snapshot: int) -> None:
        self.metrics.start_latencies.append(self.sim.now_us() - self._t0)
        self._t_read = self.sim.now_us()
        plan = self.plans[self.idx]
        if plan.reads:
            self.session.read(plan.reads, self._after_read)
        else:
            self._after_read({})

    def _after_read(self, result: dict) -> None:
        now = self.sim.now_us()
        plan = self.plans[self.idx]
        self.metrics.read_latencies.append(now - self._t_read)
        self.metrics.read_ops += len(plan.reads)
        if plan.writes:
            self.session.write(plan.writes)
            self._t_commit = now
            self.session.commit(self._after_commit)
        else:
            self.session.finish()
            self._tx_done()

    def _after_commit(self, ct: int) -> None:
        now = self.sim.now_us()
        plan = self.plans[self.idx]
        self.metrics.commit_latencies.append(now - self._t_commit)
        self.metrics.write_ops += len(plan.writes)
        self.metrics.committed += 1
        self._tx_done()

    def _tx_done(self) -> None:
        self.metrics.tx_latencies.append(self.sim.now_us() - self._t0)
        self.idx += 1
        self._next_tx()


@dataclass
class ExperimentResult:
    config: ClusterConfig
    seed: int
    protocol: str
    metrics: Metrics
    trace: object  # TraceCollector
    stats: object  # sim Stats
    digest: str
    servers: dict

    def events(self) -> list[TraceEvent]:
        return self.trace.events()


def build_cluster(sim: Simulation, config: ClusterConfig, protocol: str) -> dict:
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    server_cls = PartitionServer if protocol == "paris" else BprServer
    servers = {}
    for dc, n in config.servers():
        server = server_cls(sim, config, dc, n)
        sim.add_actor(server.addr, server, dc)
        servers[server.addr] = server
    for server in servers.values():
        server.start_timers()
    return servers


def build_sessions(sim: Simulation, config: ClusterConfig, seed: int,
                   metrics: Metrics, stop_at_us: int = 0) -> list[SessionDriver]:
    pools = key_pools(config)
    drivers = []
    for dc in range(config.dcs):
        local = config.local_partitions(dc)
        for idx in range(config.workload.sessions_per_dc):
            addr = client_addr(dc, idx)
            coordinator = server_addr(dc, local[idx % len(local)])
            session = ClientSession(sim, config, addr, dc, coordinator)
            plans = session_plan(config, seed, dc, idx, pools)
            driver = SessionDriver(sim, session, plans, metrics, stop_at_us)
            driver.session = session
            sim.add_actor(addr, driver, dc)
            sim.at(addr, "kick", 0)
            drivers.append(driver)
    return drivers


def run_experiment(config: ClusterConfig, seed: int, protocol: str = "paris",
                   out_dir: str | None = None, gc_verify: bool = False,
                   max_sim_time_us: int = 600_000_000) -> ExperimentResult:
    """One full run: execute every session's plan, then settle until the
    stable snapshot covers every commit (so visibility samples are complete).
    """
    sim = Simulation(config, seed, gc_verify=gc_verify)
    servers = build_cluster(sim, config, protocol)
    metrics = Metrics()
    stop_at = config.workload.duration_us
    drivers = build_sessions(sim, config, seed, metrics, stop_at)

    sim.run_while(
        lambda: not all(d.done for d in drivers),
        chunk_us=20_000,
        max_time=max_sim_time_us,
    )
    target = sim.stats.max_ct
    sim.run_while(
        lambda: any(s.ust < target for s in servers.values()),
        chunk_us=20_000,
        max_time=max_sim_time_us,
    )

    metrics.sim_duration_us = sim.now_us()
    metrics.blocked_reads = sim.stats.blocked_reads
    metrics.blocked_time_us = sim.stats.blocked_time_us
    metrics.wait_insertions = sim.stats.wait_insertions

    result = ExperimentResult(
        config=config,
        seed=seed,
        protocol=protocol,
        metrics=metrics,
        trace=sim.trace,
        stats=sim.stats,
        digest=sim.trace.digest(),
        servers=servers,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        sim.trace.write(os.path.join(out_dir, f"{protocol}-{seed}.trace"))
        write_metrics_csv(result, os.path.join(out_dir, f"{protocol}-{seed}-metrics.csv"))
    return result


def write_metrics_csv(result: ExperimentResult, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("metric,value\n")
        for name, value in result.metrics.rows():
            fh.write(f"{name},{value}\n")
        for name, value in sorted(result.stats.snapshot().items()):
            fh.write(f"sim_{name},{value}\n")


# -- visibility latency -----------------------------------------------------


@dataclass(frozen=True)
class VisibilitySample:
    session: str
    session_seq: int
    tx: str
    partition: int
    origin_dc: int
    target_dc: int
    commit_us: int
    visible_us: int

    @property
    def latency_us(self) -> int:
        return self.visible_us - self.commit_us


def _first_time_at_or_above(steps: list[tuple[int, int]], value: int) -> int | None:
    """steps = [(time, level)...] with non-decreasing level; first time level >= value."""
    lo, hi = 0, len(steps)
    while lo < hi:
        mid = (lo + hi) // 2
        if steps[mid][1] < value:
            lo = mid + 1
        else:
            hi = mid
    if lo == len(steps):
        return None
    return steps[lo][0]


def visibility_samples(events: list[TraceEvent], config: ClusterConfig,
                       protocol: str) -> list[VisibilitySample]:
    """Per (update, remote replica) visibility per the protocol's rule.

    Non-blocking mode: the update is readable at a replica once that
    replica's ust reaches ct. Blocking mode: once its applied floor does.
    """
    kind = tr.UST_ADVANCE if protocol == "paris" else tr.FLOOR_ADVANCE
    field_name = "ust" if protocol == "paris" else "floor"
    steps: dict[str, list[tuple[int, int]]] = {}
    origins: dict[tuple[str, int], int] = {}
    session_seq: dict[str, int] = {}
    samples: list[VisibilitySample] = []

    for ev in events:
        if ev.kind == kind:
            steps.setdefault(ev["server"], []).append((ev.time, ev.int_field(field_name)))
        elif ev.kind == tr.APPLY_LOCAL:
            dc, part = parse_server_addr(ev["server"])
            for tx_str in ev["txs"].split(","):
                origins[(tx_str, part)] = dc

    for ev in events:
        if ev.kind != tr.COMMIT_DONE:
            continue
        session = ev["session"]
        seq = session_seq.get(session, 0)
        session_seq[session] = seq + 1
        ct = ev.int_field("ct")
        parts = sorted({int(token.rsplit("@", 1)[1]) for token in ev["writes"].split(",")})
        for part in parts:
            origin = origins.get((ev["tx"], part))
            if origin is None:
                continue  # update never applied (truncated run)
            for target_dc in config.replicas(part):
                if target_dc == origin:
                    continue
                server_steps = steps.get(server_addr(target_dc, part), [])
                visible = _first_time_at_or_above(server_steps, ct)
                if visible is None:
                    continue
                samples.append(
                    VisibilitySample(
                        session=session,
                        session_seq=seq,
                        tx=ev["tx"],
                        partition=part,
                        origin_dc=origin,
                        target_dc=target_dc,
                        commit_us=ev.time,
                        visible_us=visible,
                    )
                )
    return samples


VISIBILITY_PERCENTILES = (1, 5, 10, 25, 50, 75, 90, 95, 99, 100)


def visibility_cdf(samples: list[VisibilitySample]) -> list[tuple[int, float]]:
    """Per-partition CDFs averaged per percentile: [(pct, mean_latency_us)]."""
    by_partition: dict[int, list[int]] = {}
    for s in samples:
        by_partition.setdefault(s.partition, []).append(s.latency_us)
    for latencies in by_partition.values():
        latencies.sort()
    table = []
    for pct in VISIBILITY_PERCENTILES:
        values = [percentile(lat, pct) for lat in by_partition.values() if lat]
        if values:
            table.append((pct, sum(values) / len(values)))
    return table


def write_visibility_csv(table: list[tuple[int, float]], path: str) -> None:
    with open(path, "w") as fh:
        fh.write("percentile,mean_visibility_us\n")
        for pct, value in table:
            fh.write(f"{pct},{value:.1f}\n")
