"""Static cluster layout: partitioning, replica placement, routing, gossip tree.

All simulated time quantities are integer microseconds. A "server" is one
partition replica, addressed by the (dc, partition) pair.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Iterable, Optional

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class ConfigError(Exception):
    pass


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def partition_of(key: bytes, n_partitions: int) -> int:
    """Deterministic home partition of a key (64-bit FNV-1a mod N)."""
    if n_partitions < 1:
        raise ConfigError("partition count must be >= 1")
    return fnv1a64(key) % n_partitions


def round_robin_placement(dcs: int, partitions: int, replication: int) -> list[list[int]]:
    """The default layout: partition i lives in DCs i, i+1, ... mod M."""
    return [[(i + j) % dcs for j in range(replication)] for i in range(partitions)]


@dataclass
class LatencyRange:
    lo_us: int
    hi_us: int

    def __post_init__(self):
        if not (0 <= self.lo_us <= self.hi_us):
            raise ConfigError(f"bad latency range [{self.lo_us}, {self.hi_us}]")


@dataclass
class WorkloadConfig:
    """Bench workload knobs; see workload module for semantics."""

    reads_per_tx: int = 19
    writes_per_tx: int = 1
    locality_pct: int = 95
    partitions_per_tx: int = 4
    zipf_theta: float = 0.99
    keys: int = 10_000
    value_bytes: int = 8
    sessions_per_dc: int = 2
    txs_per_session: int = 50
    duration_us: int = 0

    def __post_init__(self):
        if self.reads_per_tx + self.writes_per_tx != 20:
            raise ConfigError("reads + writes per transaction must equal 20")
        if not (0 <= self.locality_pct <= 100):
            raise ConfigError("locality_pct must be within [0, 100]")


@dataclass
class ClusterConfig:
    dcs: int
    partitions: int
    replication: int
    placement: list[list[int]]
    fanout: int = 2
    delta_r_us: int = 1000
    delta_g_us: int = 5000
    delta_u_us: int = 5000
    tx_timeout_periods: int = 100
    gc_interval_us: int = 50_000
    intra_latency: LatencyRange = field(default_factory=lambda: LatencyRange(100, 500))
    inter_latency: LatencyRange = field(default_factory=lambda: LatencyRange(20_000, 40_000))
    latency_overrides: dict[tuple[int, int], LatencyRange] = field(default_factory=dict)
    skew_max_us: int = 0
    base_port: int = 47000
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)

    def __post_init__(self):
        if not (1 <= self.replication <= self.dcs):
            raise ConfigError("need 1 <= R <= M")
        if len(self.placement) != self.partitions:
            raise ConfigError("placement must list every partition")
        for n, row in enumerate(self.placement):
            if len(row) != self.replication or len(set(row)) != self.replication:
                raise ConfigError(f"partition {n} must be placed in exactly R distinct DCs")
            if any(not (0 <= dc < self.dcs) for dc in row):
                raise ConfigError(f"partition {n} placed in an unknown DC")
        if min(self.delta_r_us, self.delta_g_us, self.delta_u_us) <= 0:
            raise ConfigError("protocol intervals must be positive")
        if self.fanout < 1:
            raise ConfigError("tree fan-out must be >= 1")

    # -- routing ---------------------------------------------------------

    def replicas(self, n: int) -> list[int]:
        """Ordered DC ids hosting partition n."""
        if not (0 <= n < self.partitions):
            raise ConfigError(f"partition {n} out of range")
        return list(self.placement[n])

    def replica_index_for_dc(self, n: int, dc: int) -> int:
        row = self.placement[n]
        try:
            return row.index(dc)
        except ValueError:
            raise RoutingError(f"DC {dc} does not replicate partition {n}") from None

    def target_dc_for_partition(self, n: int, local_dc: int, client_id: Optional[int] = None) -> int:
        """Serving DC for partition n seen from local_dc.

        Local wins when possible; otherwise every client of local_dc shares
        the same preferred remote replica, rotated round-robin across
        (local_dc, n) pairs for balance. client_id is accepted for future
        load-balancing schemes and deliberately unused.
        """
        row = self.placement[n]
        if local_dc in row:
            return local_dc
        return row[(local_dc + n) % self.replication]

    def partition_of(self, key: bytes) -> int:
        return partition_of(key, self.partitions)

    # -- cluster enumeration ----------------------------------------------

    def partitions_in_dc(self, dc: int) -> list[int]:
        return [n for n in range(self.partitions) if dc in self.placement[n]]

    def servers(self) -> list[tuple[int, int]]:
        """All (dc, partition) replicas in a fixed enumeration order."""
        return [(dc, n) for dc in range(self.dcs) for n in self.partitions_in_dc(dc)]

    def local_partitions(self, dc: int) -> list[int]:
        return self.partitions_in_dc(dc)

    # -- gossip tree -------------------------------------------------------

    def tree_links(self, dc: int) -> dict[int, dict]:
        """Rooted fan-out tree over the DC's partition servers.

        Maps partition id -> {"parent": partition or None, "children": [..]}.
        The root is the lowest-numbered partition present in the DC.
        """
        members = self.partitions_in_dc(dc)
        links: dict[int, dict] = {}
        for i, n in enumerate(members):
            parent = members[(i - 1) // self.fanout] if i > 0 else None
            children = [
                members[j]
                for j in range(i * self.fanout + 1, min(i * self.fanout + 1 + self.fanout, len(members)))
            ]
            links[n] = {"parent": parent, "children": children}
        return links

    def tree_root(self, dc: int) -> int:
        members = self.partitions_in_dc(dc)
        if not members:
            raise ConfigError(f"DC {dc} hosts no partitions")
        return members[0]

    def tree_depth(self, dc: int) -> int:
        links = self.tree_links(dc)
        depth = 0
        for n in links:
            d, node = 0, n
            while links[node]["parent"] is not None:
                node = links[node]["parent"]
                d += 1
            depth = max(depth, d)
        return depth

    # -- latency -----------------------------------------------------------

    def latency_between(self, dc_a: int, dc_b: int) -> LatencyRange:
        if dc_a == dc_b:
            return self.latency_overrides.get((dc_a, dc_b), self.intra_latency)
        key = (min(dc_a, dc_b), max(dc_a, dc_b))
        return self.latency_overrides.get(key, self.inter_latency)

    def max_inter_latency_us(self) -> int:
        worst = 0
        for a in range(self.dcs):
            for b in range(a + 1, self.dcs):
                worst = max(worst, self.latency_between(a, b).hi_us)
        return worst


class RoutingError(Exception):
    pass


def desk_config(**overrides) -> ClusterConfig:
    """The small default topology: 3 DCs x 6 partitions, R=2."""
    params = dict(dcs=3, partitions=6, replication=2)
    params.update(overrides)
    params.setdefault(
        "placement",
        round_robin_placement(params["dcs"], params["partitions"], params["replication"]),
    )
    return ClusterConfig(**params)


def paper_scale_config(**overrides) -> ClusterConfig:
    """The large preset: 5 DCs x 45 partitions, R=2."""
    params = dict(dcs=5, partitions=45, replication=2)
    params.update(overrides)
    params.setdefault(
        "placement",
        round_robin_placement(params["dcs"], params["partitions"], params["replication"]),
    )
    return ClusterConfig(**params)


# -- config file -------------------------------------------------------------
#
# INI sections; see README for the full schema. Example:
#
#   [cluster]
#   dcs = 3
#   partitions = 6
#   replication = 2
#   fanout = 2
#
#   [placement]          ; optional, defaults to round-robin
#   p0 = 0,1
#   p1 = 1,2
#
#   [intervals]
#   delta_r_us = 1000
#   delta_g_us = 5000
#   delta_u_us = 5000
#   tx_timeout_periods = 100
#
#   [latency]
#   intra_us = 100,500
#   inter_us = 20000,40000
#   dc0_dc2 = 35000,45000  ; per-pair override
#
#   [skew]
#   max_us = 1000
#
#   [workload]
#   reads_per_tx = 19
#   writes_per_tx = 1
#   locality_pct = 95
#   partitions_per_tx = 4
#   zipf_theta = 0.99
#   keys = 10000
#   value_bytes = 8
#   sessions_per_dc = 2
#   txs_per_session = 50
#   duration_ms = 0
#
#   [transport]
#   base_port = 47000


def _parse_range(text: str) -> LatencyRange:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi', got {text!r}")
    return LatencyRange(int(parts[0]), int(parts[1]))


def load_config(path: str) -> ClusterConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    return parse_config(parser)


def parse_config(parser: configparser.ConfigParser) -> ClusterConfig:
    try:
        cluster = parser["cluster"]
        dcs = cluster.getint("dcs")
        partitions = cluster.getint("partitions")
        replication = cluster.getint("replication")
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad [cluster] section: {exc}") from exc

    if parser.has_section("placement"):
        placement = []
        for n in range(partitions):
            row = parser.get("placement", f"p{n}", fallback=None)
            if row is None:
                raise ConfigError(f"[placement] missing row p{n}")
            placement.append([int(x) for x in row.split(",")])
    else:
        placement = round_robin_placement(dcs, partitions, replication)

    kwargs: dict = dict(
        dcs=dcs,
        partitions=partitions,
        replication=replication,
        placement=placement,
        fanout=cluster.getint("fanout", fallback=2),
    )

    if parser.has_section("intervals"):
        sec = parser["intervals"]
        kwargs["delta_r_us"] = sec.getint("delta_r_us", fallback=1000)
        kwargs["delta_g_us"] = sec.getint("delta_g_us", fallback=5000)
        kwargs["delta_u_us"] = sec.getint("delta_u_us", fallback=5000)
        kwargs["tx_timeout_periods"] = sec.getint("tx_timeout_periods", fallback=100)
        kwargs["gc_interval_us"] = sec.getint("gc_interval_us", fallback=50_000)

    if parser.has_section("latency"):
        sec = parser["latency"]
        overrides = {}
        for name, value in sec.items():
            if name == "intra_us":
                kwargs["intra_latency"] = _parse_range(value)
            elif name == "inter_us":
                kwargs["inter_latency"] = _parse_range(value)
            elif name.startswith("dc"):
                a, b = name.split("_")
                pair = (int(a[2:]), int(b[2:]))
                overrides[(min(pair), max(pair))] = _parse_range(value)
            else:
                raise ConfigError(f"unknown [latency] key {name!r}")
        kwargs["latency_overrides"] = overrides

    if parser.has_section("skew"):
        kwargs["skew_max_us"] = parser["skew"].getint("max_us", fallback=0)

    if parser.has_section("transport"):
        kwargs["base_port"] = parser["transport"].getint("base_port", fallback=47000)

    if parser.has_section("workload"):
        sec = parser["workload"]
        duration_ms = sec.getfloat("duration_ms", fallback=0.0)
        kwargs["workload"] = WorkloadConfig(
            reads_per_tx=sec.getint("reads_per_tx", fallback=19),
            writes_per_tx=sec.getint("writes_per_tx", fallback=1),
            locality_pct=sec.getint("locality_pct", fallback=95),
            partitions_per_tx=sec.getint("partitions_per_tx", fallback=4),
            zipf_theta=sec.getfloat("zipf_theta", fallback=0.99),
            keys=sec.getint("keys", fallback=10_000),
            value_bytes=sec.getint("value_bytes", fallback=8),
            sessions_per_dc=sec.getint("sessions_per_dc", fallback=2),
            txs_per_session=sec.getint("txs_per_session", fallback=50),
            duration_us=int(duration_ms * 1000),
        )

    return ClusterConfig(**kwargs)


def dump_config(config: ClusterConfig) -> str:
    """Render a config back to the INI schema (round-trips with parse_config)."""
    lines = [
        "[cluster]",
        f"dcs = {config.dcs}",
        f"partitions = {config.partitions}",
        f"replication = {config.replication}",
        f"fanout = {config.fanout}",
        "",
        "[placement]",
    ]
    for n, row in enumerate(config.placement):
        lines.append(f"p{n} = {','.join(str(d) for d in row)}")
    lines += [
        "",
        "[intervals]",
        f"delta_r_us = {config.delta_r_us}",
        f"delta_g_us = {config.delta_g_us}",
        f"delta_u_us = {config.delta_u_us}",
        f"tx_timeout_periods = {config.tx_timeout_periods}",
        f"gc_interval_us = {config.gc_interval_us}",
        "",
        "[latency]",
        f"intra_us = {config.intra_latency.lo_us},{config.intra_latency.hi_us}",
        f"inter_us = {config.inter_latency.lo_us},{config.inter_latency.hi_us}",
    ]
    for (a, b), rng in sorted(config.latency_overrides.items()):
        lines.append(f"dc{a}_dc{b} = {rng.lo_us},{rng.hi_us}")
    lines += [
        "",
        "[skew]",
        f"max_us = {config.skew_max_us}",
        "",
        "[transport]",
        f"base_port = {config.base_port}",
        "",
        "[workload]",
        f"reads_per_tx = {config.workload.reads_per_tx}",
        f"writes_per_tx = {config.workload.writes_per_tx}",
        f"locality_pct = {config.workload.locality_pct}",
        f"partitions_per_tx = {config.workload.partitions_per_tx}",
        f"zipf_theta = {config.workload.zipf_theta}",
        f"keys = {config.workload.keys}",
        f"value_bytes = {config.workload.value_bytes}",
        f"sessions_per_dc = {config.workload.sessions_per_dc}",
        f"txs_per_session = {config.workload.txs_per_session}",
        f"duration_ms = {config.workload.duration_us / 1000}",
        "",
    ]
    return "\n".join(lines)
