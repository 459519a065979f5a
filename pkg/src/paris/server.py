"""The partition-replica state machine.

One instance owns one partition in one DC. It plays three roles, all
driven by single-activation handlers (no handler ever waits):

  * transaction coordinator: snapshot assignment, read fan-out, 2PC;
    multi-message exchanges park continuation state between activations;
  * cohort: slice reads, prepare/commit of write sets;
  * background: periodic apply/replicate/heartbeat, the intra-DC
    aggregation tree for stabilization, cross-DC root exchange, and GC.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import messages as m
from .clocks import TxId, hlc_update_on_commit, hlc_update_on_prepare
from .sim import parse_server_addr, server_addr
from .storage import ProtocolFault, Storage
from . import trace as tr


class StaleTransaction(Exception):
    """The transaction context expired or never existed on this coordinator."""


@dataclass
class _PendingRead:
    client: str
    tx: TxId
    awaiting: int
    items: list = field(default_factory=list)


@dataclass
class _PendingCommit:
    client: str
    snapshot: int
    participants: list
    ws: tuple
    pts: list = field(default_factory=list)


@dataclass
class _GossipRound:
    own_done: bool = False
    mins: dict = field(default_factory=dict)
    s_old: int | None = None
    need_gsv: set = field(default_factory=set)
    need_sold: set = field(default_factory=set)


class PartitionServer:
    protocol_name = "paris"

    def __init__(self, env, config, dc: int, partition: int):
        self.env = env
        self.config = config
        self.dc = dc
        self.n = partition
        self.addr = server_addr(dc, partition)
        self.replica_dcs = config.replicas(partition)
        self.r = config.replica_index_for_dc(partition, dc)

        self.hlc = 0
        self.vv = [0] * config.replication
        self.gsv: dict[int, int] = {}
        self.ust = 0
        self.prepared: dict[TxId, tuple[int, tuple]] = {}
        self.committed: dict[TxId, tuple[int, tuple]] = {}
        self.tx_contexts: dict[TxId, tuple[int, int]] = {}  # tx -> (snapshot, created_at)
        self.store = Storage(owns=lambda k: config.partition_of(k) == partition)
        self._tx_seq = 0

        self._pending_reads: dict[int, _PendingRead] = {}
        self._next_rid = 0
        self._pending_commits: dict[TxId, _PendingCommit] = {}

        links = config.tree_links(dc)[partition]
        self.tree_parent = links["parent"]
        self.tree_children = list(links["children"])
        self.is_root = config.tree_root(dc) == partition
        self._rounds: dict[int, _GossipRound] = {}
        self._round_no = 0
        # root only: freshest aggregate and s_old received from each DC root
        self._dc_aggregates: dict[int, dict[int, int]] = {}
        self._dc_s_old: dict[int, int] = {}
        self._last_gc = 0
        self._floor = 0

    # -- wiring -------------------------------------------------------------

    def start_timers(self) -> None:
        self.env.every(self.addr, "apply", self.config.delta_r_us)
        self.env.every(self.addr, "gsv", self.config.delta_g_us)
        self.env.every(self.addr, "ust", self.config.delta_u_us)

    def timer_periods(self) -> dict[str, int]:
        return {
            "apply": self.config.delta_r_us,
            "gsv": self.config.delta_g_us,
            "ust": self.config.delta_u_us,
        }

    def on_timer(self, kind: str) -> None:
        if kind == "apply":
            self.tick_apply_replicate()
        elif kind == "gsv":
            self.tick_gsv()
        elif kind == "ust":
            self.tick_ust()
        else:
            raise ProtocolFault(f"unknown timer {kind!r}")

    def on_message(self, src: str, msg) -> None:
        t = type(msg)
        if t is m.StartTxReq:
            self.handle_start_tx(src, msg.ust_c)
        elif t is m.ReadReq:
            self.handle_read(src, msg.tx, msg.keys)
        elif t is m.ReadSliceReq:
            self.handle_read_slice(src, msg)
        elif t is m.ReadSliceResp:
            self._handle_slice_resp(src, msg)
        elif t is m.CommitReqClient:
            self.handle_commit_req(src, msg.tx, msg.hwt, msg.ws)
        elif t is m.PrepareReq:
            self.handle_prepare(src, msg)
        elif t is m.PrepareResp:
            self._handle_prepare_resp(src, msg)
        elif t is m.CommitReqCohort:
            self.handle_commit(src, msg.tx, msg.ct)
        elif t is m.Replicate:
            self.handle_replicate(src, msg.groups, msg.ct)
        elif t is m.Heartbeat:
            self.handle_heartbeat(src, msg.t)
        elif t is m.GsvUp:
            self._handle_gsv_up(src, msg)
        elif t is m.SOldUp:
            self._handle_sold_up(src, msg)
        elif t is m.GsvDown:
            self._handle_gsv_down(src, msg)
        elif t is m.RootExchange:
            self._handle_root_exchange(src, msg)
        elif t is m.UstDown:
            self._handle_ust_down(src, msg)
        elif t is m.SOldDown:
            self._handle_sold_down(src, msg)
        else:
            raise ProtocolFault(f"unexpected message {t.__name__} at {self.addr}")

    def physical(self) -> int:
        return self.env.physical_us(self.addr)

    # -- protocol hooks (the blocking baseline overrides these) --------------

    def _assign_snapshot(self, ust_c: int) -> int:
        self.ust = max(self.ust, ust_c)
        return self.ust

    def _absorb_snapshot(self, t: int) -> None:
        """A piggybacked snapshot is a stability fact; fold it into ust."""
        if t > self.ust:
            self.ust = t
            self.env.record(tr.UST_ADVANCE, server=self.addr, ust=self.ust)

    # -- coordinator ---------------------------------------------------------

    def handle_start_tx(self, client: str, ust_c: int) -> None:
        snapshot = self._assign_snapshot(ust_c)
        tx = TxId(self.dc, self.n, self._tx_seq)
        self._tx_seq += 1
        self.tx_contexts[tx] = (snapshot, self.env.now_us())
        self.env.record(
            tr.START_TX,
            session=client,
            tx=tx,
            snapshot=snapshot,
            ust=self.ust,
            coord=self.addr,
        )
        self.env.send(self.addr, client, m.StartTxResp(tx, snapshot))

    def handle_read(self, client: str, tx: TxId, keys: tuple) -> None:
        ctx = self.tx_contexts.get(tx)
        if ctx is None:
            raise StaleTransaction(f"{tx} unknown at {self.addr}")
        snapshot = ctx[0]
        groups: dict[int, list[bytes]] = {}
        for k in keys:
            groups.setdefault(self.config.partition_of(k), []).append(k)
        rid = self._next_rid
        self._next_rid += 1
        self._pending_reads[rid] = _PendingRead(client, tx, awaiting=len(groups))
        for part, part_keys in groups.items():
            target_dc = self.config.target_dc_for_partition(part, self.dc)
            self.env.send(
                self.addr,
                server_addr(target_dc, part),
                m.ReadSliceReq(rid, tuple(part_keys), snapshot, tx),
            )

    def _handle_slice_resp(self, src: str, msg: m.ReadSliceResp) -> None:
        pending = self._pending_reads[msg.rid]
        pending.items.extend(msg.items)
        pending.awaiting -= 1
        if pending.awaiting == 0:
            del self._pending_reads[msg.rid]
            self.env.send(self.addr, pending.client, m.ReadResp(tuple(pending.items)))

    def handle_commit_req(self, client: str, tx: TxId, hwt: int, ws: tuple) -> None:
        ctx = self.tx_contexts.get(tx)
        if ctx is None:
            raise StaleTransaction(f"{tx} unknown at {self.addr}")
        if not ws:
            raise ProtocolFault("commit with an empty write set")
        snapshot = ctx[0]
        ht = max(snapshot, hwt)
        groups: dict[int, list] = {}
        for k, v in ws:
            groups.setdefault(self.config.partition_of(k), []).append((k, v))
        participants = []
        for part, pairs in groups.items():
            target_dc = self.config.target_dc_for_partition(part, self.dc)
            participants.append((server_addr(target_dc, part), part, tuple(pairs)))
        self._pending_commits[tx] = _PendingCommit(
            client, snapshot, [p[0] for p in participants], ws
        )
        for addr, _, pairs in participants:
            self.env.send(self.addr, addr, m.PrepareReq(tx, snapshot, ht, pairs))

    def _handle_prepare_resp(self, src: str, msg: m.PrepareResp) -> None:
        pending = self._pending_commits[msg.tx]
        pending.pts.append(msg.pt)
        if len(pending.pts) < len(pending.participants):
            return
        del self._pending_commits[msg.tx]
        ct = max(pending.pts)
        if ct <= pending.snapshot:
            raise ProtocolFault(
                f"commit time {ct} not above snapshot {pending.snapshot} for {msg.tx}"
            )
        for addr in pending.participants:
            self.env.send(self.addr, addr, m.CommitReqCohort(msg.tx, ct))
        self.tx_contexts.pop(msg.tx, None)
        self.env.stats.committed += 1
        self.env.stats.max_ct = max(self.env.stats.max_ct, ct)
        writes = ",".join(
            f"{tr.encode_key(k)}@{self.config.partition_of(k)}" for k, _ in pending.ws
        )
        self.env.record(
            tr.COMMIT_DONE,
            session=pending.client,
            tx=msg.tx,
            ct=ct,
            snapshot=pending.snapshot,
            writes=writes,
        )
        self.env.send(self.addr, pending.client, m.CommitResp(ct))

    # -- cohort ---------------------------------------------------------------

    def handle_read_slice(self, src: str, msg: m.ReadSliceReq) -> None:
        self._absorb_snapshot(msg.ust)
        self._serve_slice(src, msg)

    def _serve_slice(self, src: str, msg: m.ReadSliceReq) -> None:
        items = []
        for k in msg.keys:
            version = self.store.read_visible(k, msg.ust)
            if version is not None:
                items.append(version)
                self.env.record(
                    tr.READ_SERVE,
                    server=self.addr,
                    tx=msg.tx,
                    key=tr.encode_key(k),
                    snapshot=msg.ust,
                    ut=version.ut,
                    wtx=version.tx,
                    sr=version.sr,
                )
            else:
                self.env.record(
                    tr.READ_SERVE,
                    server=self.addr,
                    tx=msg.tx,
                    key=tr.encode_key(k),
                    snapshot=msg.ust,
                    miss=1,
                )
            self.env.stats.reads_served += 1
        self.env.send(self.addr, src, m.ReadSliceResp(msg.rid, tuple(items)))

    def handle_prepare(self, src: str, msg: m.PrepareReq) -> None:
        if msg.tx in self.prepared:
            raise ProtocolFault(f"duplicate prepare for {msg.tx} at {self.addr}")
        if not msg.writes:
            raise ProtocolFault("prepare with an empty write set")
        self.hlc = hlc_update_on_prepare(self.physical(), self.hlc, msg.ht)
        self._absorb_snapshot(msg.ust)
        pt = max(self.hlc, self.ust)
        self.prepared[msg.tx] = (pt, msg.writes)
        self.env.send(self.addr, src, m.PrepareResp(msg.tx, pt))

    def handle_commit(self, src: str, tx: TxId, ct: int) -> None:
        rec = self.prepared.pop(tx, None)
        if rec is None:
            raise ProtocolFault(f"commit for unprepared {tx} at {self.addr}")
        pt, writes = rec
        if ct < pt:
            raise ProtocolFault(f"commit time {ct} below proposed {pt} for {tx}")
        self.hlc = hlc_update_on_commit(self.physical(), self.hlc, ct)
        self.committed[tx] = (ct, writes)

    # -- background: apply / replicate / heartbeat ----------------------------

    def tick_apply_replicate(self) -> None:
        self._expire_tx_contexts()
        if self.prepared:
            ub = min(pt for pt, _ in self.prepared.values()) - 1
        else:
            ub = max(self.physical(), self.hlc)
            # Announcing ub makes it the applied floor; bump the clock so no
            # future prepare can propose a commit time at or below it.
            self.hlc = ub

        ripe = sorted(
            ((ct, tx, writes) for tx, (ct, writes) in self.committed.items() if ct <= ub)
        )
        if ripe:
            if ub <= self.vv[self.r]:
                raise ProtocolFault(f"apply floor would not advance at {self.addr}")
            peers = [server_addr(j, self.n) for j in self.replica_dcs if j != self.dc]
            i = 0
            while i < len(ripe):
                ct = ripe[i][0]
                group = []
                while i < len(ripe) and ripe[i][0] == ct:
                    _, tx, writes = ripe[i]
                    for k, v in writes:
                        self.store.put_version(k, v, ct, tx, self.dc)
                    self.env.stats.applied_local += 1
                    group.append((tx, writes))
                    del self.committed[tx]
                    i += 1
                self.env.record(
                    tr.APPLY_LOCAL,
                    server=self.addr,
                    ct=ct,
                    txs=",".join(str(tx) for tx, _ in group),
                )
                for peer in peers:
                    self.env.send(self.addr, peer, m.Replicate(tuple(group), ct))
            self._set_own_clock(ub)
        elif ub > self.vv[self.r]:
            self._set_own_clock(ub)
            for j in self.replica_dcs:
                if j != self.dc:
                    self.env.send(self.addr, server_addr(j, self.n), m.Heartbeat(ub))
                    self.env.stats.heartbeats += 1

    def _set_own_clock(self, ub: int) -> None:
        if any(pt <= ub for pt, _ in self.prepared.values()):
            raise ProtocolFault(f"pending prepare at or below floor {ub} at {self.addr}")
        self.vv[self.r] = ub
        self._refresh_floor()

    def _refresh_floor(self) -> None:
        floor = min(self.vv)
        if floor < self._floor:
            raise ProtocolFault(f"applied floor regressed at {self.addr}")
        if floor > self._floor:
            self._floor = floor
            self.env.record(tr.FLOOR_ADVANCE, server=self.addr, floor=floor)
            self._floor_changed()

    def _floor_changed(self) -> None:
        """Hook for the blocking baseline's parked reads."""

    def handle_replicate(self, src: str, groups: tuple, ct: int) -> None:
        from_dc, from_n = parse_server_addr(src)
        if from_n != self.n or from_dc not in self.replica_dcs:
            raise ProtocolFault(f"replicate from non-replica {src} at {self.addr}")
        idx = self.config.replica_index_for_dc(self.n, from_dc)
        if ct <= self.vv[idx]:
            raise ProtocolFault(f"out-of-order replicate ct={ct} from {src}")
        for tx, writes in groups:
            for k, v in writes:
                self.store.put_version(k, v, ct, tx, from_dc)
            self.env.stats.applied_replicated += 1
        self.env.record(
            tr.APPLY_REPLICATED,
            server=self.addr,
            ct=ct,
            src=from_dc,
            txs=",".join(str(tx) for tx, _ in groups),
        )
        self.vv[idx] = ct
        self._refresh_floor()

    def handle_heartbeat(self, src: str, t: int) -> None:
        from_dc, from_n = parse_server_addr(src)
        if from_n != self.n or from_dc not in self.replica_dcs:
            raise ProtocolFault(f"heartbeat from non-replica {src} at {self.addr}")
        if from_dc == self.dc:
            raise ProtocolFault(f"heartbeat from own replica index at {self.addr}")
        idx = self.config.replica_index_for_dc(self.n, from_dc)
        if t <= self.vv[idx]:
            raise ProtocolFault(f"stale heartbeat t={t} from {src}")
        self.env.record(tr.HEARTBEAT_RECV, server=self.addr, src=from_dc, t=t)
        self.vv[idx] = t
        self._refresh_floor()

    def _expire_tx_contexts(self) -> None:
        timeout = self.config.tx_timeout_periods * self.config.delta_r_us
        now = self.env.now_us()
        stale = [tx for tx, (_, created) in self.tx_contexts.items() if created + timeout <= now]
        if not stale:
            return
        busy = set(self._pending_commits)
        busy.update(p.tx for p in self._pending_reads.values())
        for tx in stale:
            if tx not in busy:
                del self.tx_contexts[tx]

    # -- stabilization ---------------------------------------------------------

    def _own_vv_mins(self) -> dict[int, int]:
        return {j: self.vv[i] for i, j in enumerate(self.replica_dcs)}

    def _own_s_old(self) -> int:
        contribution = self.ust
        for snapshot, _ in self.tx_contexts.values():
            contribution = min(contribution, snapshot)
        return contribution

    def tick_gsv(self) -> None:
        self._round_no += 1
        state = self._round_state(self._round_no)
        self._merge_round(state, self._own_vv_mins(), self._own_s_old())
        state.own_done = True
        self._maybe_complete_round(self._round_no, state)
        # drop any round that can no longer complete (partner messages lost)
        for stale in [r for r in self._rounds if r < self._round_no - 50]:
            del self._rounds[stale]

    def _round_state(self, round_no: int) -> _GossipRound:
        state = self._rounds.get(round_no)
        if state is None:
            state = _GossipRound(
                need_gsv=set(self.tree_children), need_sold=set(self.tree_children)
            )
            self._rounds[round_no] = state
        return state

    @staticmethod
    def _merge_mins(into: dict, mins) -> None:
        for dc, t in mins:
            if dc in into:
                into[dc] = min(into[dc], t)
            else:
                into[dc] = t

    def _merge_round(self, state: _GossipRound, mins: dict, s_old: int) -> None:
        self._merge_mins(state.mins, mins.items())
        state.s_old = s_old if state.s_old is None else min(state.s_old, s_old)

    def _handle_gsv_up(self, src: str, msg: m.GsvUp) -> None:
        _, child = parse_server_addr(src)
        state = self._round_state(msg.round)
        self._merge_mins(state.mins, msg.mins)
        state.need_gsv.discard(child)
        self._maybe_complete_round(msg.round, state)

    def _handle_sold_up(self, src: str, msg: m.SOldUp) -> None:
        _, child = parse_server_addr(src)
        state = self._round_state(msg.round)
        state.s_old = msg.t if state.s_old is None else min(state.s_old, msg.t)
        state.need_sold.discard(child)
        self._maybe_complete_round(msg.round, state)

    def _maybe_complete_round(self, round_no: int, state: _GossipRound) -> None:
        if not state.own_done or state.need_gsv or state.need_sold:
            return
        del self._rounds[round_no]
        mins = tuple(sorted(state.mins.items()))
        if not self.is_root:
            parent = server_addr(self.dc, self.tree_parent)
            self.env.send(self.addr, parent, m.GsvUp(round_no, mins))
            self.env.send(self.addr, parent, m.SOldUp(round_no, state.s_old))
            return
        # root: the DC-wide aggregate is final for this round
        self._apply_gsv(mins)
        self._dc_aggregates[self.dc] = dict(mins)
        self._dc_s_old[self.dc] = state.s_old
        for child in self.tree_children:
            self.env.send(self.addr, server_addr(self.dc, child), m.GsvDown(round_no, mins))
        for other_dc in range(self.config.dcs):
            if other_dc != self.dc:
                root = server_addr(other_dc, self.config.tree_root(other_dc))
                self.env.send(
                    self.addr, root, m.RootExchange(self.dc, mins, state.s_old)
                )

    def _apply_gsv(self, entries) -> None:
        for dc, t in entries:
            current = self.gsv.get(dc, 0)
            if t < current:
                raise ProtocolFault(f"GSV entry for DC {dc} regressed at {self.addr}")
            self.gsv[dc] = t

    def _handle_gsv_down(self, src: str, msg: m.GsvDown) -> None:
        self._apply_gsv(msg.gsv)
        for child in self.tree_children:
            self.env.send(self.addr, server_addr(self.dc, child), m.GsvDown(msg.round, msg.gsv))

    def _handle_root_exchange(self, src: str, msg: m.RootExchange) -> None:
        if not self.is_root:
            raise ProtocolFault(f"root exchange delivered to non-root {self.addr}")
        self._dc_aggregates[msg.dc] = dict(msg.aggregate)
        self._dc_s_old[msg.dc] = msg.s_old

    def tick_ust(self) -> None:
        if not self.is_root:
            return
        if len(self._dc_aggregates) < self.config.dcs:
            return  # not every DC has gossiped yet; ust stays put
        min_gst = min(
            t for aggregate in self._dc_aggregates.values() for t in aggregate.values()
        )
        s_old = min(self._dc_s_old.values())
        self._advance_ust(min_gst)
        for child in self.tree_children:
            child_addr = server_addr(self.dc, child)
            self.env.send(self.addr, child_addr, m.UstDown(self.ust))
            self.env.send(self.addr, child_addr, m.SOldDown(s_old))
        self._run_gc(s_old)

    def _advance_ust(self, value: int) -> None:
        if value > self.ust:
            self.ust = value
            self.env.record(tr.UST_ADVANCE, server=self.addr, ust=self.ust)

    def _handle_ust_down(self, src: str, msg: m.UstDown) -> None:
        self._advance_ust(msg.ust)
        for child in self.tree_children:
            self.env.send(self.addr, server_addr(self.dc, child), m.UstDown(self.ust))

    def _handle_sold_down(self, src: str, msg: m.SOldDown) -> None:
        for child in self.tree_children:
            self.env.send(self.addr, server_addr(self.dc, child), m.SOldDown(msg.t))
        self._run_gc(msg.t)

    # -- garbage collection ------------------------------------------------------

    def _run_gc(self, s_old: int) -> None:
        if s_old > self.ust:
            raise ProtocolFault(f"GC floor {s_old} above ust {self.ust} at {self.addr}")
        if s_old - self._last_gc < self.config.gc_interval_us:
            return
        self._last_gc = s_old
        if getattr(self.env, "gc_verify", False):
            self._gc_with_verification(s_old)
        else:
            removed = self.store.collect_garbage(s_old)
            self.env.stats.gc_runs += 1
            self.env.stats.gc_removed += removed

    def _gc_with_verification(self, s_old: int) -> None:
        """GC, then re-run every still-open snapshot read and diff the results."""
        snapshots = {snapshot for snapshot, _ in self.tx_contexts.values()}
        snapshots.add(self.ust)
        snapshots.add(s_old)
        keys = self.store.keys()
        before = {
            (k, s): self.store.read_visible(k, s) for k in keys for s in snapshots
        }
        removed = self.store.collect_garbage(s_old)
        self.env.stats.gc_runs += 1
        self.env.stats.gc_removed += removed
        for (k, s), expected in before.items():
            got = self.store.read_visible(k, s)
            if got != expected:
                raise ProtocolFault(
                    f"GC changed read_visible({k!r}, {s}) at {self.addr}: "
                    f"{expected} -> {got}"
                )
