"""Offline trace analyzer.

Mechanizes the protocol's correctness claims over an emitted trace:
snapshot-below-commit, causal update-time ordering, causal snapshots,
write atomicity, session guarantees, replication-channel monotonicity,
and the global stability invariant, plus a brute-force enumerating oracle
for small histories that must agree with the scalable checks.

All checks are deterministic functions of the trace and know nothing
about which protocol variant produced it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import trace as tr
from .clocks import TxId
from .trace import TraceEvent

MAX_REPORTED = 50

Stamp = tuple[int, tuple[int, int, int]]  # (ut, txid); unique per version


@dataclass
class Verdict:
    name: str
    ok: bool
    checked: int
    violations: list[str]

    def summary(self) -> str:
        state = "pass" if self.ok else "FAIL"
        extra = f", {len(self.violations)} violation(s)" if self.violations else ""
        return f"{self.name}: {state} ({self.checked} checked{extra})"


@dataclass
class _Commit:
    node: int
    tx: str
    txid: tuple
    session: str
    ct: int
    snapshot: int
    pos: tuple[int, int]
    writes: list[tuple[bytes, int]]

    def stamp(self) -> Stamp:
        return (self.ct, self.txid)


@dataclass
class _Serve:
    pos: tuple[int, int]
    server: str
    tx: str
    key: bytes
    snapshot: int
    stamp: Stamp | None  # None for a miss


class TraceIndex:
    """Parsed, cross-referenced view of one trace."""

    def __init__(self, events: list[TraceEvent]):
        self.events = sorted(events, key=lambda e: (e.time, e.seq))
        self.commits: dict[str, _Commit] = {}
        self.nodes: list[_Commit] = []
        self.serves: list[_Serve] = []
        self.versions: dict[bytes, list[tuple[Stamp, int]]] = {}
        self.applies: dict[tuple[str, bytes], list[tuple[tuple[int, int], Stamp]]] = {}
        self.preds: list[list[int]] = []
        self.closure: list[int] = []
        self.dangling: list[str] = []
        self._build()

    def _build(self) -> None:
        observed: dict[str, set[int]] = {}
        last_own: dict[str, int] = {}
        apply_raw: list[tuple[tuple[int, int], str, str]] = []

        for ev in self.events:
            pos = (ev.time, ev.seq)
            if ev.kind == tr.COMMIT_DONE:
                session = ev["session"]
                node = len(self.nodes)
                writes = []
                for token in ev["writes"].split(","):
                    key_text, _, part = token.rpartition("@")
                    writes.append((tr.decode_key(key_text), int(part)))
                commit = _Commit(
                    node=node,
                    tx=ev["tx"],
                    txid=tuple(TxId.parse(ev["tx"])),
                    session=session,
                    ct=ev.int_field("ct"),
                    snapshot=ev.int_field("snapshot"),
                    pos=pos,
                    writes=writes,
                )
                self.commits[commit.tx] = commit
                self.nodes.append(commit)
                preds = set(observed.get(session, ()))
                if session in last_own:
                    preds.add(last_own[session])
                preds.discard(node)
                self.preds.append(sorted(preds))
                mask = 0
                for p in self.preds[node]:
                    mask |= self.closure[p] | (1 << p)
                self.closure.append(mask)
                last_own[session] = node
                for key, _ in writes:
                    self.versions.setdefault(key, []).append((commit.stamp(), node))
            elif ev.kind == tr.READ_RESULT:
                if ev.get("src") == "ws" or "wtx" not in ev.fields:
                    continue
                writer = self.commits.get(ev["wtx"])
                if writer is None:
                    self.dangling.append(
                        f"read of unknown version writer {ev['wtx']} at {pos}"
                    )
                    continue
                observed.setdefault(ev["session"], set()).add(writer.node)
            elif ev.kind == tr.READ_SERVE:
                stamp: Stamp | None = None
                if "miss" not in ev.fields:
                    stamp = (ev.int_field("ut"), tuple(TxId.parse(ev["wtx"])))
                self.serves.append(
                    _Serve(pos, ev["server"], ev["tx"], tr.decode_key(ev["key"]),
                           ev.int_field("snapshot"), stamp)
                )
            elif ev.kind in (tr.APPLY_LOCAL, tr.APPLY_REPLICATED):
                for tx_str in ev["txs"].split(","):
                    apply_raw.append((pos, ev["server"], tx_str))

        for key in self.versions:
            self.versions[key].sort()
        for pos, server, tx_str in apply_raw:
            commit = self.commits.get(tx_str)
            if commit is None:
                self.dangling.append(f"apply of unknown tx {tx_str} at {pos}")
                continue
            # the applying server installs only its own partition's slice
            partition = int(server.rsplit(".", 1)[1])
            for key, part in commit.writes:
                if part == partition:
                    self.applies.setdefault((server, key), []).append((pos, commit.stamp()))

    def serves_by_tx(self) -> dict[str, list[_Serve]]:
        grouped: dict[str, list[_Serve]] = {}
        for serve in self.serves:
            grouped.setdefault(serve.tx, []).append(serve)
        return grouped

    def is_ancestor(self, a: int, b: int) -> bool:
        """True when node a causally precedes node b."""
        return bool(self.closure[b] >> a & 1)


def ensure_index(trace) -> TraceIndex:
    if isinstance(trace, TraceIndex):
        return trace
    return TraceIndex(list(trace))


def _verdict(name: str, checked: int, violations: list[str]) -> Verdict:
    return Verdict(name, not violations, checked, violations[:MAX_REPORTED])


# -- snapshot strictly below commit time --------------------------------------


def check_lemma1(trace) -> Verdict:
    index = ensure_index(trace)
    violations = []
    for commit in index.nodes:
        if not commit.snapshot < commit.ct:
            violations.append(
                f"tx {commit.tx}: snapshot {commit.snapshot} not below ct {commit.ct}"
            )
    return _verdict("lemma1_snapshot_below_ct", len(index.nodes), violations)


# -- causality implies update-time order --------------------------------------


def check_update_time_order(trace) -> Verdict:
    index = ensure_index(trace)
    violations = []
    checked = 0
    for commit in index.nodes:
        for p in index.preds[commit.node]:
            checked += 1
            dep = index.nodes[p]
            if not dep.ct < commit.ct:
                violations.append(
                    f"{dep.tx} (ct={dep.ct}) causally precedes {commit.tx} "
                    f"(ct={commit.ct}) but update times do not increase"
                )
    return _verdict("update_time_order", checked, violations)


# -- causal snapshots ----------------------------------------------------------


def check_causal_snapshots(trace) -> Verdict:
    index = ensure_index(trace)
    violations = list(index.dangling)
    checked = 0
    for tx, serves in index.serves_by_tx().items():
        checked += 1
        returned: dict[bytes, Stamp | None] = {}
        for serve in serves:
            # visibility bound
            if serve.stamp is not None and serve.stamp[0] > serve.snapshot:
                violations.append(
                    f"tx {tx}: key {serve.key!r} returned ut={serve.stamp[0]} above "
                    f"snapshot {serve.snapshot}"
                )
            # freshest version applied at the serving replica before the serve
            log = index.applies.get((serve.server, serve.key), ())
            best = None
            for pos, stamp in log:
                if pos >= serve.pos:
                    break
                if stamp[0] <= serve.snapshot and (best is None or stamp > best):
                    best = stamp
            if best != serve.stamp:
                violations.append(
                    f"tx {tx}: key {serve.key!r} at {serve.server} returned "
                    f"{serve.stamp}, freshest applied visible was {best}"
                )
            if serve.key in returned and returned[serve.key] != serve.stamp:
                violations.append(
                    f"tx {tx}: key {serve.key!r} served twice with different results"
                )
            returned[serve.key] = serve.stamp

        # dependency closure: nothing read may be older than a dependency
        # of anything read
        mask = 0
        for stamp in returned.values():
            if stamp is None:
                continue
            writer = index.commits.get(_tx_str(stamp[1]))
            if writer is None:
                continue
            mask |= index.closure[writer.node] | (1 << writer.node)
        if mask:
            for key, got in returned.items():
                for stamp, node in index.versions.get(key, ()):
                    if mask >> node & 1 and (got is None or stamp > got):
                        violations.append(
                            f"tx {tx}: returned {got} for key {key!r} but depends on "
                            f"newer version {stamp}"
                        )
    return _verdict("causal_snapshots", checked, violations)


def _tx_str(txid: tuple) -> str:
    return f"{txid[0]}.{txid[1]}.{txid[2]}"


# -- atomic multi-partition writes ----------------------------------------------


def check_atomicity(trace) -> Verdict:
    index = ensure_index(trace)
    violations = []
    checked = 0
    for tx, serves in index.serves_by_tx().items():
        checked += 1
        snapshot = serves[0].snapshot
        returned: dict[bytes, Stamp | None] = {}
        for serve in serves:
            prev = returned.get(serve.key)
            if prev is None or (serve.stamp is not None and serve.stamp > prev):
                returned[serve.key] = serve.stamp

        def require(writer: _Commit, why: str, exclude: bytes | None = None) -> None:
            req = writer.stamp()
            for key, _ in writer.writes:
                if key not in returned or key == exclude:
                    continue
                got = returned[key]
                if got is None or got < req:
                    violations.append(
                        f"tx {tx}: {why} {writer.tx} visible but key {key!r} "
                        f"returned {got} below {req}"
                    )

        # a returned version makes its whole transaction visible
        seen_writers = set()
        for got in returned.values():
            if got is None:
                continue
            writer = index.commits.get(_tx_str(got[1]))
            if writer is not None and writer.tx not in seen_writers:
                seen_writers.add(writer.tx)
                require(writer, "write of")
        # the freshest write at or below the snapshot is in the snapshot,
        # which constrains every OTHER key its transaction wrote
        triggers: dict[int, set] = {}
        for key in returned:
            versions = index.versions.get(key, ())
            best_node = None
            for stamp, node in versions:
                if stamp[0] <= snapshot:
                    best_node = node
                else:
                    break
            if best_node is not None:
                triggers.setdefault(best_node, set()).add(key)
        for node, trigger_keys in triggers.items():
            writer = index.nodes[node]
            if writer.tx in seen_writers:
                continue  # already fully constrained above
            exclude = next(iter(trigger_keys)) if len(trigger_keys) == 1 else None
            require(writer, "snapshot-included write of", exclude=exclude)
    return _verdict("write_atomicity", checked, violations)


# -- session guarantees -----------------------------------------------------------


def check_sessions(trace) -> Verdict:
    index = ensure_index(trace)
    violations = []
    checked = 0
    last_snapshot: dict[str, int] = {}
    last_ct: dict[str, int] = {}
    own_writes: dict[tuple[str, bytes], Stamp] = {}
    last_read: dict[tuple[str, bytes], Stamp] = {}

    for ev in index.events:
        if ev.kind == tr.START_TX:
            checked += 1
            session = ev["session"]
            snapshot = ev.int_field("snapshot")
            if snapshot < last_snapshot.get(session, 0):
                violations.append(
                    f"session {session}: snapshot regressed to {snapshot}"
                )
            last_snapshot[session] = snapshot
        elif ev.kind == tr.COMMIT_DONE:
            checked += 1
            session = ev["session"]
            ct = ev.int_field("ct")
            if ct <= last_ct.get(session, 0):
                violations.append(
                    f"session {session}: commit time {ct} did not increase"
                )
            last_ct[session] = ct
            commit = index.commits[ev["tx"]]
            for key, _ in commit.writes:
                own_writes[(session, key)] = commit.stamp()
        elif ev.kind == tr.READ_RESULT:
            checked += 1
            session = ev["session"]
            src = ev.get("src")
            if src == "ws":
                continue
            key = tr.decode_key(ev["key"])
            stamp: Stamp | None = None
            if "wtx" in ev.fields:
                stamp = (ev.int_field("ut"), tuple(TxId.parse(ev["wtx"])))
            own = own_writes.get((session, key))
            if own is not None and (stamp is None or stamp < own):
                violations.append(
                    f"session {session}: read of {key!r} returned {stamp}, "
                    f"below own write {own}"
                )
            prev = last_read.get((session, key))
            if prev is not None and (stamp is None or stamp < prev):
                violations.append(
                    f"session {session}: non-monotonic read of {key!r}: "
                    f"{prev} then {stamp}"
                )
            if stamp is not None:
                last_read[(session, key)] = stamp
    return _verdict("session_guarantees", checked, violations)


# -- replication channels and global stability --------------------------------------


def check_replication_channels(trace) -> Verdict:
    index = ensure_index(trace)
    violations = []
    checked = 0
    last_on_channel: dict[tuple[str, str], int] = {}
    floors: dict[str, int] = {}
    servers: set[str] = set()

    for ev in index.events:
        server = ev.get("server")
        if server is not None:
            servers.add(server)

    for ev in index.events:
        if ev.kind in (tr.APPLY_REPLICATED, tr.HEARTBEAT_RECV):
            checked += 1
            channel = (ev["server"], ev["src"])
            value = ev.int_field("ct" if ev.kind == tr.APPLY_REPLICATED else "t")
            prev = last_on_channel.get(channel)
            if prev is not None and value <= prev:
                violations.append(
                    f"channel {channel[1]}->{channel[0]}: {value} after {prev}"
                )
            last_on_channel[channel] = value
        elif ev.kind == tr.FLOOR_ADVANCE:
            floors[ev["server"]] = ev.int_field("floor")
        elif ev.kind == tr.UST_ADVANCE:
            checked += 1
            ust = ev.int_field("ust")
            floor = min((floors.get(s, 0) for s in servers), default=0)
            if ust > floor:
                violations.append(
                    f"{ev['server']} advanced ust to {ust} above the minimum "
                    f"applied floor {floor} at t={ev.time}"
                )
    return _verdict("replication_channels_and_stability", checked, violations)


# -- brute-force oracle ----------------------------------------------------------


class OracleBoundExceeded(Exception):
    pass


def brute_force_oracle(trace, bound: int = 12) -> Verdict:
    """Enumerate causally consistent snapshots and validate every read tx.

    Works purely from the dependency graph and the version universe; no
    timestamps are consulted beyond version identity, so this is an
    independent route to the same verdicts as the scalable checks.
    """
    index = ensure_index(trace)
    total_versions = sum(len(v) for v in index.versions.values())
    if total_versions > bound:
        raise OracleBoundExceeded(f"{total_versions} versions exceed bound {bound}")

    violations = list(index.dangling)
    checked = 0
    universe = sorted(index.versions.keys())
    for tx, serves in index.serves_by_tx().items():
        checked += 1
        observed: dict[bytes, Stamp | None] = {}
        coherent = True
        for serve in serves:
            if serve.key in observed and observed[serve.key] != serve.stamp:
                violations.append(f"tx {tx}: incoherent repeated read of {serve.key!r}")
                coherent = False
                break
            observed[serve.key] = serve.stamp
        if not coherent:
            continue
        if not _oracle_accepts(index, universe, observed):
            violations.append(
                f"tx {tx}: no causally consistent snapshot matches its reads"
            )
    return _verdict("brute_force_oracle", checked, violations)


def _oracle_accepts(index: TraceIndex, universe: list[bytes],
                    observed: dict[bytes, Stamp | None]) -> bool:
    for stamp in observed.values():
        if stamp is not None and _tx_str(stamp[1]) not in index.commits:
            return False
    free_keys = [k for k in universe if k not in observed]
    choice_lists = [
        [None] + [stamp for stamp, _ in index.versions[k]] for k in free_keys
    ]
    for combo in itertools.product(*choice_lists):
        chosen = dict(observed)
        chosen.update(zip(free_keys, combo))
        if _snapshot_valid(index, chosen):
            return True
    return False


def _snapshot_valid(index: TraceIndex, chosen: dict[bytes, Stamp | None]) -> bool:
    for key, stamp in chosen.items():
        if stamp is None:
            continue
        writer = index.commits[_tx_str(stamp[1])]
        # atomicity: the chosen version's transaction is in the snapshot,
        # so every key it wrote must be at least as new as its write
        required = [(writer, writer.stamp())]
        # causality: so must every ancestor's writes
        for node in _mask_nodes(index.closure[writer.node]):
            dep = index.nodes[node]
            required.append((dep, dep.stamp()))
        for dep, req in required:
            for dep_key, _ in dep.writes:
                got = chosen.get(dep_key)
                if got is None or got < (dep.ct, dep.txid):
                    return False
    return True


def _mask_nodes(mask: int):
    node = 0
    while mask:
        if mask & 1:
            yield node
        mask >>= 1
        node += 1


# -- aggregate runner ---------------------------------------------------------------


SAFETY_CHECKS = (
    check_lemma1,
    check_update_time_order,
    check_causal_snapshots,
    check_atomicity,
    check_sessions,
    check_replication_channels,
)


def run_safety_suite(trace) -> list[Verdict]:
    index = ensure_index(trace)
    return [check(index) for check in SAFETY_CHECKS]


def run_all_checks(trace, oracle_bound: int | None = None) -> list[Verdict]:
    index = ensure_index(trace)
    verdicts = run_safety_suite(index)
    if oracle_bound is not None:
        verdicts.append(brute_force_oracle(index, oracle_bound))
    return verdicts
