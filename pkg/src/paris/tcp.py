"""Socket transport: the same servers and message schema over loopback TCP.

Smoke-level deployment of a small cluster in one process, one thread per
node. One long-lived connection per ordered (src, dst) pair, opened on
first use with a Hello handshake naming the dialing endpoint. Stream
order gives the FIFO channel contract. Runs here are NOT deterministic;
stats counters are advisory (the trace collector is the source of truth).
"""

from __future__ import annotations

import queue
import socket
import threading
import time

from . import messages as m
from . import wire
from .client import ClientSession
from .server import PartitionServer
from .sim import Stats, client_addr, server_addr
from .topology import ClusterConfig
from .trace import TraceCollector
from .workload import key_pools, session_plan

_STOP = object()


class TcpEnv:
    """Runtime services shared by every node in one cluster process."""

    def __init__(self, config: ClusterConfig, ports: dict[str, int]):
        self.config = config
        self.ports = ports
        self.stats = Stats()
        self.gc_verify = False
        self.trace = TraceCollector()
        self.errors: list[str] = []
        self._t0 = time.monotonic_ns()
        self._trace_lock = threading.Lock()
        self._conn_lock = threading.Lock()
        self._conns: dict[tuple[str, str], socket.socket] = {}
        self._timer_specs: dict[str, list[tuple[str, int]]] = {}

    def now_us(self) -> int:
        return (time.monotonic_ns() - self._t0) // 1000

    def physical_us(self, addr: str) -> int:
        return self.now_us()

    def record(self, kind: str, **fields) -> None:
        with self._trace_lock:
            self.trace.record(self.now_us(), kind, **fields)

    def every(self, addr: str, kind: str, period_us: int) -> None:
        self._timer_specs.setdefault(addr, []).append((kind, period_us))

    def send(self, src: str, dst: str, msg) -> None:
        conn = self._connection(src, dst)
        try:
            conn.sendall(wire.encode(msg))
        except OSError as exc:
            self.errors.append(f"send {src}->{dst} failed: {exc}")

    def _connection(self, src: str, dst: str) -> socket.socket:
        with self._conn_lock:
            conn = self._conns.get((src, dst))
            if conn is None:
                conn = socket.create_connection(("127.0.0.1", self.ports[dst]), timeout=10)
                conn.sendall(wire.encode(m.Hello(src)))
                self._conns[(src, dst)] = conn
        return conn

    def close_all(self) -> None:
        with self._conn_lock:
            for conn in self._conns.values():
                try:
                    conn.close()
                except OSError:
                    pass
            self._conns.clear()


class _Node(threading.Thread):
    """Owns one actor: a listener feeding an inbox, consumed sequentially."""

    def __init__(self, env: TcpEnv, addr: str, actor):
        super().__init__(daemon=True, name=f"node-{addr}")
        self.env = env
        self.addr = addr
        self.actor = actor
        self.inbox: queue.Queue = queue.Queue()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(("127.0.0.1", 0))
        self._listener.listen(64)
        self.port = self._listener.getsockname()[1]
        self._stop = threading.Event()
        self._timers: list[list] = []  # [next_due_us, kind, period_us]

    def start_accepting(self) -> None:
        threading.Thread(target=self._accept_loop, daemon=True).start()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._read_loop, args=(conn,), daemon=True).start()

    def _read_loop(self, conn: socket.socket) -> None:
        buffer = b""
        src = None
        while not self._stop.is_set():
            try:
                chunk = conn.recv(65536)
            except OSError:
                return
            if not chunk:
                return
            buffer += chunk
            while True:
                try:
                    msg, used = wire.decode(buffer)
                except wire.NeedMoreBytes:
                    break
                buffer = buffer[used:]
                if isinstance(msg, m.Hello):
                    src = msg.sender
                elif src is None:
                    self.env.errors.append(f"{self.addr}: frame before Hello")
                else:
                    self.inbox.put((src, msg))

    def run(self) -> None:
        now = self.env.now_us()
        for kind, period in self.env._timer_specs.get(self.addr, ()):
            self._timers.append([now + period, kind, period])
        while not self._stop.is_set():
            timeout = 0.05
            if self._timers:
                due = min(t[0] for t in self._timers)
                timeout = max(0.0, (due - self.env.now_us()) / 1e6)
            try:
                item = self.inbox.get(timeout=timeout)
            except queue.Empty:
                item = None
            try:
                if item is _STOP:
                    return
                if item is not None:
                    src, msg = item
                    self.actor.on_message(src, msg)
                now = self.env.now_us()
                for timer in self._timers:
                    if timer[0] <= now:
                        timer[0] += timer[2]
                        self.actor.on_timer(timer[1])
            except Exception as exc:  # surface, don't silently kill the node
                self.env.errors.append(f"{self.addr}: {type(exc).__name__}: {exc}")
                return

    def stop(self) -> None:
        self._stop.set()
        self.inbox.put(_STOP)
        try:
            self._listener.close()
        except OSError:
            pass


class _TcpClient:
    """Closed-loop synchronous session over the socket transport."""

    def __init__(self, env: TcpEnv, node: _Node, session: ClientSession, plans):
        self.env = env
        self.node = node
        self.session = session
        self.plans = plans
        self.max_ct = 0

    def _run_op(self, op) -> tuple:
        done: list = []
        op(lambda *args: done.append(args))
        while not done:
            src, msg = self.node.inbox.get(timeout=30)
            self.session.on_message(src, msg)
        return done[0]

    def run(self) -> None:
        for plan in self.plans:
            self._run_op(self.session.start)
            if plan.reads:
                self._run_op(lambda cb: self.session.read(plan.reads, cb))
            if plan.writes:
                self.session.write(plan.writes)
                (ct,) = self._run_op(self.session.commit)
                self.max_ct = max(self.max_ct, ct)
            else:
                self.session.finish()


class TcpCluster:
    """A whole cluster (servers and sessions) on loopback sockets."""

    def __init__(self, config: ClusterConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.env = TcpEnv(config, ports={})
        self.nodes: dict[str, _Node] = {}
        self.servers: dict[str, PartitionServer] = {}
        self.clients: list[_TcpClient] = []

    def start(self) -> None:
        for dc, n in self.config.servers():
            server = PartitionServer(self.env, self.config, dc, n)
            node = _Node(self.env, server.addr, server)
            self.nodes[server.addr] = node
            self.servers[server.addr] = server
            self.env.ports[server.addr] = node.port
            server.start_timers()
        pools = key_pools(self.config)
        for dc in range(self.config.dcs):
            local = self.config.local_partitions(dc)
            for idx in range(self.config.workload.sessions_per_dc):
                addr = client_addr(dc, idx)
                coordinator = server_addr(dc, local[idx % len(local)])
                session = ClientSession(self.env, self.config, addr, dc, coordinator)
                node = _Node(self.env, addr, session)
                self.nodes[addr] = node
                self.env.ports[addr] = node.port
                plans = session_plan(self.config, self.seed, dc, idx, pools)
                self.clients.append(_TcpClient(self.env, node, session, plans))
        for node in self.nodes.values():
            node.start_accepting()
        for addr, node in self.nodes.items():
            if addr.startswith("s"):
                node.start()

    def run(self, settle_timeout_s: float = 30.0) -> TraceCollector:
        threads = [threading.Thread(target=c.run, daemon=True) for c in self.clients]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=120)
            if t.is_alive():
                self.env.errors.append("client session timed out")
        target = max((c.max_ct for c in self.clients), default=0)
        deadline = time.monotonic() + settle_timeout_s
        while time.monotonic() < deadline:
            if all(s.ust >= target for s in self.servers.values()):
                break
            time.sleep(0.02)
        else:
            self.env.errors.append("cluster did not settle to the last commit")
        return self.env.trace

    def stop(self) -> None:
        for node in self.nodes.values():
            node.stop()
        self.env.close_all()
