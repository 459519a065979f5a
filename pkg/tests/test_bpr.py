from paris import messages as m
from paris.bpr import BprServer
from paris.checker import run_safety_suite
from paris.clocks import TxId
from paris.sim import server_addr
from paris.topology import LatencyRange, WorkloadConfig, desk_config
from util import FakeEnv, fast_config, key_for_partition


def solo_bpr(physical=0, config=None):
    env = FakeEnv(physical=physical)
    cfg = config or fast_config()
    return env, BprServer(env, cfg, 0, 0)


def test_snapshot_is_max_of_client_and_clock():
    env, server = solo_bpr(physical=12)
    server.handle_start_tx("c0.0", 5)
    (_, _, resp), = env.take_sent()
    assert resp.ust == 12

    env, server = solo_bpr(physical=12)
    server.handle_start_tx("c0.0", 20)
    (_, _, resp), = env.take_sent()
    assert resp.ust == 20


def test_snapshot_epoch_uses_coordinator_clock():
    env, server = solo_bpr(physical=7)
    server.hlc = 9
    server.handle_start_tx("c0.0", 0)
    (_, _, resp), = env.take_sent()
    assert resp.ust == 9  # hlc is ahead of the physical reading


def test_clock_snapshots_do_not_pollute_ust():
    env, server = solo_bpr(physical=100)
    server.handle_start_tx("c0.0", 50)
    assert server.ust == 0
    key = key_for_partition(server.config, 0)
    server.handle_prepare("s0.2", m.PrepareReq(TxId(0, 2, 1), 80, 80, ((key, b"v"),)))
    assert server.ust == 0


def test_slice_below_floor_is_immediate():
    cfg = fast_config()
    env, server = solo_bpr(config=cfg)
    server.vv = [12] * len(server.vv)
    key = key_for_partition(cfg, 0)
    server.handle_read_slice("s0.2", m.ReadSliceReq(1, (key,), 10, TxId(0, 2, 0)))
    assert len(env.sent) == 1
    assert env.stats.blocked_reads == 0


def test_slice_above_floor_parks_until_released():
    cfg = fast_config()
    env, server = solo_bpr(physical=0, config=cfg)
    server.vv = [12] * len(server.vv)
    server._floor = 12
    key = key_for_partition(cfg, 0)
    server.store.put_version(key, b"v", 14, TxId(0, 0, 9), 0)
    server.handle_read_slice("s0.2", m.ReadSliceReq(1, (key,), 15, TxId(0, 2, 0)))
    assert env.sent == []
    assert env.stats.blocked_reads == 1
    assert env.stats.wait_insertions == 1

    # floor reaches the snapshot via a heartbeat: the read is released
    env.t = 40
    peer_dc = [d for d in cfg.replicas(0) if d != 0][0]
    server.vv[server.r] = 15
    server.handle_heartbeat(server_addr(peer_dc, 0), 15)
    (_, dst, resp), = [x for x in env.take_sent() if isinstance(x[2], m.ReadSliceResp)]
    assert dst == "s0.2"
    assert [item.ut for item in resp.items] == [14]
    assert env.stats.blocked_time_us == 40
    blocked = [e for e in env.trace.events() if e.kind == "BlockedRead"]
    assert len(blocked) == 1 and blocked[0].int_field("dur") == 40


def test_release_preserves_partial_queue():
    cfg = fast_config()
    env, server = solo_bpr(config=cfg)
    server.vv = [10] * len(server.vv)
    server._floor = 10
    key = key_for_partition(cfg, 0)
    server.handle_read_slice("s0.2", m.ReadSliceReq(1, (key,), 20, TxId(0, 2, 0)))
    server.handle_read_slice("s0.2", m.ReadSliceReq(2, (key,), 30, TxId(0, 2, 1)))
    peer_dc = [d for d in cfg.replicas(0) if d != 0][0]
    server.vv[server.r] = 25
    server.handle_heartbeat(server_addr(peer_dc, 0), 25)
    released = [x for x in env.take_sent() if isinstance(x[2], m.ReadSliceResp)]
    assert [r[2].rid for r in released] == [1]
    assert len(server.wait_queue) == 1


def run_pair(seed=3):
    from paris.bench import run_experiment

    cfg = desk_config(
        inter_latency=LatencyRange(20_000, 40_000),
        workload=WorkloadConfig(
            reads_per_tx=10, writes_per_tx=10, locality_pct=50,
            sessions_per_dc=1, txs_per_session=6, keys=300,
        ),
    )
    return (
        run_experiment(cfg, seed, "paris"),
        run_experiment(cfg, seed, "bpr"),
    )


def test_paired_runs_block_only_in_bpr():
    paris, bpr = run_pair()
    assert paris.stats.wait_insertions == 0
    assert paris.stats.blocked_reads == 0
    assert bpr.stats.blocked_reads > 0
    assert bpr.stats.blocked_time_us > 0


def test_bpr_trace_passes_safety_suite():
    _, bpr = run_pair()
    for verdict in run_safety_suite(bpr.events()):
        assert verdict.ok, verdict.summary()


def test_bpr_snapshots_at_least_as_fresh_as_ust():
    _, bpr = run_pair()
    for ev in bpr.events():
        if ev.kind == "StartTx":
            assert ev.int_field("snapshot") >= ev.int_field("ust")


def test_bpr_read_latency_dominates_paris_on_same_seed():
    paris, bpr = run_pair()
    mean = lambda xs: sum(xs) / len(xs)
    assert mean(bpr.metrics.read_latencies) >= mean(paris.metrics.read_latencies)
