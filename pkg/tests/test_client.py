import pytest

from paris import messages as m
from paris.client import ClientSession, UsageError
from paris.clocks import TxId
from util import FakeEnv, fast_config


def make_session():
    env = FakeEnv()
    cfg = fast_config()
    return env, ClientSession(env, cfg, "c0.0", 0, "s0.0")


def begin(env, session, tx_seq=0, ust=0):
    out = []
    session.start(lambda tx, snap: out.append((tx, snap)))
    (_, dst, req), = env.take_sent()
    assert dst == "s0.0" and isinstance(req, m.StartTxReq)
    session.on_message("s0.0", m.StartTxResp(TxId(0, 0, tx_seq), ust))
    return out[0]


def test_start_prunes_cache_up_to_new_snapshot():
    env, session = make_session()
    session.ust_c = 5
    session.wc = {b"x": (b"1", 7, TxId(0, 0, 1)), b"y": (b"2", 12, TxId(0, 0, 2))}
    tx, snapshot = begin(env, session, ust=9)
    assert snapshot == 9 and session.ust_c == 9
    assert set(session.wc) == {b"y"}
    # a response at exactly the old mark prunes nothing further
    env2, session2 = make_session()
    session2.ust_c = 5
    session2.wc = {b"y": (b"2", 12, TxId(0, 0, 2))}
    begin(env2, session2, ust=5)
    assert set(session2.wc) == {b"y"}


def test_first_start_from_epoch():
    env, session = make_session()
    tx, snapshot = begin(env, session, ust=3)
    assert session.ust_c == 3
    assert session.wc == {}
    assert session.rs == {} and session.ws == {}


def test_start_twice_is_usage_error():
    env, session = make_session()
    begin(env, session)
    with pytest.raises(UsageError):
        session.start(lambda *a: None)


def test_read_write_set_hit_needs_no_network():
    env, session = make_session()
    begin(env, session)
    session.write([(b"x", b"1")])
    out = []
    session.read([b"x"], out.append)
    assert out == [{b"x": b"1"}]
    assert env.sent == []


def test_read_cache_hit_needs_no_network():
    env, session = make_session()
    session.wc = {b"x": (b"cached", 7, TxId(0, 0, 1))}
    begin(env, session, ust=2)
    out = []
    session.read([b"x"], out.append)
    assert out == [{b"x": b"cached"}]
    assert env.sent == []


def test_read_fetches_then_serves_repeat_from_read_set():
    env, session = make_session()
    tx, _ = begin(env, session)
    out = []
    session.read([b"x"], out.append)
    (_, _, req), = env.take_sent()
    assert isinstance(req, m.ReadReq) and req.keys == (b"x",)
    from paris.storage import Version

    session.on_message("s0.0", m.ReadResp((Version(b"x", b"v7", 7, TxId(1, 0, 3), 1),)))
    assert out == [{b"x": b"v7"}]
    # repeatable read: no second ReadReq for the same key
    session.read([b"x"], out.append)
    assert env.sent == []
    assert out[-1] == {b"x": b"v7"}


def test_read_absent_key_maps_to_none():
    env, session = make_session()
    begin(env, session)
    out = []
    session.read([b"nope"], out.append)
    session.on_message("s0.0", m.ReadResp(()))
    assert out == [{b"nope": None}]


def test_read_checks_ws_then_rs_then_wc():
    env, session = make_session()
    from paris.storage import Version

    session.wc = {b"k": (b"from-wc", 9, TxId(0, 0, 1))}
    begin(env, session, tx_seq=5, ust=2)
    session.rs[b"k"] = Version(b"k", b"from-rs", 1, TxId(1, 0, 0), 1)
    out = []
    session.read([b"k"], out.append)
    assert out == [{b"k": b"from-rs"}]
    session.write([(b"k", b"from-ws")])
    session.read([b"k"], out.append)
    assert out[-1] == {b"k": b"from-ws"}


def test_write_upserts():
    env, session = make_session()
    begin(env, session)
    session.write([(b"x", b"1")])
    session.write([(b"x", b"2"), (b"y", b"9")])
    assert session.ws == {b"x": b"2", b"y": b"9"}
    session.write([])
    assert session.ws == {b"x": b"2", b"y": b"9"}


def test_commit_moves_ws_to_cache_tagged_with_ct():
    env, session = make_session()
    tx, _ = begin(env, session)
    session.write([(b"x", b"1")])
    out = []
    session.commit(out.append)
    (_, _, req), = env.take_sent()
    assert isinstance(req, m.CommitReqClient)
    assert req.hwt == 0 and req.ws == ((b"x", b"1"),)
    session.on_message("s0.0", m.CommitResp(15))
    assert out == [15]
    assert session.hwt_c == 15
    assert session.wc[b"x"] == (b"1", 15, tx)
    assert session.tx is None and session.ws == {}


def test_commit_overwrites_older_cache_entry():
    env, session = make_session()
    session.wc = {b"x": (b"old", 9, TxId(0, 0, 0))}
    tx, _ = begin(env, session, ust=1)
    session.write([(b"x", b"new")])
    session.commit(lambda ct: None)
    env.take_sent()
    session.on_message("s0.0", m.CommitResp(15))
    assert session.wc[b"x"] == (b"new", 15, tx)


def test_commit_empty_ws_is_usage_error():
    env, session = make_session()
    begin(env, session)
    with pytest.raises(UsageError):
        session.commit(lambda ct: None)


def test_finish_clears_read_only_state():
    env, session = make_session()
    begin(env, session)
    out = []
    session.read([b"x"], out.append)
    session.on_message("s0.0", m.ReadResp(()))
    session.finish()
    assert session.tx is None and session.rs == {}
    with pytest.raises(UsageError):
        session.finish()


def test_ops_outside_transaction_are_usage_errors():
    env, session = make_session()
    with pytest.raises(UsageError):
        session.read([b"x"], lambda r: None)
    with pytest.raises(UsageError):
        session.write([(b"x", b"1")])
    with pytest.raises(UsageError):
        session.commit(lambda ct: None)
