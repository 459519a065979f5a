import random

import pytest

from paris.clocks import TxId, VersionStamp
from paris.storage import ProtocolFault, RoutingFault, Storage


def put(store, key, ut, seq=0, sr=0, value=b"v"):
    store.put_version(key, value, ut, TxId(sr, 0, seq), sr)


def chain_uts(store, key):
    return [v.ut for v in store.chain(key)]


def test_insert_into_empty_chain():
    store = Storage()
    put(store, b"x", 5)
    assert chain_uts(store, b"x") == [5]


def test_insert_older_version_behind():
    store = Storage()
    put(store, b"x", 5)
    put(store, b"x", 3)
    assert chain_uts(store, b"x") == [5, 3]


def test_reinsert_identical_version_is_idempotent():
    store = Storage()
    put(store, b"x", 5, seq=1)
    put(store, b"x", 5, seq=1)
    assert chain_uts(store, b"x") == [5]


def test_same_stamp_different_value_faults():
    store = Storage()
    store.put_version(b"x", b"a", 5, TxId(0, 0, 1), 0)
    with pytest.raises(ProtocolFault):
        store.put_version(b"x", b"b", 5, TxId(0, 0, 1), 0)


def test_unowned_key_is_routing_fault():
    store = Storage(owns=lambda k: k == b"mine")
    put(store, b"mine", 1)
    with pytest.raises(RoutingFault):
        put(store, b"other", 1)
    with pytest.raises(RoutingFault):
        store.read_visible(b"other", 10)


def test_read_visible_picks_freshest_at_or_below_snapshot():
    store = Storage()
    put(store, b"x", 3)
    put(store, b"x", 7)
    assert store.read_visible(b"x", 5).ut == 3
    assert store.read_visible(b"x", 7).ut == 7
    assert store.read_visible(b"x", 2) is None


def test_read_visible_breaks_ties_by_stamp():
    store = Storage()
    store.put_version(b"x", b"a", 5, TxId(0, 0, 1), 0)
    store.put_version(b"x", b"b", 5, TxId(0, 0, 2), 1)
    got = store.read_visible(b"x", 5)
    assert got.tx == TxId(0, 0, 2)


def test_gc_examples():
    store = Storage()
    for ut in (2, 5, 9):
        put(store, b"x", ut)
    removed = store.collect_garbage(6)
    assert removed == 1
    assert chain_uts(store, b"x") == [9, 5]

    store = Storage()
    put(store, b"x", 2)
    assert store.collect_garbage(6) == 0
    assert chain_uts(store, b"x") == [2]

    store = Storage()
    put(store, b"x", 8)
    put(store, b"x", 9)
    assert store.collect_garbage(6) == 0
    assert chain_uts(store, b"x") == [9, 8]


def _brute_force_visible(versions, snapshot):
    """Linear-scan oracle: max stamp among versions with ut <= snapshot."""
    visible = [v for v in versions if v.ut <= snapshot]
    if not visible:
        return None
    return max(visible, key=lambda v: VersionStamp(v.ut, v.tx, v.sr))


def _random_chain(rng, store, key, length):
    inserted = []
    for i in range(length):
        ut = rng.randrange(0, 40)
        store.put_version(key, b"v%d" % i, ut, TxId(rng.randrange(3), 0, i), rng.randrange(3))
        inserted.append(store.chain(key))
    return store.chain(key)


def test_read_visible_matches_linear_scan_oracle():
    rng = random.Random(11)
    for trial in range(60):
        store = Storage()
        versions = _random_chain(rng, store, b"k", rng.randrange(1, 100))
        for snapshot in range(0, 42):
            assert store.read_visible(b"k", snapshot) == _brute_force_visible(
                versions, snapshot
            ), f"trial {trial} snapshot {snapshot}"


def test_gc_preserves_reads_at_or_above_floor():
    rng = random.Random(12)
    for trial in range(80):
        store = Storage()
        n_keys = rng.randrange(1, 4)
        for ki in range(n_keys):
            _random_chain(rng, store, b"k%d" % ki, rng.randrange(1, 25))
        s_old = rng.randrange(0, 45)
        before = {
            (k, s): store.read_visible(k, s)
            for k in store.keys()
            for s in range(s_old, 45)
        }
        store.collect_garbage(s_old)
        for (k, s), expected in before.items():
            assert store.read_visible(k, s) == expected


def test_put_never_changes_reads_below_its_ut():
    rng = random.Random(13)
    store = Storage()
    for i in range(200):
        snapshots = list(range(0, 40))
        before = {s: store.read_visible(b"k", s) for s in snapshots}
        ut = rng.randrange(0, 40)
        store.put_version(b"k", b"v%d" % i, ut, TxId(0, 0, i), 0)
        for s in snapshots:
            if s < ut:
                assert store.read_visible(b"k", s) == before[s]
