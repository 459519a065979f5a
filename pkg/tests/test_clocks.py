import random

from paris.clocks import (
    TxId,
    VersionStamp,
    hlc_update_on_commit,
    hlc_update_on_prepare,
    version_cmp,
)


def test_prepare_update_formula():
    assert hlc_update_on_prepare(physical=10, hlc=12, ht=15) == 16
    assert hlc_update_on_prepare(physical=20, hlc=12, ht=5) == 20
    assert hlc_update_on_prepare(physical=0, hlc=0, ht=0) == 1


def test_prepare_strictly_exceeds_inputs():
    rng = random.Random(1)
    for _ in range(2000):
        physical = rng.randrange(0, 1 << 40)
        hlc = rng.randrange(0, 1 << 40)
        ht = rng.randrange(0, 1 << 40)
        out = hlc_update_on_prepare(physical, hlc, ht)
        assert out > hlc
        assert out > ht
        assert out >= physical


def test_commit_update_formula():
    assert hlc_update_on_commit(physical=9, hlc=13, ct=15) == 15
    assert hlc_update_on_commit(physical=30, hlc=13, ct=15) == 30
    assert hlc_update_on_commit(physical=0, hlc=0, ct=0) == 0


def test_hlc_sequence_never_decreases():
    rng = random.Random(2)
    hlc = 0
    physical = 0
    for _ in range(5000):
        physical += rng.randrange(0, 5)
        other = rng.randrange(0, 1 << 20)
        if rng.random() < 0.5:
            new = hlc_update_on_prepare(physical, hlc, other)
        else:
            new = hlc_update_on_commit(physical, hlc, other)
        assert new >= hlc
        hlc = new


def test_version_cmp_examples():
    a = VersionStamp(5, TxId(0, 0, 1), 0)
    b = VersionStamp(6, TxId(0, 0, 1), 0)
    assert version_cmp(a, b) == -1
    tie_a = VersionStamp(5, TxId(0, 0, 1), 0)
    tie_b = VersionStamp(5, TxId(0, 0, 2), 0)
    assert version_cmp(tie_a, tie_b) == -1
    assert version_cmp(tie_a, VersionStamp(5, TxId(0, 0, 1), 0)) == 0


def test_version_cmp_is_total_order():
    rng = random.Random(3)

    def stamp():
        return VersionStamp(
            rng.randrange(4), TxId(rng.randrange(3), rng.randrange(3), rng.randrange(3)),
            rng.randrange(3),
        )

    for _ in range(3000):
        a, b, c = stamp(), stamp(), stamp()
        # antisymmetry
        assert version_cmp(a, b) == -version_cmp(b, a)
        # totality: equal only when identical
        if version_cmp(a, b) == 0:
            assert a == b
        # transitivity
        if version_cmp(a, b) <= 0 and version_cmp(b, c) <= 0:
            assert version_cmp(a, c) <= 0


def test_txid_order_and_parse():
    assert TxId(0, 1, 5) < TxId(1, 0, 0)
    assert TxId(2, 3, 4) == TxId.parse("2.3.4")
    assert str(TxId(2, 3, 4)) == "2.3.4"
