import random

import pytest

from paris import messages as m
from paris import wire
from paris.clocks import TxId
from paris.storage import Version


GOLDEN_HEARTBEAT = bytes.fromhex("000000090d0e00000000000000")


def test_heartbeat_golden_frame():
    frame = wire.encode(m.Heartbeat(t=14))
    assert len(frame) == 13
    assert frame == GOLDEN_HEARTBEAT
    msg, used = wire.decode(frame)
    assert msg == m.Heartbeat(t=14)
    assert used == 13


def test_unknown_tag_is_protocol_error():
    frame = bytearray(GOLDEN_HEARTBEAT)
    frame[4] = 0xFF
    with pytest.raises(wire.WireError):
        wire.decode(bytes(frame))


def test_truncated_frame_needs_more_bytes():
    frame = wire.encode(m.StartTxResp(TxId(1, 2, 3), 99))
    for cut in range(len(frame)):
        with pytest.raises(wire.NeedMoreBytes):
            wire.decode(frame[:cut])


def test_trailing_garbage_in_body_rejected():
    frame = bytearray(wire.encode(m.Heartbeat(t=14)))
    frame[:4] = (10).to_bytes(4, "big")
    frame.append(0)
    with pytest.raises(wire.WireError):
        wire.decode(bytes(frame))


def random_message(rng: random.Random):
    def blob(max_len=12):
        return bytes(rng.randrange(256) for _ in range(rng.randrange(max_len)))

    def ts():
        return rng.randrange(1 << 63)

    def txid():
        return TxId(rng.randrange(1 << 16), rng.randrange(1 << 16), rng.randrange(1 << 40))

    def keys():
        return tuple(blob() for _ in range(rng.randrange(4)))

    def pairs():
        return tuple((blob(), blob()) for _ in range(rng.randrange(4)))

    def version():
        return Version(blob(), blob(), ts(), txid(), rng.randrange(1 << 16))

    def items():
        return tuple(version() for _ in range(rng.randrange(3)))

    def vec():
        return tuple((rng.randrange(64), ts()) for _ in range(rng.randrange(5)))

    builders = [
        lambda: m.Hello("node-%d" % rng.randrange(100)),
        lambda: m.StartTxReq(ts()),
        lambda: m.StartTxResp(txid(), ts()),
        lambda: m.ReadReq(txid(), keys()),
        lambda: m.ReadResp(items()),
        lambda: m.ReadSliceReq(rng.randrange(1 << 32), keys(), ts(), txid()),
        lambda: m.ReadSliceResp(rng.randrange(1 << 32), items()),
        lambda: m.PrepareReq(txid(), ts(), ts(), pairs()),
        lambda: m.PrepareResp(txid(), ts()),
        lambda: m.CommitReqClient(txid(), ts(), pairs()),
        lambda: m.CommitReqCohort(txid(), ts()),
        lambda: m.CommitResp(ts()),
        lambda: m.Replicate(tuple((txid(), pairs()) for _ in range(rng.randrange(3))), ts()),
        lambda: m.Heartbeat(ts()),
        lambda: m.GsvUp(rng.randrange(1 << 20), vec()),
        lambda: m.GsvDown(rng.randrange(1 << 20), vec()),
        lambda: m.RootExchange(rng.randrange(64), vec(), ts()),
        lambda: m.SOldUp(rng.randrange(1 << 20), ts()),
        lambda: m.SOldDown(ts()),
        lambda: m.UstDown(ts()),
    ]
    return builders[rng.randrange(len(builders))]()


def test_round_trip_identity_randomized():
    rng = random.Random(0xC0FFEE)
    for _ in range(5000):
        msg = random_message(rng)
        frame = wire.encode(msg)
        decoded, used = wire.decode(frame)
        assert used == len(frame)
        assert decoded == msg


def test_decode_from_stream_with_multiple_frames():
    rng = random.Random(7)
    msgs = [random_message(rng) for _ in range(50)]
    buffer = b"".join(wire.encode(x) for x in msgs)
    out = []
    while buffer:
        msg, used = wire.decode(buffer)
        out.append(msg)
        buffer = buffer[used:]
    assert out == msgs


def test_every_message_type_covered():
    rng = random.Random(1)
    seen = set()
    for _ in range(2000):
        seen.add(type(random_message(rng)))
    assert seen == set(m.MESSAGE_TYPES)
