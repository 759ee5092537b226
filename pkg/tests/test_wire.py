"""Codec tests: framing, canonical bytes, round trips, rejection paths."""

import json
import math
import struct

import pytest
from hypothesis import given, settings, strategies as st

from telecollab import wire
from telecollab.wire import (Envelope, FrameDecoder, FrameSizeError,
                             ProtocolError, SchemaError, VersionError,
                             decode_frame, encode_frame, make_envelope)


def test_ping_frame_layout():
    # Independently constructed canonical JSON; byte count verified by hand.
    expected_json = ('{"version":1,"seq":1,"msg_type":"PING","sender":"c1",'
                     '"ts_ms":0,"body":{}}')
    assert len(expected_json.encode("utf-8")) == 73
    data = encode_frame(make_envelope("PING", "c1", 1, 0, {}))
    assert data[:4] == struct.pack(">I", 73)
    assert data[4:] == expected_json.encode("utf-8")


def test_round_trip_simple():
    env = make_envelope("LOCK_REQ", "alice", 7, 123, {"object_id": "peg"})
    decoded, consumed = decode_frame(encode_frame(env))
    assert decoded == env
    assert consumed == len(encode_frame(env))


def test_phantom_update_full_precision():
    q = [0.1, -math.pi, 1e-17, 2.5e300, -0.0, 123456.789012345]
    env = make_envelope("PHANTOM_UPDATE", "c1", 3, 9, {"q": q})
    data = encode_frame(env)
    # Independent parser on the emitted bytes.
    obj = json.loads(data[4:].decode("utf-8"))
    assert obj["body"]["q"] == q
    decoded, _ = decode_frame(data)
    assert decoded.body["q"] == q


def test_encode_is_deterministic_across_key_order():
    body_a = {"object_id": "peg", "owner": "alice", "world_seq": 4}
    body_b = {"world_seq": 4, "owner": "alice", "object_id": "peg"}
    a = encode_frame(make_envelope("LOCK_GRANT", "s", 1, 5, body_a))
    b = encode_frame(make_envelope("LOCK_GRANT", "s", 1, 5, body_b))
    assert a == b


def test_incomplete_header_needs_more():
    assert decode_frame(b"\x00\x00\x00") is None


def test_incomplete_payload_needs_more():
    data = encode_frame(make_envelope("PING", "c1", 1))
    assert decode_frame(data[:-1]) is None


def test_corrupt_payload_rejected():
    data = bytearray(encode_frame(make_envelope("PING", "c1", 1)))
    data[4] = ord("X")  # clobber the opening brace
    with pytest.raises(ProtocolError):
        decode_frame(bytes(data))


def test_unknown_msg_type_rejected():
    payload = json.dumps({"version": 1, "seq": 1, "msg_type": "NOPE",
                          "sender": "x", "ts_ms": 0, "body": {}}).encode()
    framed = struct.pack(">I", len(payload)) + payload
    with pytest.raises(ProtocolError, match="msg_type"):
        decode_frame(framed)


def test_future_version_rejected():
    payload = json.dumps({"version": 2, "seq": 1, "msg_type": "PING",
                          "sender": "x", "ts_ms": 0, "body": {}}).encode()
    framed = struct.pack(">I", len(payload)) + payload
    with pytest.raises(VersionError):
        decode_frame(framed)


def test_unknown_top_level_field_rejected():
    payload = json.dumps({"version": 1, "seq": 1, "msg_type": "PING",
                          "sender": "x", "ts_ms": 0, "body": {},
                          "extra": 1}).encode()
    framed = struct.pack(">I", len(payload)) + payload
    with pytest.raises(ProtocolError, match="extra"):
        decode_frame(framed)


def test_body_schema_enforced_on_encode():
    with pytest.raises(SchemaError):
        encode_frame(make_envelope("PING", "c1", 1, 0, {"x": 1}))
    with pytest.raises(SchemaError):
        encode_frame(make_envelope("LOCK_REQ", "c1", 1, 0, {}))
    with pytest.raises(SchemaError):
        encode_frame(make_envelope("PHANTOM_UPDATE", "c1", 1, 0,
                                   {"q": [0.0] * 5}))


def test_body_schema_enforced_on_decode():
    payload = json.dumps({"version": 1, "seq": 1, "msg_type": "LOCK_REQ",
                          "sender": "x", "ts_ms": 0, "body": {}}).encode()
    framed = struct.pack(">I", len(payload)) + payload
    with pytest.raises(ProtocolError, match="object_id"):
        decode_frame(framed)


def test_safe_signal_cross_field_rules():
    encode_frame(make_envelope("MODULE_SIGNAL", "core", 1, 0,
                               {"module": "camera", "kind": "SAFE",
                                "degree": 4}))
    with pytest.raises(SchemaError):
        encode_frame(make_envelope("MODULE_SIGNAL", "core", 1, 0,
                                   {"module": "camera", "kind": "SAFE"}))
    with pytest.raises(SchemaError):
        encode_frame(make_envelope("MODULE_SIGNAL", "core", 1, 0,
                                   {"module": "camera", "kind": "LOAD",
                                    "degree": 1}))


def test_oversize_length_prefix_rejected():
    framed = struct.pack(">I", wire.MAX_FRAME_BYTES + 1) + b"x"
    with pytest.raises(FrameSizeError):
        decode_frame(framed)


def test_oversize_payload_rejected_on_encode():
    big = "p" * (wire.MAX_FRAME_BYTES + 10)
    env = make_envelope("FRAME", "s", 1, 0, {
        "source_id": "cam", "frame_seq": 1, "ts_ms": 0, "payload_b64": big})
    with pytest.raises(FrameSizeError):
        encode_frame(env)


def test_concatenated_frames_decode_in_order():
    envs = [make_envelope("PING", "c1", i, i, {"nonce": i}) for i in range(1, 9)]
    blob = b"".join(encode_frame(e) for e in envs)
    out = []
    while blob:
        env, n = decode_frame(blob)
        out.append(env)
        blob = blob[n:]
    assert out == envs


def test_frame_decoder_handles_split_chunks():
    envs = [make_envelope("LOCK_REQ", "a", i, 0, {"object_id": f"o{i}"})
            for i in range(1, 6)]
    blob = b"".join(encode_frame(e) for e in envs)
    decoder = FrameDecoder()
    seen = []
    for i in range(0, len(blob), 7):  # drip-feed in awkward chunks
        decoder.feed(blob[i:i + 7])
        seen.extend(decoder.frames())
    assert seen == envs


# ---------------------------------------------------------------------------
# Property: decode(encode(m)) == m over randomized messages of every type.

_text = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1,
                max_size=12)
_f64 = st.floats(allow_nan=False, allow_infinity=False, width=64)
_q6 = st.lists(_f64, min_size=6, max_size=6)
_pose = st.fixed_dictionaries({
    "position": st.lists(_f64, min_size=3, max_size=3),
    "orientation": st.lists(_f64, min_size=4, max_size=4)})


def _object_record():
    scene = st.fixed_dictionaries({
        "object_id": _text, "kind": st.just("SCENE_OBJECT"),
        "owner": st.one_of(st.none(), _text),
        "world_seq": st.integers(0, 2**62), "pose": _pose})
    phantom = st.fixed_dictionaries({
        "object_id": _text, "kind": st.just("PHANTOM_ROBOT"),
        "owner": st.one_of(st.none(), _text),
        "world_seq": st.integers(0, 2**62), "q": _q6})
    return st.one_of(scene, phantom)


_BODIES = {
    "JOIN": st.fixed_dictionaries(
        {"user_id": _text, "platform": st.sampled_from(wire.PLATFORMS)},
        optional={"role": st.sampled_from(wire.PEER_ROLES)}),
    "SNAPSHOT": st.fixed_dictionaries({
        "world_seq": st.integers(0, 2**62),
        "objects": st.lists(_object_record(), max_size=4),
        "connected_users": st.lists(st.fixed_dictionaries({
            "user_id": _text,
            "platform": st.sampled_from(wire.PLATFORMS)}), max_size=3)}),
    "PHANTOM_UPDATE": st.fixed_dictionaries(
        {"q": _q6},
        optional={"user_id": _text, "world_seq": st.integers(0, 2**62)}),
    "LOCK_REQ": st.fixed_dictionaries({"object_id": _text}),
    "LOCK_GRANT": st.fixed_dictionaries({
        "object_id": _text, "owner": st.one_of(st.none(), _text),
        "world_seq": st.integers(0, 2**62)}),
    "LOCK_DENY": st.fixed_dictionaries({"object_id": _text, "owner": _text}),
    "VALIDATE": st.fixed_dictionaries({}, optional={
        "status": st.sampled_from(wire.CMD_STATUSES),
        "command_id": st.one_of(st.none(), _text), "detail": _text}),
    "ROBOT_CMD": st.one_of(
        st.fixed_dictionaries(
            {"command_id": _text, "kind": st.just("joint"), "q": _q6},
            optional={"origin": _text,
                      "status": st.sampled_from(wire.CMD_STATUSES)}),
        st.fixed_dictionaries(
            {"command_id": _text, "kind": st.just("trajectory"),
             "waypoints": st.lists(_q6, min_size=1, max_size=3)})),
    "ROBOT_STATE": st.fixed_dictionaries(
        {"q": _q6, "tool_pose": _pose,
         "executing": st.one_of(st.none(), _text),
         "event": st.sampled_from(("state", "completed"))},
        optional={"completed_command_id": _text}),
    "FRAME": st.fixed_dictionaries({
        "source_id": _text, "frame_seq": st.integers(0, 2**62),
        "ts_ms": st.integers(0, 2**62),
        "payload_b64": st.just("cGF5bG9hZA==")}),
    "SUBSCRIBE": st.one_of(
        st.fixed_dictionaries({"source_id": _text,
                               "mode": st.just("UNICAST")}),
        st.fixed_dictionaries({"source_id": _text,
                               "mode": st.just("MULTICAST_GROUP"),
                               "group_id": _text})),
    "PING": st.fixed_dictionaries({}, optional={"nonce": st.integers(0, 2**32)}),
    "PONG": st.fixed_dictionaries({}, optional={"nonce": st.integers(0, 2**32)}),
    "MODULE_SIGNAL": st.one_of(
        st.fixed_dictionaries({"module": _text,
                               "kind": st.sampled_from(("LOAD", "UNLOAD"))}),
        st.fixed_dictionaries({"module": _text, "kind": st.just("SAFE"),
                               "degree": st.integers(0, 64)})),
    "STATE_REPORT": st.fixed_dictionaries({
        "module": _text, "status": st.sampled_from(wire.REPORT_STATUSES),
        "active_units": st.integers(0, 64), "detail": _text}),
    "ERROR": st.fixed_dictionaries({"code": _text, "detail": _text}),
}

assert set(_BODIES) == set(wire.MSG_TYPES)


@st.composite
def _envelopes(draw):
    msg_type = draw(st.sampled_from(wire.MSG_TYPES))
    return Envelope(
        version=1, seq=draw(st.integers(0, 2**62)), msg_type=msg_type,
        sender=draw(_text), ts_ms=draw(st.integers(-2**40, 2**40)),
        body=draw(_BODIES[msg_type]))


@given(_envelopes())
@settings(max_examples=300, deadline=None)
def test_round_trip_property(env):
    data = encode_frame(env)
    assert data == encode_frame(env)  # determinism
    decoded, consumed = decode_frame(data)
    assert consumed == len(data)
    assert decoded == env


@given(st.lists(_envelopes(), min_size=1, max_size=6))
@settings(max_examples=60, deadline=None)
def test_framing_property(envs):
    decoder = FrameDecoder()
    decoder.feed(b"".join(encode_frame(e) for e in envs))
    assert list(decoder.frames()) == envs
    assert decoder.pending() == 0
