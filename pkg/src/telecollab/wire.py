"""Framed message protocol spoken by every peer in the stack.

A frame is a 4-byte big-endian length followed by one UTF-8 JSON object with
the top-level keys in the fixed order (version, seq, msg_type, sender, ts_ms,
body) and no insignificant whitespace.  Body objects are emitted with keys
sorted lexicographically at every nesting level, so encoding is byte-identical
across runs and processes.  The console bridge carries the same JSON text
without the length prefix.
"""

from __future__ import annotations

import json
import math
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Optional

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 * 1024 * 1024
HEADER_BYTES = 4

MSG_TYPES = (
    "JOIN", "SNAPSHOT", "PHANTOM_UPDATE", "LOCK_REQ", "LOCK_GRANT",
    "LOCK_DENY", "VALIDATE", "ROBOT_CMD", "ROBOT_STATE", "FRAME",
    "SUBSCRIBE", "PING", "PONG", "MODULE_SIGNAL", "STATE_REPORT", "ERROR",
)

PLATFORMS = ("WEB", "VR", "MOBILE")
PEER_ROLES = ("user", "robot")
OBJECT_KINDS = ("SCENE_OBJECT", "PHANTOM_ROBOT")
SUBSCRIBE_MODES = ("UNICAST", "MULTICAST_GROUP")
SIGNAL_KINDS = ("LOAD", "UNLOAD", "SAFE")
REPORT_STATUSES = ("OK", "DEGRADED", "FAILED")
MODULE_MODES = ("CLASSIC_MODE", "SAFE_MODE")
CMD_KINDS = ("joint", "trajectory")
CMD_STATUSES = ("ACCEPTED", "BUSY", "REJECTED")


class WireError(Exception):
    """Base class for every codec failure."""


class SchemaError(WireError):
    """Body does not match the schema its msg_type demands (encode side)."""


class ProtocolError(WireError):
    """Malformed or non-conforming bytes on the decode side."""


class FrameSizeError(WireError):
    """Frame payload exceeds MAX_FRAME_BYTES."""


class VersionError(WireError):
    """Peer speaks a protocol version newer than ours."""


@dataclass(frozen=True)
class Envelope:
    """One protocol message.  seq increases strictly per sender connection."""

    version: int
    seq: int
    msg_type: str
    sender: str
    ts_ms: int
    body: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        # Normalize to a plain dict so equality is structural.  Bodies are
        # treated as immutable by every sender and receiver.
        if type(self.body) is not dict:
            object.__setattr__(self, "body", dict(self.body))


def make_envelope(msg_type: str, sender: str, seq: int, ts_ms: int = 0,
                  body: Optional[Mapping[str, Any]] = None) -> Envelope:
    return Envelope(PROTOCOL_VERSION, seq, msg_type, sender, ts_ms, body or {})


class EnvelopeSender:
    """Outbound envelope factory for one connection: a single strictly
    increasing seq, no matter which part of a server originates the send."""

    def __init__(self, deliver: Callable[[Envelope], None],
                 sender: str = "server"):
        self._deliver = deliver
        self.sender = sender
        self._seq = 0
        self._lock = threading.Lock()

    def send(self, msg_type: str, body: Mapping[str, Any]) -> None:
        # Stamping and delivery stay atomic so receivers see seq in order.
        with self._lock:
            self._seq += 1
            self._deliver(Envelope(PROTOCOL_VERSION, self._seq, msg_type,
                                   self.sender, int(time.time() * 1000),
                                   body))


# ---------------------------------------------------------------------------
# Body schemas.  Each field maps to (required, predicate, description); an
# optional per-type cross-field check runs after the field pass.

def _is_str(v): return isinstance(v, str)
def _is_int(v): return isinstance(v, int) and not isinstance(v, bool)
def _is_uint(v): return _is_int(v) and v >= 0
def _is_num(v): return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)
def _is_opt_str(v): return v is None or isinstance(v, str)
def _is_bool(v): return isinstance(v, bool)


def _is_q6(v):
    return isinstance(v, list) and len(v) == 6 and all(_is_num(x) for x in v)


def _is_pose(v):
    if not isinstance(v, dict) or set(v) != {"position", "orientation"}:
        return False
    p, o = v["position"], v["orientation"]
    return (isinstance(p, list) and len(p) == 3 and all(_is_num(x) for x in p)
            and isinstance(o, list) and len(o) == 4 and all(_is_num(x) for x in o))


def _is_in(options):
    def check(v):
        return isinstance(v, str) and v in options
    return check


def _is_object_record(v):
    if not isinstance(v, dict):
        return False
    required = {"object_id", "kind", "owner", "world_seq"}
    if not required <= set(v):
        return False
    if not (_is_str(v["object_id"]) and v["kind"] in OBJECT_KINDS
            and _is_opt_str(v["owner"]) and _is_uint(v["world_seq"])):
        return False
    extra = set(v) - required
    if v["kind"] == "SCENE_OBJECT":
        return extra == {"pose"} and _is_pose(v["pose"])
    return extra == {"q"} and _is_q6(v["q"])


def _is_object_list(v):
    return isinstance(v, list) and all(_is_object_record(x) for x in v)


def _is_user_list(v):
    return isinstance(v, list) and all(
        isinstance(x, dict) and set(x) == {"user_id", "platform"}
        and _is_str(x["user_id"]) and x["platform"] in PLATFORMS for x in v)


def _is_waypoints(v):
    return isinstance(v, list) and len(v) >= 1 and all(_is_q6(x) for x in v)


def _validate_subscribe(body):
    if body["mode"] == "MULTICAST_GROUP" and "group_id" not in body:
        return "group_id required in MULTICAST_GROUP mode"
    return None


def _validate_signal(body):
    if body["kind"] == "SAFE" and "degree" not in body:
        return "SAFE signal requires a degree"
    if body["kind"] != "SAFE" and "degree" in body:
        return "degree only valid on SAFE"
    return None


def _validate_cmd(body):
    if body["kind"] == "joint" and "q" not in body:
        return "joint command requires q"
    if body["kind"] == "trajectory" and "waypoints" not in body:
        return "trajectory command requires waypoints"
    return None


BODY_SCHEMAS: dict[str, tuple[dict, Any]] = {
    "JOIN": ({
        "user_id": (True, _is_str),
        "platform": (True, _is_in(PLATFORMS)),
        "role": (False, _is_in(PEER_ROLES)),
    }, None),
    "SNAPSHOT": ({
        "world_seq": (True, _is_uint),
        "objects": (True, _is_object_list),
        "connected_users": (True, _is_user_list),
        "session_id": (False, _is_str),
        "phantom_id": (False, _is_str),
    }, None),
    "PHANTOM_UPDATE": ({
        "q": (True, _is_q6),
        "user_id": (False, _is_str),
        "world_seq": (False, _is_uint),
    }, None),
    # release=true turns the request into a lock release.
    "LOCK_REQ": ({"object_id": (True, _is_str),
                  "release": (False, _is_bool)}, None),
    # owner == null announces a release; world_seq orders all lock changes.
    "LOCK_GRANT": ({
        "object_id": (True, _is_str),
        "owner": (True, _is_opt_str),
        "world_seq": (True, _is_uint),
    }, None),
    "LOCK_DENY": ({
        "object_id": (True, _is_str),
        "owner": (True, _is_str),
    }, None),
    # Request body is empty; the server's receipt fills status/command_id.
    "VALIDATE": ({
        "status": (False, _is_in(CMD_STATUSES)),
        "command_id": (False, _is_opt_str),
        "detail": (False, _is_str),
    }, None),
    "ROBOT_CMD": ({
        "command_id": (True, _is_str),
        "kind": (True, _is_in(CMD_KINDS)),
        "q": (False, _is_q6),
        "waypoints": (False, _is_waypoints),
        "origin": (False, _is_str),
        "status": (False, _is_in(CMD_STATUSES)),
        "detail": (False, _is_str),
    }, _validate_cmd),
    "ROBOT_STATE": ({
        "q": (True, _is_q6),
        "tool_pose": (True, _is_pose),
        "executing": (True, _is_opt_str),
        "event": (True, _is_in(("state", "completed"))),
        "completed_command_id": (False, _is_str),
    }, None),
    "FRAME": ({
        "source_id": (True, _is_str),
        "frame_seq": (True, _is_uint),
        "ts_ms": (True, _is_uint),
        "payload_b64": (True, _is_str),
    }, None),
    # cancel=true withdraws the subscription.
    "SUBSCRIBE": ({
        "source_id": (True, _is_str),
        "mode": (True, _is_in(SUBSCRIBE_MODES)),
        "group_id": (False, _is_str),
        "status": (False, _is_str),
        "cancel": (False, _is_bool),
    }, _validate_subscribe),
    "PING": ({"nonce": (False, _is_uint)}, None),
    "PONG": ({"nonce": (False, _is_uint)}, None),
    "MODULE_SIGNAL": ({
        "module": (True, _is_str),
        "kind": (True, _is_in(SIGNAL_KINDS)),
        "degree": (False, _is_uint),
    }, _validate_signal),
    "STATE_REPORT": ({
        "module": (True, _is_str),
        "status": (True, _is_in(REPORT_STATUSES)),
        "active_units": (True, _is_uint),
        "detail": (True, _is_str),
        "requested_units": (False, _is_uint),
        "mode": (False, _is_in(MODULE_MODES)),
    }, None),
    "ERROR": ({
        "code": (True, _is_str),
        "detail": (True, _is_str),
    }, None),
}

assert set(BODY_SCHEMAS) == set(MSG_TYPES)


def check_body(msg_type: str, body: Mapping[str, Any]) -> Optional[str]:
    """Return a human-readable violation, or None when the body conforms."""
    schema = BODY_SCHEMAS.get(msg_type)
    if schema is None:
        return f"unknown msg_type {msg_type!r}"
    fields, cross = schema
    for name, (required, pred) in fields.items():
        if name not in body:
            if required:
                return f"{msg_type} body missing field {name!r}"
            continue
        if not pred(body[name]):
            return f"{msg_type} body field {name!r} has invalid value"
    extra = set(body) - set(fields)
    if extra:
        return f"{msg_type} body has unknown field {sorted(extra)[0]!r}"
    if cross is not None:
        return cross(body)
    return None


# ---------------------------------------------------------------------------
# Codec

def _canonical_payload(msg: Envelope) -> bytes:
    body_json = json.dumps(msg.body, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False, allow_nan=False)
    text = ('{"version":%d,"seq":%d,"msg_type":%s,"sender":%s,'
            '"ts_ms":%d,"body":%s}') % (
        msg.version, msg.seq, json.dumps(msg.msg_type),
        json.dumps(msg.sender, ensure_ascii=False), msg.ts_ms, body_json)
    return text.encode("utf-8")


def encode_frame(msg: Envelope) -> bytes:
    """Serialize one Envelope to its length-prefixed canonical frame."""
    if not _is_uint(msg.version) or msg.version < 1:
        raise SchemaError(f"invalid version {msg.version!r}")
    if not _is_uint(msg.seq):
        raise SchemaError(f"seq must be a non-negative integer, got {msg.seq!r}")
    if not _is_int(msg.ts_ms):
        raise SchemaError(f"ts_ms must be an integer, got {msg.ts_ms!r}")
    if not isinstance(msg.sender, str) or not msg.sender:
        raise SchemaError("sender must be a non-empty string")
    if msg.msg_type not in MSG_TYPES:
        raise SchemaError(f"unknown msg_type {msg.msg_type!r}")
    violation = check_body(msg.msg_type, msg.body)
    if violation:
        raise SchemaError(violation)
    payload = _canonical_payload(msg)
    if len(payload) > MAX_FRAME_BYTES:
        raise FrameSizeError(
            f"payload of {len(payload)} bytes exceeds {MAX_FRAME_BYTES}")
    return struct.pack(">I", len(payload)) + payload


TOP_LEVEL_KEYS = ("version", "seq", "msg_type", "sender", "ts_ms", "body")


def envelope_from_obj(obj: Any) -> Envelope:
    """Build a validated Envelope from a parsed JSON object."""
    if not isinstance(obj, dict):
        raise ProtocolError("frame payload is not a JSON object")
    missing = [k for k in TOP_LEVEL_KEYS if k not in obj]
    if missing:
        raise ProtocolError(f"frame missing field {missing[0]!r}")
    extra = set(obj) - set(TOP_LEVEL_KEYS)
    if extra:
        raise ProtocolError(f"frame has unknown field {sorted(extra)[0]!r}")
    if not _is_uint(obj["version"]) or obj["version"] < 1:
        raise ProtocolError("field 'version' must be a positive integer")
    if obj["version"] > PROTOCOL_VERSION:
        raise VersionError(
            f"version {obj['version']} not supported (max {PROTOCOL_VERSION})")
    if not _is_uint(obj["seq"]):
        raise ProtocolError("field 'seq' must be a non-negative integer")
    if not isinstance(obj["msg_type"], str) or obj["msg_type"] not in MSG_TYPES:
        raise ProtocolError(f"field 'msg_type' unknown: {obj['msg_type']!r}")
    if not isinstance(obj["sender"], str) or not obj["sender"]:
        raise ProtocolError("field 'sender' must be a non-empty string")
    if not _is_int(obj["ts_ms"]):
        raise ProtocolError("field 'ts_ms' must be an integer")
    if not isinstance(obj["body"], dict):
        raise ProtocolError("field 'body' must be an object")
    violation = check_body(obj["msg_type"], obj["body"])
    if violation:
        raise ProtocolError(violation)
    return Envelope(obj["version"], obj["seq"], obj["msg_type"],
                    obj["sender"], obj["ts_ms"], obj["body"])


def decode_payload(payload: bytes | str) -> Envelope:
    """Decode one unframed JSON payload (the bridge transport)."""
    try:
        obj = json.loads(payload)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"malformed JSON payload: {exc}") from None
    return envelope_from_obj(obj)


def decode_frame(data: bytes | bytearray | memoryview
                 ) -> Optional[tuple[Envelope, int]]:
    """Decode the first frame in data.

    Returns (envelope, bytes_consumed), or None when more bytes are needed.
    Raises FrameSizeError / ProtocolError / VersionError on bad input; these
    are connection-fatal.
    """
    view = memoryview(data)
    if len(view) < HEADER_BYTES:
        return None
    (length,) = struct.unpack(">I", view[:HEADER_BYTES])
    if length > MAX_FRAME_BYTES:
        raise FrameSizeError(
            f"length prefix {length} exceeds {MAX_FRAME_BYTES}")
    if len(view) < HEADER_BYTES + length:
        return None
    payload = bytes(view[HEADER_BYTES:HEADER_BYTES + length])
    return decode_payload(payload), HEADER_BYTES + length


class FrameDecoder:
    """Incremental decoder for a byte stream of concatenated frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> None:
        self._buf.extend(chunk)

    def pending(self) -> int:
        return len(self._buf)

    def frames(self) -> Iterator[Envelope]:
        """Yield every complete frame currently buffered."""
        while True:
            result = decode_frame(self._buf)
            if result is None:
                return
            envelope, consumed = result
            del self._buf[:consumed]
            yield envelope
