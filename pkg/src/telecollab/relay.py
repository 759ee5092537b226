"""Stream relay: fans synthetic frame streams out to subscribers.

Sources push strictly sequenced frames; the relay delivers them to unicast
subscribers and multicast groups through bounded per-client channels.  When a
subscriber stalls, its oldest queued frames are dropped (freshness beats
completeness) and the drop is accounted, so delivered + dropped always equals
frames sent since subscription once the channel drains.  The relay also owns
the latency probe: a PING rides the same channel as the frames it protects.
"""

from __future__ import annotations

import base64
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .runtime import LatencySample

DEFAULT_QUEUE_BOUND = 32
DEFAULT_MAX_FRAME_BYTES = 256 * 1024
PING_TIMEOUT_S = 2.0


class RelayError(Exception):
    pass


class SourceConflictError(RelayError):
    pass


class UnknownSourceError(RelayError):
    pass


class SourceProtocolError(RelayError):
    """Out-of-order frame_seq; the source is flagged."""


@dataclass(frozen=True)
class Frame:
    source_id: str
    frame_seq: int
    ts_ms: int
    payload: bytes

    def to_body(self) -> dict:
        return {"source_id": self.source_id, "frame_seq": self.frame_seq,
                "ts_ms": self.ts_ms,
                "payload_b64": base64.b64encode(self.payload).decode("ascii")}

    @classmethod
    def from_body(cls, body: dict) -> "Frame":
        return cls(body["source_id"], body["frame_seq"], body["ts_ms"],
                   base64.b64decode(body["payload_b64"]))


def make_frame(source_id: str, frame_seq: int, ts_ms: int,
               size: int = 512) -> Frame:
    """Synthetic stand-in for an encoded video frame: a header embedding the
    sequence and timestamp, padded with a repeating pattern to `size` bytes."""
    header = struct.pack(">QQI", frame_seq, ts_ms, size)
    pattern = (source_id.encode() or b"x") * (size // max(len(source_id), 1) + 1)
    payload = (header + pattern)[:max(size, len(header))]
    return Frame(source_id, frame_seq, ts_ms, payload)


@dataclass
class Subscription:
    client_id: str
    source_id: str
    mode: str                      # UNICAST | MULTICAST_GROUP
    group_id: Optional[str] = None


@dataclass
class _SourceStats:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0


class SubscriberChannel:
    """Bounded drop-oldest queue carrying frames and latency pings for one
    client.  The relay never blocks on it."""

    def __init__(self, client_id: str, bound: int = DEFAULT_QUEUE_BOUND):
        self.client_id = client_id
        self.bound = bound
        self._items: deque = deque()
        self._cond = threading.Condition()
        self.stats: dict[str, _SourceStats] = {}

    def _stats(self, source_id: str) -> _SourceStats:
        return self.stats.setdefault(source_id, _SourceStats())

    def deliver(self, item) -> None:
        kind, value = item
        with self._cond:
            if kind == "frame":
                self._stats(value.source_id).sent += 1
            if len(self._items) >= self.bound:
                old_kind, old_value = self._items.popleft()
                if old_kind == "frame":
                    self._stats(old_value.source_id).dropped += 1
            self._items.append(item)
            self._cond.notify()

    def pop(self, timeout: float | None = None):
        """Take the next item, or None on timeout.  Popping a frame counts it
        as delivered."""
        with self._cond:
            if not self._items and timeout is not None:
                self._cond.wait(timeout)
            if not self._items:
                return None
            kind, value = self._items.popleft()
            if kind == "frame":
                self._stats(value.source_id).delivered += 1
            return kind, value

    def drain_frames(self) -> list[Frame]:
        out = []
        while True:
            item = self.pop(timeout=0)
            if item is None:
                return out
            kind, value = item
            if kind == "frame":
                out.append(value)

    def accounting(self, source_id: str) -> tuple[int, int, int]:
        st = self._stats(source_id)
        return st.sent, st.delivered, st.dropped


class RelayCore:
    def __init__(self, queue_bound: int = DEFAULT_QUEUE_BOUND,
                 max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES):
        self.queue_bound = queue_bound
        self.max_frame_bytes = max_frame_bytes
        self._lock = threading.Lock()
        self._sources: dict[str, dict] = {}
        self._channels: dict[str, SubscriberChannel] = {}
        self._shims: dict[str, object] = {}
        self._unicast: dict[str, list[str]] = {}       # source -> client ids
        self._groups: dict[str, dict[str, list[str]]] = {}  # source -> group -> members
        self._pings: dict[int, dict] = {}
        self._ping_nonce = 0
        self.error_log: list[dict] = []
        self.flagged_sources: set[str] = set()
        self.latency_listeners: list = []

    # -- registration --------------------------------------------------------

    def register_source(self, source_id: str, nominal_rate: float) -> None:
        with self._lock:
            if source_id in self._sources:
                raise SourceConflictError(
                    f"source {source_id!r} already registered")
            self._sources[source_id] = {"nominal_rate": nominal_rate,
                                        "last_seq": 0}
            self._unicast[source_id] = []
            self._groups[source_id] = {}

    def connect_client(self, client_id: str,
                       bound: int | None = None,
                       shim=None) -> SubscriberChannel:
        """Create (or return) the client's delivery channel.  An optional shim
        wraps deliveries, e.g. to inject latency."""
        with self._lock:
            channel = self._channels.get(client_id)
            if channel is None:
                channel = SubscriberChannel(client_id,
                                            bound or self.queue_bound)
                self._channels[client_id] = channel
            if shim is not None:
                self._shims[client_id] = shim
            return channel

    def subscribe(self, client_id: str, source_id: str, mode: str,
                  group_id: str | None = None) -> Subscription:
        with self._lock:
            if source_id not in self._sources:
                raise UnknownSourceError(f"unknown source {source_id!r}")
            if client_id not in self._channels:
                raise RelayError(f"client {client_id!r} not connected")
            if mode == "MULTICAST_GROUP":
                if group_id is None:
                    raise RelayError("MULTICAST_GROUP requires group_id")
                members = self._groups[source_id].setdefault(group_id, [])
                if client_id not in members:
                    members.append(client_id)
            elif mode == "UNICAST":
                if client_id not in self._unicast[source_id]:
                    self._unicast[source_id].append(client_id)
            else:
                raise RelayError(f"unknown mode {mode!r}")
            return Subscription(client_id, source_id, mode, group_id)

    def unsubscribe(self, client_id: str, source_id: str) -> None:
        with self._lock:
            if client_id in self._unicast.get(source_id, []):
                self._unicast[source_id].remove(client_id)
            for members in self._groups.get(source_id, {}).values():
                if client_id in members:
                    members.remove(client_id)

    def unsubscribe_all(self, client_id: str) -> None:
        with self._lock:
            for source_id in self._sources:
                if client_id in self._unicast[source_id]:
                    self._unicast[source_id].remove(client_id)
                for members in self._groups[source_id].values():
                    if client_id in members:
                        members.remove(client_id)

    def subscriber_count(self, source_id: str) -> int:
        with self._lock:
            seen = list(self._unicast.get(source_id, []))
            for members in self._groups.get(source_id, {}).values():
                seen.extend(members)
            return len(seen)

    # -- frame path ------------------------------------------------------------

    def push_frame(self, frame: Frame) -> int:
        """Deliver one frame to all current subscribers; returns the count."""
        if len(frame.payload) > self.max_frame_bytes:
            raise RelayError(
                f"frame payload {len(frame.payload)} exceeds "
                f"{self.max_frame_bytes} bytes")
        with self._lock:
            source = self._sources.get(frame.source_id)
            if source is None:
                self.error_log.append({"error": "unregistered_source",
                                       "source_id": frame.source_id})
                return 0
            if frame.frame_seq != source["last_seq"] + 1:
                self.flagged_sources.add(frame.source_id)
                self.error_log.append({
                    "error": "out_of_order", "source_id": frame.source_id,
                    "expected": source["last_seq"] + 1,
                    "got": frame.frame_seq})
                raise SourceProtocolError(
                    f"source {frame.source_id!r} sent frame_seq "
                    f"{frame.frame_seq}, expected {source['last_seq'] + 1}")
            source["last_seq"] = frame.frame_seq
            targets = list(self._unicast[frame.source_id])
            for members in self._groups[frame.source_id].values():
                targets.extend(members)
            deliveries = [(self._channels[cid], self._shims.get(cid))
                          for cid in targets]
        for channel, shim in deliveries:
            if shim is not None:
                shim.deliver(channel, ("frame", frame))
            else:
                channel.deliver(("frame", frame))
        return len(deliveries)

    # -- latency probe ----------------------------------------------------------

    def measure_latency(self, client_id: str,
                        timeout_s: float = PING_TIMEOUT_S) -> LatencySample:
        """Round-trip probe over the client's frame channel."""
        with self._lock:
            channel = self._channels.get(client_id)
            if channel is None:
                raise RelayError(f"client {client_id!r} not connected")
            shim = self._shims.get(client_id)
            self._ping_nonce += 1
            nonce = self._ping_nonce
            record = {"event": threading.Event(), "t0": time.monotonic()}
            self._pings[nonce] = record
        if shim is not None:
            shim.deliver(channel, ("ping", nonce))
        else:
            channel.deliver(("ping", nonce))
        ok = record["event"].wait(timeout_s)
        with self._lock:
            self._pings.pop(nonce, None)
        if not ok:
            sample = LatencySample(client_id, timeout_s * 1000.0,
                                   int(time.time() * 1000), flagged=True)
        else:
            rtt_ms = (record["t1"] - record["t0"]) * 1000.0
            sample = LatencySample(client_id, rtt_ms, int(time.time() * 1000))
        for listener in self.latency_listeners:
            listener(sample)
        return sample

    def pong(self, client_id: str, nonce: int) -> None:
        with self._lock:
            record = self._pings.get(nonce)
            if record is not None:
                record["t1"] = time.monotonic()
                record["event"].set()


class FrameSource:
    """Background generator pushing frames at a nominal rate."""

    def __init__(self, relay: RelayCore, source_id: str, rate_hz: float = 15.0,
                 frame_bytes: int = 512):
        self.relay = relay
        self.source_id = source_id
        self.rate_hz = rate_hz
        self.frame_bytes = frame_bytes
        self._seq = 0
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)
        relay.register_source(source_id, rate_hz)

    def push_one(self) -> int:
        self._seq += 1
        frame = make_frame(self.source_id, self._seq,
                           int(time.time() * 1000), self.frame_bytes)
        return self.relay.push_frame(frame)

    def start(self) -> "FrameSource":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join(timeout=2.0)

    def _run(self) -> None:
        period = 1.0 / self.rate_hz
        while not self._stop.is_set():
            self.push_one()
            time.sleep(period)
