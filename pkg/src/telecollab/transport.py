"""Transport plumbing: latency injection and framed socket endpoints.

The latency shim is an in-process stand-in for a bad network: every delivery
routed through it is held for the delay active at send time, with ordering
preserved per channel.  Socket endpoints wrap a stream connection with the
4-byte framing and a writer queue so that a slow peer never blocks a sender's
critical section.
"""

from __future__ import annotations

import heapq
import itertools
import queue
import socket
import threading
import time
from typing import Callable, Iterable, Optional

from .wire import Envelope, FrameDecoder, WireError, encode_frame


class ProfileError(Exception):
    pass


class LatencyProfile:
    """Step function of injected delay: [(t_ms, delay_ms), ...]."""

    def __init__(self, steps: Iterable[tuple[float, float]]):
        self.steps = [(float(t), float(d)) for t, d in steps]
        last = -1.0
        for t, _ in self.steps:
            if t <= last:
                raise ProfileError("profile times must increase strictly")
            last = t

    def delay_at(self, t_ms: float) -> float:
        delay = 0.0
        for t, d in self.steps:
            if t_ms >= t:
                delay = d
            else:
                break
        return delay


class LatencyShim:
    """Delays deliveries per the active profile step.

    deliver(channel, item) hands item to channel.deliver(item) after the
    injected delay; submit(fn) delays an arbitrary callable.  Deliveries stay
    ordered because the delay function is a step function sampled at send
    time and the dispatcher pops in (due time, send order).
    """

    def __init__(self, profile: LatencyProfile | None = None):
        self.profile = profile or LatencyProfile([(0.0, 0.0)])
        self._t0 = time.monotonic()
        self._heap: list = []
        self._counter = itertools.count()
        self._cond = threading.Condition()
        self._stopped = False
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def set_profile(self, profile: LatencyProfile) -> None:
        with self._cond:
            self.profile = profile
            self._t0 = time.monotonic()
            self._cond.notify()

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def deliver(self, channel, item) -> None:
        self.submit(lambda: channel.deliver(item))

    def submit(self, fn: Callable[[], None]) -> None:
        delay_ms = self.profile.delay_at(self.now_ms())
        due = time.monotonic() + delay_ms / 1000.0
        with self._cond:
            heapq.heappush(self._heap, (due, next(self._counter), fn))
            self._cond.notify()

    def close(self) -> None:
        with self._cond:
            self._stopped = True
            self._cond.notify()
        self._thread.join(timeout=2.0)

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._stopped and (
                        not self._heap
                        or self._heap[0][0] > time.monotonic()):
                    if self._heap:
                        timeout = max(self._heap[0][0] - time.monotonic(), 0)
                        self._cond.wait(timeout)
                    else:
                        self._cond.wait()
                if self._stopped:
                    return
                _, _, fn = heapq.heappop(self._heap)
            try:
                fn()
            except Exception:
                pass  # a dead receiver must not kill the dispatcher


class SocketEndpoint:
    """Framed envelope IO over a connected stream socket."""

    def __init__(self, sock: socket.socket, name: str = "peer"):
        self.sock = sock
        self.name = name
        self._decoder = FrameDecoder()
        self._outbound: queue.Queue = queue.Queue()
        self._closed = threading.Event()
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()

    def send(self, env: Envelope) -> None:
        if not self._closed.is_set():
            self._outbound.put(encode_frame(env))

    def _write_loop(self) -> None:
        while not self._closed.is_set():
            try:
                data = self._outbound.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                self.sock.sendall(data)
            except OSError:
                self.close()
                return

    def recv_envelopes(self):
        """Generator of inbound envelopes; ends when the peer hangs up."""
        while not self._closed.is_set():
            try:
                chunk = self.sock.recv(65536)
            except OSError:
                break
            if not chunk:
                break
            try:
                self._decoder.feed(chunk)
                yield from self._decoder.frames()
            except WireError:
                raise
        self.close()

    def close(self) -> None:
        if not self._closed.is_set():
            self._closed.set()
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self.sock.close()
            except OSError:
                pass


def connect_endpoint(host: str, port: int, name: str = "client",
                     timeout: float = 5.0) -> SocketEndpoint:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    return SocketEndpoint(sock, name)


def parse_hostport(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host:
        raise ValueError(f"expected HOST:PORT, got {value!r}")
    return host, int(port)
