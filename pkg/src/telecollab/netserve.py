"""TCP shells: session server, robot server, and relay server processes.

Each shell binds one core object to stream sockets speaking the framed wire
protocol.  The session server admits users (JOIN role user) and the robot
server (JOIN role robot); the relay serves frame subscribers and accepts
frames from pre-registered source connections.
"""

from __future__ import annotations

import itertools
import logging
import socket
import threading
import time

from .kinematics import JointLimitError
from .relay import Frame, RelayCore
from .robot import RobotSim
from .session import SessionCore, SessionError
from .transport import SocketEndpoint
from .wire import Envelope, EnvelopeSender, PROTOCOL_VERSION, WireError

log = logging.getLogger(__name__)


def _now_ms() -> int:
    return int(time.time() * 1000)


class _Acceptor:
    """Listening socket + accept loop shared by the servers."""

    def __init__(self, host: str, port: int, handler):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(32)
        self.address = self._sock.getsockname()
        self._handler = handler
        self._stopped = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._stopped.set()
        try:
            self._sock.close()
        except OSError:
            pass

    def _run(self):
        while not self._stopped.is_set():
            try:
                conn, addr = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._handler, args=(conn, addr),
                             daemon=True).start()


class WireRobotLink:
    """Session-side view of a robot server reached over a socket.

    Submissions are serialized; each ROBOT_CMD is answered by an echo carrying
    the robot-assigned command id and status.  The robot streams ROBOT_STATE,
    which keeps current_q fresh for joins.
    """

    def __init__(self, timeout_s: float = 2.0):
        self.timeout_s = timeout_s
        self._endpoint: SocketEndpoint | None = None
        self._submit_lock = threading.Lock()
        self._reply: dict | None = None
        self._reply_event = threading.Event()
        self._last_q: list[float] | None = None
        self._req_counter = itertools.count(1)
        self._seq = itertools.count(1)

    def attach(self, endpoint: SocketEndpoint) -> None:
        self._endpoint = endpoint

    def detach(self) -> None:
        self._endpoint = None

    def connected(self) -> bool:
        return self._endpoint is not None

    def on_robot_state(self, body: dict) -> None:
        self._last_q = list(body["q"])

    def on_cmd_echo(self, body: dict) -> None:
        self._reply = body
        self._reply_event.set()

    def current_q(self) -> list[float]:
        return list(self._last_q) if self._last_q else [0.0] * 6

    def _roundtrip(self, body: dict) -> tuple[str, str]:
        endpoint = self._endpoint
        if endpoint is None:
            raise SessionError("robot server not connected")
        with self._submit_lock:
            self._reply = None
            self._reply_event.clear()
            endpoint.send(Envelope(PROTOCOL_VERSION, next(self._seq),
                                   "ROBOT_CMD", "session", _now_ms(), body))
            if not self._reply_event.wait(self.timeout_s):
                raise SessionError("robot server did not acknowledge")
            reply = self._reply
        return reply["status"], reply["command_id"]

    def submit_joint(self, q, origin: str) -> tuple[str, str]:
        return self._roundtrip({
            "command_id": f"req-{next(self._req_counter)}", "kind": "joint",
            "q": [float(v) for v in q], "origin": origin})

    def submit_trajectory(self, waypoints, origin: str) -> tuple[str, str]:
        return self._roundtrip({
            "command_id": f"req-{next(self._req_counter)}",
            "kind": "trajectory",
            "waypoints": [[float(v) for v in w] for w in waypoints],
            "origin": origin})


class SessionServer:
    """Framed-socket front end for a SessionCore.

    trajectory_handler, when set by the owning application, services
    client-issued trajectory programs (the trajectory module's wire path).
    """

    def __init__(self, core: SessionCore, host: str = "127.0.0.1",
                 port: int = 0, trajectory_handler=None):
        self.core = core
        self.robot_link = WireRobotLink()
        self.trajectory_handler = trajectory_handler
        if core.robot_link is None:
            core.robot_link = self.robot_link
        self._acceptor = _Acceptor(host, port, self._serve)

    @property
    def address(self) -> tuple[str, int]:
        return self._acceptor.address

    def start(self) -> "SessionServer":
        self._acceptor.start()
        return self

    def stop(self) -> None:
        self._acceptor.stop()

    def _serve(self, conn: socket.socket, addr) -> None:
        endpoint = SocketEndpoint(conn, f"{addr[0]}:{addr[1]}")
        sender = EnvelopeSender(endpoint.send)
        session_id = None

        def send_error(code: str, detail: str) -> None:
            sender.send("ERROR", {"code": code, "detail": detail})

        try:
            for env in endpoint.recv_envelopes():
                if env.msg_type == "JOIN":
                    role = env.body.get("role", "user")
                    if role == "robot":
                        self.robot_link.attach(endpoint)
                        continue
                    try:
                        session_id, _ = self.core.join_session(
                            env.body["user_id"], env.body["platform"],
                            sender)
                    except SessionError as exc:
                        send_error(exc.code, str(exc))
                elif env.msg_type == "ROBOT_STATE":
                    # every state (periodic and completion) reaches clients:
                    # the console overlay pairs them to frames by timestamp
                    self.robot_link.on_robot_state(env.body)
                    self.core.on_robot_event(env.body)
                elif (env.msg_type == "ROBOT_CMD"
                      and self.robot_link._endpoint is endpoint):
                    # echo from the robot server answering a submission
                    self.robot_link.on_cmd_echo(env.body)
                elif env.msg_type == "ROBOT_CMD" and session_id is not None:
                    # operator-issued trajectory program; joint commands may
                    # only ever originate from validation
                    if (env.body["kind"] != "trajectory"
                            or self.trajectory_handler is None):
                        send_error("protocol",
                                   "only trajectory programs are accepted "
                                   "from operators")
                        continue
                    try:
                        receipt = self.trajectory_handler(
                            session_id, env.body["waypoints"])
                        echo = dict(env.body)
                        echo.update(status=receipt["status"],
                                    command_id=receipt["command_id"])
                        self.core.send_to(session_id, "ROBOT_CMD", echo)
                    except Exception as exc:
                        send_error("trajectory", str(exc))
                elif session_id is None:
                    send_error("protocol", "JOIN required first")
                elif env.msg_type == "PHANTOM_UPDATE":
                    try:
                        self.core.update_phantom(session_id, env.body["q"])
                    except JointLimitError as exc:
                        send_error("joint_limit", str(exc))
                    except SessionError as exc:
                        send_error(exc.code, str(exc))
                elif env.msg_type == "LOCK_REQ":
                    try:
                        if env.body.get("release"):
                            self.core.release_lock(session_id,
                                                   env.body["object_id"])
                        else:
                            self.core.acquire_lock(session_id,
                                                   env.body["object_id"])
                    except SessionError as exc:
                        send_error(exc.code, str(exc))
                elif env.msg_type == "VALIDATE":
                    try:
                        receipt = self.core.validate_phantom(session_id)
                        self.core.send_to(session_id, "VALIDATE", {
                            "status": receipt["status"],
                            "command_id": receipt["command_id"]})
                    except SessionError as exc:
                        send_error(exc.code, str(exc))
                elif env.msg_type == "PING":
                    sender.send("PONG", dict(env.body))
                else:
                    send_error("protocol",
                               f"unexpected {env.msg_type} on session wire")
        except WireError as exc:
            log.warning("connection %s: %s", endpoint.name, exc)
        finally:
            if self.robot_link._endpoint is endpoint:
                self.robot_link.detach()
            if session_id is not None:
                self.core.disconnect(session_id)
            endpoint.close()


class RobotServer:
    """Connects a RobotSim to a session server and executes its commands."""

    def __init__(self, sim: RobotSim, endpoint: SocketEndpoint):
        self.sim = sim
        self.endpoint = endpoint
        self._seq = itertools.count(1)
        self._stopped = threading.Event()
        sim.add_listener(self._on_event)

    def hello(self) -> None:
        self._send("JOIN", {"user_id": "robot-server", "platform": "WEB",
                            "role": "robot"})
        self._send("ROBOT_STATE", self.sim.state_body())

    def start_state_stream(self, period_s: float = 0.1) -> None:
        """Periodically publish the robot state for live client overlays."""
        def loop():
            while not self._stopped.is_set():
                self._send("ROBOT_STATE", self.sim.state_body())
                time.sleep(period_s)
        threading.Thread(target=loop, daemon=True).start()

    def _send(self, msg_type: str, body: dict) -> None:
        self.endpoint.send(Envelope(PROTOCOL_VERSION, next(self._seq),
                                    msg_type, "robot-server", _now_ms(), body))

    def _on_event(self, body: dict) -> None:
        self._send("ROBOT_STATE", body)

    def run(self) -> None:
        """Consume commands until the session server hangs up."""
        try:
            self._run()
        finally:
            self._stopped.set()

    def _run(self) -> None:
        for env in self.endpoint.recv_envelopes():
            if env.msg_type != "ROBOT_CMD":
                continue
            body = env.body
            try:
                if body["kind"] == "joint":
                    status, command_id = self.sim.submit_joint(
                        body["q"], body.get("origin", "unknown"))
                else:
                    status, command_id = self.sim.submit_trajectory(
                        body["waypoints"], body.get("origin", "unknown"))
                echo = dict(body)
                echo.update(status=status, command_id=command_id)
            except (JointLimitError, ValueError) as exc:
                echo = dict(body)
                echo.update(status="REJECTED", detail=str(exc))
            self._send("ROBOT_CMD", echo)


class RelayServer:
    """Socket front end for a RelayCore.

    Subscribers get one pump thread each, draining their bounded channel to
    the socket; sources are connections pushing FRAME envelopes for ids that
    were registered at startup.
    """

    def __init__(self, core: RelayCore, host: str = "127.0.0.1",
                 port: int = 0):
        self.core = core
        self._client_counter = itertools.count(1)
        self._acceptor = _Acceptor(host, port, self._serve)

    @property
    def address(self) -> tuple[str, int]:
        return self._acceptor.address

    def start(self) -> "RelayServer":
        self._acceptor.start()
        return self

    def stop(self) -> None:
        self._acceptor.stop()

    def _pump(self, channel, sender: EnvelopeSender,
              stop: threading.Event) -> None:
        while not stop.is_set():
            item = channel.pop(timeout=0.2)
            if item is None:
                continue
            kind, value = item
            if kind == "frame":
                sender.send("FRAME", value.to_body())
            else:
                sender.send("PING", {"nonce": value})

    def _serve(self, conn: socket.socket, addr) -> None:
        endpoint = SocketEndpoint(conn, f"{addr[0]}:{addr[1]}")
        sender = EnvelopeSender(endpoint.send, sender="relay")
        client_id = f"client-{next(self._client_counter)}"
        stop = threading.Event()
        pump_started = False
        try:
            for env in endpoint.recv_envelopes():
                if env.msg_type == "SUBSCRIBE":
                    channel = self.core.connect_client(client_id)
                    if not pump_started:
                        threading.Thread(
                            target=self._pump,
                            args=(channel, sender, stop),
                            daemon=True).start()
                        pump_started = True
                    try:
                        if env.body.get("cancel"):
                            self.core.unsubscribe(client_id,
                                                  env.body["source_id"])
                        else:
                            self.core.subscribe(client_id,
                                                env.body["source_id"],
                                                env.body["mode"],
                                                env.body.get("group_id"))
                        ack = dict(env.body)
                        ack["status"] = "OK"
                        sender.send("SUBSCRIBE", ack)
                    except Exception as exc:
                        sender.send("ERROR", {"code": "subscribe",
                                              "detail": str(exc)})
                elif env.msg_type == "FRAME":
                    try:
                        self.core.push_frame(Frame.from_body(env.body))
                    except Exception as exc:
                        sender.send("ERROR", {"code": "source",
                                              "detail": str(exc)})
                elif env.msg_type == "PONG":
                    self.core.pong(client_id, env.body.get("nonce", 0))
                elif env.msg_type == "PING":
                    sender.send("PONG", dict(env.body))
        except WireError as exc:
            log.warning("relay connection %s: %s", endpoint.name, exc)
        finally:
            stop.set()
            self.core.unsubscribe_all(client_id)
            endpoint.close()
