"""Scripted multi-client scenarios: the headless operator harness.

A scenario file declares clients (each with an action script), an optional
injected-latency profile, and a list of named assertions.  The runner spawns
the full in-process stack, plays every client script, waits for quiescence,
and audits the recorded logs: convergence of every client's world model with
the server, per-object ordering, lock exclusion, robot command provenance,
broadcast gap freedom, and the degradation signal trace.
"""

from __future__ import annotations

import collections
import json
import random
import threading
import time
from dataclasses import dataclass, field

from . import xmlutil
from .kinematics import JointLimitError
from .session import SessionCore, SessionError, WorldSnapshot
from .stack import LocalStack, TrajectoryUnavailableError
from .transport import LatencyProfile, LatencyShim
from .wire import Envelope


class ScenarioError(Exception):
    pass


KNOWN_ACTIONS = ("join", "update_phantom", "lock", "release", "validate",
                 "trajectory", "wait", "disconnect", "hot_add")

KNOWN_ASSERTS = ("convergence", "ordering", "lock_exclusion", "provenance",
                 "no_gaps", "degradation_trace", "robot_commands",
                 "exactly_one_grant")


@dataclass
class Action:
    kind: str
    attrs: dict = field(default_factory=dict)


@dataclass
class ClientScript:
    user_id: str
    platform: str
    actions: list[Action]


@dataclass
class Scenario:
    name: str
    seed: int
    clients: list[ClientScript]
    assertions: list[dict]
    latency_steps: list[tuple[float, float]] = field(default_factory=list)
    cameras: int = 5
    queue_bound: int = 32


class ScriptedClient:
    """One headless user: drives the session core and mirrors the world.

    Broadcast envelopes land in an inbox deque; pump() applies them to the
    local world model exactly in arrival order, which is world_seq order by
    the server's single-writer discipline.
    """

    def __init__(self, stack: LocalStack, user_id: str, platform: str = "WEB"):
        self.stack = stack
        self.user_id = user_id
        self.platform = platform
        self.session_id = None
        self.log: list[Envelope] = []
        self._inbox = collections.deque()
        self.objects: dict[str, dict] = {}
        self.world_seq = 0
        self.users: list[tuple[str, str]] = []
        self.connected = False

    # -- actions ---------------------------------------------------------------

    def join(self) -> None:
        self.session_id, _ = self.stack.session.join_session(
            self.user_id, self.platform, self._inbox.append)
        self.connected = True
        self.pump()

    def update(self, q) -> int:
        return self.stack.session.update_phantom(self.session_id, q)

    def lock(self, object_id: str) -> bool:
        return self.stack.session.acquire_lock(self.session_id,
                                               object_id)["granted"]

    def release(self, object_id: str) -> None:
        self.stack.session.release_lock(self.session_id, object_id)

    def validate(self) -> dict:
        return self.stack.session.validate_phantom(self.session_id)

    def trajectory(self, waypoints) -> dict:
        return self.stack.execute_trajectory(self.session_id, waypoints)

    def disconnect(self) -> None:
        self.stack.session.disconnect(self.session_id)
        self.connected = False

    # -- world model ---------------------------------------------------------------

    def pump(self) -> None:
        while self._inbox:
            env = self._inbox.popleft()
            self.log.append(env)
            self._apply(env)

    def _apply(self, env: Envelope) -> None:
        body = env.body
        if env.msg_type == "SNAPSHOT":
            self.objects = {o["object_id"]: dict(o) for o in body["objects"]}
            self.world_seq = body["world_seq"]
            self.users = [(u["user_id"], u["platform"])
                          for u in body["connected_users"]]
        elif env.msg_type == "PHANTOM_UPDATE":
            object_id = f"phantom:{body['user_id']}"
            record = self.objects.setdefault(object_id, {
                "object_id": object_id, "kind": "PHANTOM_ROBOT",
                "owner": None, "q": list(body["q"]), "world_seq": 0})
            record["q"] = list(body["q"])
            record["world_seq"] = body["world_seq"]
            self.world_seq = max(self.world_seq, body["world_seq"])
        elif env.msg_type == "LOCK_GRANT":
            record = self.objects.get(body["object_id"])
            if record is not None:
                record["owner"] = body["owner"]
                record["world_seq"] = body["world_seq"]
            self.world_seq = max(self.world_seq, body["world_seq"])
        elif env.msg_type == "JOIN":
            self.users.append((body["user_id"], body["platform"]))

    def model_snapshot(self) -> WorldSnapshot:
        from .session import ShareableObject
        objects = [ShareableObject.from_record(r)
                   for r in sorted(self.objects.values(),
                                   key=lambda r: r["object_id"])]
        return WorldSnapshot(self.world_seq, objects, list(self.users))


# ---------------------------------------------------------------------------
# Scenario XML

def parse_scenario(text: str) -> Scenario:
    root = xmlutil.parse_xml(text)
    xmlutil.require_tag(root, "scenario")
    xmlutil.check_children(root, ("stack", "latency_profile", "client",
                                  "assert"))
    attrs = xmlutil.get_attrs(root, {"name": str}, {"seed": (int, 0)})
    cameras, queue_bound = 5, 32
    for stack_node in root.find_all("stack"):
        s = xmlutil.get_attrs(stack_node, {}, {"cameras": (int, 5),
                                               "queue_bound": (int, 32)})
        cameras, queue_bound = s["cameras"], s["queue_bound"]
    latency_steps = []
    for profile in root.find_all("latency_profile"):
        xmlutil.check_children(profile, ("step",))
        for step in profile.find_all("step"):
            s = xmlutil.get_attrs(step, {"t_ms": float, "delay_ms": float})
            latency_steps.append((s["t_ms"], s["delay_ms"]))
    clients = []
    user_ids = set()
    for client_node in root.find_all("client"):
        c = xmlutil.get_attrs(client_node, {"id": str},
                              {"platform": (str, "WEB")})
        if c["id"] in user_ids:
            raise ScenarioError(f"duplicate client id {c['id']!r}")
        user_ids.add(c["id"])
        actions = []
        for action_node in client_node.children:
            if action_node.tag not in KNOWN_ACTIONS:
                raise ScenarioError(
                    f"unknown action <{action_node.tag}> at line "
                    f"{action_node.line}")
            actions.append(Action(action_node.tag, dict(action_node.attrs)))
        clients.append(ClientScript(c["id"], c["platform"], actions))
    assertions = []
    for assert_node in root.find_all("assert"):
        kind = assert_node.attrs.get("kind")
        if kind not in KNOWN_ASSERTS:
            raise ScenarioError(
                f"unknown assertion {kind!r} at line {assert_node.line}")
        assertions.append(dict(assert_node.attrs))
    return Scenario(attrs["name"], attrs["seed"], clients, assertions,
                    latency_steps, cameras, queue_bound)


# ---------------------------------------------------------------------------
# Audits

def audit_convergence(stack: LocalStack, clients: list[ScriptedClient]) -> str:
    server = stack.session.snapshot()
    for client in clients:
        if not client.connected:
            continue
        client.pump()
        model = client.model_snapshot()
        if model.canonical() != server.canonical():
            return (f"client {client.user_id} diverged: "
                    f"{model.canonical()[:160]} != {server.canonical()[:160]}")
        if model.world_seq != server.world_seq:
            return f"client {client.user_id} world_seq mismatch"
        if sorted(model.connected_users) != sorted(server.connected_users):
            return f"client {client.user_id} user list mismatch"
    return ""


def audit_ordering(clients: list[ScriptedClient]) -> str:
    for client in clients:
        client.pump()
        per_object: dict[str, list[int]] = {}
        for env in client.log:
            if env.msg_type == "PHANTOM_UPDATE":
                per_object.setdefault(
                    f"phantom:{env.body['user_id']}", []).append(
                        env.body["world_seq"])
            elif env.msg_type == "LOCK_GRANT":
                per_object.setdefault(env.body["object_id"], []).append(
                    env.body["world_seq"])
        for object_id, seqs in per_object.items():
            for a, b in zip(seqs, seqs[1:]):
                if b <= a:
                    return (f"client {client.user_id} saw {object_id} "
                            f"world_seq go {a} -> {b}")
    return ""


def audit_lock_exclusion(core: SessionCore) -> str:
    """Replay the lock event log: grants only when free or reentrant, at most
    one ownership change per epoch, releases only by the owner."""
    owners: dict[str, str | None] = {}
    epoch_requesters: dict[str, set] = {}
    for event in core.lock_events:
        object_id = event["object_id"]
        owner = owners.get(object_id)
        if event["event"] == "req":
            epoch_requesters.setdefault(object_id, set()).add(event["user"])
        elif event["event"] == "grant":
            if owner is not None and owner != event["user"]:
                return (f"grant of {object_id} to {event['user']} while "
                        f"owned by {owner}")
            owners[object_id] = event["user"]
        elif event["event"] == "deny":
            if owner is None:
                return f"deny of free object {object_id}"
        elif event["event"] == "release":
            if owner != event["user"]:
                return (f"release of {object_id} by {event['user']} "
                        f"but owner is {owner}")
            owners[object_id] = None
            epoch_requesters[object_id] = set()
    return ""


def audit_exactly_one_grant(core: SessionCore, object_id: str) -> str:
    """Every contested epoch (>= 2 distinct requesters while unowned or owned)
    must contain exactly one ownership-taking grant."""
    owner = None
    requesters: set = set()
    grants = 0
    epochs = 0
    for event in core.lock_events:
        if event["object_id"] != object_id:
            continue
        if event["event"] == "req":
            requesters.add(event["user"])
        elif event["event"] == "grant":
            if owner is None:
                grants += 1
                epochs += 1
                owner = event["user"]
            elif owner != event["user"]:
                return f"ownership stolen on {object_id}"
        elif event["event"] == "release":
            if len(requesters) >= 2 and grants != 1:
                return (f"contested epoch on {object_id} had {grants} "
                        "ownership grants")
            owner = None
            requesters = set()
            grants = 0
    return ""


def audit_provenance(stack: LocalStack) -> str:
    executed = sorted(e["command_id"] for e in stack.sim.executed_log)
    validated = [r["command_id"] for r in stack.session.validation_receipts]
    trajectories = [r["command_id"] for r in stack.trajectory_receipts()]
    still_running = stack.sim.state().executing
    expected = sorted(validated + trajectories)
    if still_running is not None:
        expected = sorted(c for c in expected if c != still_running[0])
    if executed != expected:
        return (f"executed commands {executed} != receipts {expected}")
    return ""


def audit_no_gaps(clients: list[ScriptedClient]) -> str:
    for client in clients:
        client.pump()
        seqs = [env.seq for env in client.log if env.sender == "server"]
        for a, b in zip(seqs, seqs[1:]):
            if b != a + 1:
                return (f"client {client.user_id} server seq gap: "
                        f"{a} -> {b}")
    return ""


def audit_degradation_trace(stack: LocalStack, expect: str) -> str:
    expected = [int(v) for v in expect.split()]
    got = [degree for _, degree in stack.core.safe_trace()]
    if got != expected:
        return f"SAFE trace {got} != expected {expected}"
    return ""


def audit_robot_commands(stack: LocalStack, count: str) -> str:
    executed = len(stack.sim.executed_log)
    if executed != int(count):
        return f"robot executed {executed} commands, expected {count}"
    return ""


# ---------------------------------------------------------------------------
# Runner

class ScenarioRunner:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        shim = None
        if scenario.latency_steps:
            shim = LatencyShim(LatencyProfile(scenario.latency_steps))
        self.stack = LocalStack(camera_count=scenario.cameras,
                                queue_bound=scenario.queue_bound, shim=shim)
        self.stack.load_default_app()
        self.clients: dict[str, ScriptedClient] = {}
        self.errors: list[str] = []

    def inject_latency(self, steps: list[tuple[float, float]]) -> None:
        profile = LatencyProfile(steps)  # validates monotone times
        if self.stack.shim is None:
            self.stack.shim = LatencyShim(profile)
        else:
            self.stack.shim.set_profile(profile)

    def _run_client(self, script: ClientScript, seed: int) -> None:
        rng = random.Random(seed)
        client = ScriptedClient(self.stack, script.user_id, script.platform)
        self.clients[script.user_id] = client
        try:
            for action in script.actions:
                self._apply_action(client, action, rng)
        except (SessionError, JointLimitError, ScenarioError,
                TrajectoryUnavailableError) as exc:
            self.errors.append(f"{script.user_id}: {exc}")

    def _apply_action(self, client: ScriptedClient, action: Action,
                      rng: random.Random) -> None:
        attrs = action.attrs
        if action.kind == "join":
            client.join()
        elif action.kind == "update_phantom":
            repeat = int(attrs.get("repeat", "1"))
            rate = float(attrs.get("rate_hz", "0"))
            for i in range(repeat):
                if "q" in attrs:
                    q = xmlutil.parse_floats(attrs["q"], 6)
                else:
                    q = [rng.uniform(-1.0, 1.0) for _ in range(6)]
                client.update(q)
                if rate > 0:
                    time.sleep(1.0 / rate)
        elif action.kind == "lock":
            client.lock(attrs["object"])
        elif action.kind == "release":
            client.release(attrs["object"])
        elif action.kind == "validate":
            client.validate()
        elif action.kind == "trajectory":
            waypoints = [xmlutil.parse_floats(part, 6)
                         for part in attrs["waypoints"].split(";")]
            client.trajectory(waypoints)
        elif action.kind == "wait":
            time.sleep(float(attrs["ms"]) / 1000.0)
        elif action.kind == "disconnect":
            client.disconnect()
        elif action.kind == "hot_add":
            if attrs.get("module", "trajectory") != "trajectory":
                raise ScenarioError(
                    f"unknown hot-add module {attrs.get('module')!r}")
            self.stack.hot_add_trajectory()

    def run(self) -> list[dict]:
        threads = [threading.Thread(
            target=self._run_client, args=(script, self.scenario.seed + i),
            daemon=True)
            for i, script in enumerate(self.scenario.clients)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=120)
        self.stack.quiesce_robot()
        for client in self.clients.values():
            client.pump()
        report = []
        for spec in self.scenario.assertions:
            detail = self._evaluate(spec)
            report.append({"assertion": spec["kind"],
                           "passed": detail == "",
                           "detail": detail or "ok"})
        if self.errors:
            report.append({"assertion": "script_errors", "passed": False,
                           "detail": "; ".join(self.errors)})
        self.stack.stop()
        return report

    def _evaluate(self, spec: dict) -> str:
        kind = spec["kind"]
        clients = list(self.clients.values())
        if kind == "convergence":
            return audit_convergence(self.stack, clients)
        if kind == "ordering":
            return audit_ordering(clients)
        if kind == "lock_exclusion":
            return audit_lock_exclusion(self.stack.session)
        if kind == "exactly_one_grant":
            return audit_exactly_one_grant(self.stack.session, spec["object"])
        if kind == "provenance":
            return audit_provenance(self.stack)
        if kind == "no_gaps":
            return audit_no_gaps(clients)
        if kind == "degradation_trace":
            return audit_degradation_trace(self.stack, spec["expect"])
        if kind == "robot_commands":
            return audit_robot_commands(self.stack, spec["count"])
        raise ScenarioError(f"unknown assertion {kind!r}")


# ---------------------------------------------------------------------------
# Socket-backed client (used by teleop-run --spawn-local and the net tests)

class WireClient:
    """ScriptedClient peer that reaches the session server over TCP."""

    def __init__(self, host: str, port: int, user_id: str,
                 platform: str = "WEB"):
        from .transport import connect_endpoint
        from .wire import PROTOCOL_VERSION
        self.user_id = user_id
        self.platform = platform
        self.session_id = None
        self.log: list[Envelope] = []
        self.objects: dict[str, dict] = {}
        self.world_seq = 0
        self.users: list[tuple[str, str]] = []
        self.connected = False
        self._endpoint = connect_endpoint(host, port, name=user_id)
        self._seq = 0
        self._version = PROTOCOL_VERSION
        self._cond = threading.Condition()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _send(self, msg_type: str, body: dict) -> None:
        self._seq += 1
        self._endpoint.send(Envelope(self._version, self._seq, msg_type,
                                     self.user_id, int(time.time() * 1000),
                                     body))

    def _read_loop(self) -> None:
        try:
            for env in self._endpoint.recv_envelopes():
                with self._cond:
                    self.log.append(env)
                    ScriptedClient._apply(self, env)
                    self._cond.notify_all()
        except Exception:
            pass

    def _wait_for(self, predicate, start: int = 0, timeout: float = 5.0):
        """Block until predicate(index, envelope) matches at index >= start."""
        deadline = time.monotonic() + timeout
        with self._cond:
            scanned = start
            while True:
                for i in range(scanned, len(self.log)):
                    if predicate(i, self.log[i]):
                        return self.log[i]
                scanned = len(self.log)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ScenarioError(
                        f"{self.user_id}: timed out waiting for reply")
                self._cond.wait(remaining)

    def pump(self) -> None:
        pass  # the reader thread applies envelopes as they arrive

    def join(self) -> None:
        self._send("JOIN", {"user_id": self.user_id,
                            "platform": self.platform})
        reply = self._wait_for(
            lambda i, e: (e.msg_type == "SNAPSHOT" and "session_id" in e.body)
            or e.msg_type == "ERROR")
        if reply.msg_type == "ERROR":
            raise SessionError(reply.body["detail"])
        self.session_id = reply.body["session_id"]
        self.connected = True

    def update(self, q) -> None:
        self._send("PHANTOM_UPDATE", {"q": [float(v) for v in q]})

    def lock(self, object_id: str) -> bool:
        mark = len(self.log)
        self._send("LOCK_REQ", {"object_id": object_id})
        reply = self._wait_for(
            lambda i, e: (e.msg_type == "LOCK_GRANT"
                          and e.body["object_id"] == object_id
                          and e.body["owner"] == self.user_id)
            or (e.msg_type == "LOCK_DENY"
                and e.body["object_id"] == object_id)
            or e.msg_type == "ERROR", start=mark)
        return reply.msg_type == "LOCK_GRANT"

    def release(self, object_id: str) -> None:
        self._send("LOCK_REQ", {"object_id": object_id, "release": True})

    def validate(self) -> dict:
        mark = len(self.log)
        self._send("VALIDATE", {})
        reply = self._wait_for(
            lambda i, e: e.msg_type in ("VALIDATE", "ERROR"), start=mark)
        if reply.msg_type == "ERROR":
            raise SessionError(reply.body["detail"])
        return dict(reply.body)

    def wait_settled(self, timeout: float = 2.0) -> None:
        """Wait until no new envelope has arrived for a short beat."""
        quiet_needed = 0.2
        deadline = time.monotonic() + timeout
        last_len = len(self.log)
        last_change = time.monotonic()
        while time.monotonic() < deadline:
            time.sleep(0.02)
            if len(self.log) != last_len:
                last_len = len(self.log)
                last_change = time.monotonic()
            elif time.monotonic() - last_change > quiet_needed:
                return

    def disconnect(self) -> None:
        self.connected = False
        self._endpoint.close()

    model_snapshot = ScriptedClient.model_snapshot
    _apply = ScriptedClient._apply


def run_scenario(path: str, seed: int | None = None,
                 report_path: str | None = None) -> tuple[list[dict], bool]:
    """Execute a scenario file; returns (report, all_passed)."""
    with open(path, encoding="utf-8") as fh:
        scenario = parse_scenario(fh.read())
    if seed is not None:
        scenario.seed = seed
    runner = ScenarioRunner(scenario)
    report = runner.run()
    passed = all(r["passed"] for r in report)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            for record in report:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return report, passed
