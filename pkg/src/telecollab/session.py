"""Multi-user session server: the authoritative shared world.

All mutations (phantom moves, lock changes, joins, disconnects) are funneled
through one lock, which makes the world sequence a total order; broadcasts are
appended to per-client outboxes while the lock is held, so every client
observes updates in world_seq order.  Scene objects and per-user phantom
robots are the shareable state; the real robot is only ever touched through
validated commands forwarded to the robot link.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import xmlutil
from .kinematics import JointLimitError, RobotParams, check_limits, \
    default_robot_params
from .storage import FileStore
from .wire import Envelope, EnvelopeSender, PLATFORMS
from .xmlutil import Node

Outbox = Callable[[Envelope], None]


class SessionError(Exception):
    code = "session"


class DuplicateUserError(SessionError):
    code = "duplicate_user"


class UnknownSessionError(SessionError):
    code = "unknown_session"


class UnknownObjectError(SessionError):
    code = "unknown_object"


class LockOwnershipError(SessionError):
    code = "not_owner"


class RobotUnreachableError(SessionError):
    code = "robot_unreachable"


@dataclass
class ShareableObject:
    """A scene object or per-user phantom replicated to every client."""

    object_id: str
    kind: str                      # SCENE_OBJECT | PHANTOM_ROBOT
    pose: Any                      # pose dict, or 6-angle list for phantoms
    owner: Optional[str] = None
    world_seq: int = 0

    def to_record(self) -> dict:
        rec = {"object_id": self.object_id, "kind": self.kind,
               "owner": self.owner, "world_seq": self.world_seq}
        if self.kind == "SCENE_OBJECT":
            rec["pose"] = self.pose
        else:
            rec["q"] = [float(v) for v in self.pose]
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ShareableObject":
        pose = rec["pose"] if rec["kind"] == "SCENE_OBJECT" else rec["q"]
        return cls(rec["object_id"], rec["kind"], pose, rec["owner"],
                   rec["world_seq"])


@dataclass
class UserSession:
    user_id: str
    platform: str
    session_id: str
    phantom_id: str
    last_acked_world_seq: int = 0


@dataclass
class WorldSnapshot:
    world_seq: int
    objects: list[ShareableObject]
    connected_users: list[tuple[str, str]]

    def to_body(self, session_id: str | None = None,
                phantom_id: str | None = None) -> dict:
        body = {
            "world_seq": self.world_seq,
            "objects": [o.to_record() for o in self.objects],
            "connected_users": [
                {"user_id": u, "platform": p} for u, p in self.connected_users],
        }
        if session_id is not None:
            body["session_id"] = session_id
        if phantom_id is not None:
            body["phantom_id"] = phantom_id
        return body

    @classmethod
    def from_body(cls, body: dict) -> "WorldSnapshot":
        return cls(
            body["world_seq"],
            [ShareableObject.from_record(r) for r in body["objects"]],
            [(u["user_id"], u["platform"]) for u in body["connected_users"]],
        )

    def canonical(self) -> str:
        """Canonical serialization of the persistent world fields."""
        import json
        return json.dumps({"world_seq": self.world_seq,
                           "objects": [o.to_record() for o in self.objects]},
                          sort_keys=True, separators=(",", ":"))


@dataclass
class _Client:
    session: UserSession
    outbox: EnvelopeSender
    joined_at: int = 0


def _now_ms() -> int:
    return int(time.time() * 1000)


class SessionCore:
    """Authoritative world state plus connected-client bookkeeping."""

    def __init__(self, scene: list[ShareableObject] | None = None,
                 robot_link=None, store: FileStore | None = None,
                 robot_params: RobotParams | None = None):
        self.robot_link = robot_link
        self.robot_params = robot_params or default_robot_params()
        self.store = store
        self._lock = threading.RLock()
        self._objects: dict[str, ShareableObject] = {}
        self._world_seq = 0
        self._clients: dict[str, _Client] = {}     # session_id -> client
        self._users: dict[str, str] = {}           # user_id -> session_id
        self._join_counter = 0
        self.lock_events: list[dict] = []
        self.validation_receipts: list[dict] = []
        self.last_robot_state: dict | None = None
        if store is not None and store.exists():
            meta, records = store.read("world")
            self._world_seq = int(meta["world_seq"])
            for rec in records:
                obj = ShareableObject.from_record(rec)
                self._objects[obj.object_id] = obj
        elif scene:
            for obj in scene:
                self._objects[obj.object_id] = obj

    # -- envelope plumbing ---------------------------------------------------

    def _send(self, client: _Client, msg_type: str, body: dict) -> None:
        client.outbox.send(msg_type, body)

    def _broadcast(self, msg_type: str, body: dict,
                   exclude: str | None = None) -> None:
        for sid, client in self._clients.items():
            if sid != exclude:
                self._send(client, msg_type, body)

    def send_to(self, session_id: str, msg_type: str, body: dict) -> None:
        """Shell-originated traffic on a client's connection (receipts,
        errors); shares the connection's seq counter."""
        with self._lock:
            self._send(self._require_session(session_id), msg_type, body)

    def broadcast_system(self, msg_type: str, body: dict) -> None:
        """Fan a non-world event (module signals, reports) out to everyone."""
        with self._lock:
            self._broadcast(msg_type, body)

    def _require_session(self, session_id: str) -> _Client:
        client = self._clients.get(session_id)
        if client is None:
            raise UnknownSessionError(f"stale or unknown session {session_id}")
        return client

    def _bump(self, obj: ShareableObject) -> int:
        self._world_seq += 1
        obj.world_seq = self._world_seq
        return self._world_seq

    # -- operations ----------------------------------------------------------

    def join_session(self, user_id: str, platform: str,
                     outbox: Outbox | EnvelopeSender
                     ) -> tuple[str, WorldSnapshot]:
        if platform not in PLATFORMS:
            raise SessionError(f"unknown platform {platform!r}")
        if not isinstance(outbox, EnvelopeSender):
            outbox = EnvelopeSender(outbox)
        with self._lock:
            if user_id in self._users:
                raise DuplicateUserError(f"user {user_id!r} already connected")
            session_id = uuid.uuid4().hex
            phantom_id = f"phantom:{user_id}"
            q = (self.robot_link.current_q() if self.robot_link is not None
                 else [0.0] * 6)
            phantom = self._objects.get(phantom_id)
            if phantom is None:
                phantom = ShareableObject(phantom_id, "PHANTOM_ROBOT", q)
                self._objects[phantom_id] = phantom
            else:
                phantom.pose = q
            world_seq = self._bump(phantom)
            self._join_counter += 1
            session = UserSession(user_id, platform, session_id, phantom_id)
            client = _Client(session, outbox, joined_at=self._join_counter)
            # Join notice reaches existing clients before any later update;
            # the phantom's birth is itself a phantom mutation they must see.
            self._broadcast("JOIN", {"user_id": user_id, "platform": platform})
            self._broadcast("PHANTOM_UPDATE", {
                "user_id": user_id, "q": [float(v) for v in phantom.pose],
                "world_seq": world_seq})
            self._clients[session_id] = client
            self._users[user_id] = session_id
            snapshot = self._snapshot_locked()
            self._send(client, "SNAPSHOT",
                       snapshot.to_body(session_id, phantom_id))
            return session_id, snapshot

    def update_phantom(self, session_id: str, q) -> int:
        with self._lock:
            client = self._require_session(session_id)
            check_limits(q, self.robot_params)
            phantom = self._objects[client.session.phantom_id]
            phantom.pose = [float(v) for v in q]
            world_seq = self._bump(phantom)
            body = {"user_id": client.session.user_id,
                    "q": phantom.pose, "world_seq": world_seq}
            self._send(client, "PHANTOM_UPDATE", body)
            client.session.last_acked_world_seq = world_seq
            self._broadcast("PHANTOM_UPDATE", body, exclude=session_id)
            return world_seq

    def acquire_lock(self, session_id: str, object_id: str) -> dict:
        with self._lock:
            client = self._require_session(session_id)
            user = client.session.user_id
            obj = self._objects.get(object_id)
            if obj is None:
                raise UnknownObjectError(f"unknown object {object_id!r}")
            self.lock_events.append({"event": "req", "object_id": object_id,
                                     "user": user})
            if obj.owner is None or obj.owner == user:
                obj.owner = user
                world_seq = self._bump(obj)
                self.lock_events.append({"event": "grant",
                                         "object_id": object_id, "user": user,
                                         "world_seq": world_seq})
                body = {"object_id": object_id, "owner": user,
                        "world_seq": world_seq}
                self._broadcast("LOCK_GRANT", body)
                return {"granted": True, **body}
            self.lock_events.append({"event": "deny", "object_id": object_id,
                                     "user": user, "owner": obj.owner})
            body = {"object_id": object_id, "owner": obj.owner}
            self._send(client, "LOCK_DENY", body)
            return {"granted": False, **body}

    def release_lock(self, session_id: str, object_id: str) -> int:
        with self._lock:
            client = self._require_session(session_id)
            return self._release_locked(client.session.user_id, object_id)

    def _release_locked(self, user: str, object_id: str) -> int:
        obj = self._objects.get(object_id)
        if obj is None:
            raise UnknownObjectError(f"unknown object {object_id!r}")
        if obj.owner != user:
            raise LockOwnershipError(
                f"{user!r} does not hold the lock on {object_id!r}")
        obj.owner = None
        world_seq = self._bump(obj)
        self.lock_events.append({"event": "release", "object_id": object_id,
                                 "user": user, "world_seq": world_seq})
        self._broadcast("LOCK_GRANT", {"object_id": object_id, "owner": None,
                                       "world_seq": world_seq})
        return world_seq

    def validate_phantom(self, session_id: str) -> dict:
        # The robot call happens outside the world lock: command ids come from
        # the robot server and submission never mutates world state.
        with self._lock:
            client = self._require_session(session_id)
            user = client.session.user_id
            phantom_q = list(self._objects[client.session.phantom_id].pose)
        if self.robot_link is None:
            raise RobotUnreachableError("no robot server attached")
        status, command_id = self.robot_link.submit_joint(phantom_q, user)
        receipt = {"status": status, "command_id": command_id}
        if status == "ACCEPTED":
            with self._lock:
                self.validation_receipts.append(
                    {"command_id": command_id, "user_id": user,
                     "kind": "joint"})
        return receipt

    def disconnect(self, session_id: str) -> None:
        with self._lock:
            client = self._clients.get(session_id)
            if client is None:
                return
            user = client.session.user_id
            for obj in list(self._objects.values()):
                if obj.owner == user:
                    self._release_locked(user, obj.object_id)
            phantom = self._objects.pop(client.session.phantom_id, None)
            if phantom is not None:
                self._world_seq += 1
            del self._clients[session_id]
            del self._users[user]
            snapshot = self._snapshot_locked()
            self._broadcast("SNAPSHOT", snapshot.to_body())

    def on_robot_event(self, body: dict) -> None:
        """Robot server callback: fan ROBOT_STATE out to every client."""
        with self._lock:
            self.last_robot_state = body
            self._broadcast("ROBOT_STATE", body)

    # -- snapshots & persistence ----------------------------------------------

    def snapshot(self) -> WorldSnapshot:
        with self._lock:
            return self._snapshot_locked()

    def _snapshot_locked(self) -> WorldSnapshot:
        objects = [ShareableObject(o.object_id, o.kind,
                                   list(o.pose) if o.kind == "PHANTOM_ROBOT"
                                   else dict(o.pose),
                                   o.owner, o.world_seq)
                   for o in sorted(self._objects.values(),
                                   key=lambda o: o.object_id)]
        users = [(c.session.user_id, c.session.platform)
                 for c in sorted(self._clients.values(),
                                 key=lambda c: c.joined_at)]
        return WorldSnapshot(self._world_seq, objects, users)

    def persist_world(self, store: FileStore | None = None) -> None:
        store = store or self.store
        if store is None:
            raise SessionError("no store configured")
        with self._lock:
            snapshot = self._snapshot_locked()
        store.write("world", {"world_seq": snapshot.world_seq},
                    [o.to_record() for o in snapshot.objects])

    @staticmethod
    def restore_world(store: FileStore) -> WorldSnapshot:
        meta, records = store.read("world")
        return WorldSnapshot(int(meta["world_seq"]),
                             [ShareableObject.from_record(r) for r in records],
                             [])


# ---------------------------------------------------------------------------
# Scene files

def scene_to_xml(objects: list[ShareableObject]) -> str:
    root = Node("scene")
    for obj in objects:
        pos = obj.pose["position"]
        quat = obj.pose["orientation"]
        root.children.append(Node("object", {
            "id": obj.object_id,
            "x": xmlutil.fmt_float(pos[0]),
            "y": xmlutil.fmt_float(pos[1]),
            "z": xmlutil.fmt_float(pos[2]),
            "qw": xmlutil.fmt_float(quat[0]),
            "qx": xmlutil.fmt_float(quat[1]),
            "qy": xmlutil.fmt_float(quat[2]),
            "qz": xmlutil.fmt_float(quat[3]),
        }))
    return xmlutil.emit(root)


def scene_from_xml(text: str) -> list[ShareableObject]:
    root = xmlutil.parse_xml(text)
    xmlutil.require_tag(root, "scene")
    xmlutil.check_children(root, ("object",))
    objects = []
    for node in root.find_all("object"):
        attrs = xmlutil.get_attrs(node, {
            "id": str, "x": float, "y": float, "z": float,
            "qw": float, "qx": float, "qy": float, "qz": float})
        pose = {"position": [attrs["x"], attrs["y"], attrs["z"]],
                "orientation": [attrs["qw"], attrs["qx"], attrs["qy"],
                                attrs["qz"]]}
        objects.append(ShareableObject(attrs["id"], "SCENE_OBJECT", pose))
    return objects


def default_scene() -> list[ShareableObject]:
    """Two reachable pegs on the desk in front of the arm."""
    def obj(object_id, x, y, z):
        return ShareableObject(object_id, "SCENE_OBJECT", {
            "position": [x, y, z], "orientation": [1.0, 0.0, 0.0, 0.0]})
    return [obj("peg_left", 0.35, -0.15, 0.05), obj("peg_right", 0.35, 0.15, 0.05)]
