"""Session server semantics: joins, updates, locks, validation, persistence."""

import threading

import pytest

from telecollab.kinematics import JointLimitError
from telecollab.robot import LocalRobotLink, RobotSim
from telecollab.session import (DuplicateUserError, LockOwnershipError,
                                SessionCore, UnknownObjectError,
                                UnknownSessionError, default_scene)
from telecollab.storage import FileStore, StoreCorruptError


class Inbox:
    def __init__(self):
        self.envelopes = []
        self._lock = threading.Lock()

    def __call__(self, env):
        with self._lock:
            self.envelopes.append(env)

    def of_type(self, msg_type):
        with self._lock:
            return [e for e in self.envelopes if e.msg_type == msg_type]


def make_core(**kwargs):
    sim = RobotSim()
    core = SessionCore(scene=default_scene(), robot_link=LocalRobotLink(sim),
                       **kwargs)
    return core, sim


def test_first_join_sees_scene_and_own_phantom():
    core, _ = make_core()
    inbox = Inbox()
    session_id, snapshot = core.join_session("alice", "WEB", inbox)
    kinds = sorted(o.kind for o in snapshot.objects)
    assert kinds == ["PHANTOM_ROBOT", "SCENE_OBJECT", "SCENE_OBJECT"]
    phantom = [o for o in snapshot.objects if o.kind == "PHANTOM_ROBOT"][0]
    assert phantom.object_id == "phantom:alice"
    assert snapshot.connected_users == [("alice", "WEB")]
    # the join reply is a SNAPSHOT envelope carrying the session id
    reply = inbox.of_type("SNAPSHOT")[0]
    assert reply.body["session_id"] == session_id
    assert reply.body["phantom_id"] == "phantom:alice"


def test_duplicate_user_rejected_without_side_effects():
    core, _ = make_core()
    a1 = Inbox()
    core.join_session("alice", "WEB", a1)
    seq_before = core.snapshot().world_seq
    with pytest.raises(DuplicateUserError):
        core.join_session("alice", "VR", Inbox())
    assert core.snapshot().world_seq == seq_before
    assert core.snapshot().connected_users == [("alice", "WEB")]


def test_join_notice_precedes_later_updates():
    core, _ = make_core()
    a1 = Inbox()
    core.join_session("alice", "WEB", a1)
    sid2, _ = core.join_session("bob", "VR", Inbox())
    core.update_phantom(sid2, [0.1, 0, 0, 0, 0, 0])
    types = [e.msg_type for e in a1.envelopes]
    assert types.index("JOIN") < types.index("PHANTOM_UPDATE")
    join = a1.of_type("JOIN")[0]
    assert join.body == {"user_id": "bob", "platform": "VR"}


def test_both_phantoms_visible_to_second_joiner():
    core, _ = make_core()
    core.join_session("alice", "WEB", Inbox())
    _, snap = core.join_session("bob", "MOBILE", Inbox())
    phantom_ids = sorted(o.object_id for o in snap.objects
                         if o.kind == "PHANTOM_ROBOT")
    assert phantom_ids == ["phantom:alice", "phantom:bob"]


def test_self_assignment_still_increments_world_seq():
    core, _ = make_core()
    sid, snap = core.join_session("alice", "WEB", Inbox())
    q = [0.0] * 6
    first = core.update_phantom(sid, q)
    second = core.update_phantom(sid, q)
    assert second == first + 1


def test_updates_arrive_in_order_with_same_values():
    core, _ = make_core()
    sid, _ = core.join_session("alice", "WEB", Inbox())
    bob = Inbox()
    core.join_session("bob", "WEB", bob)
    sent = []
    for i in range(1000):
        q = [i * 1e-4, 0, 0, 0, 0, 0]
        sent.append(q)
        core.update_phantom(sid, q)
    got = [e.body["q"] for e in bob.of_type("PHANTOM_UPDATE")
           if e.body["user_id"] == "alice"]
    assert got == sent
    seqs = [e.body["world_seq"] for e in bob.of_type("PHANTOM_UPDATE")]
    assert seqs == sorted(seqs)


def test_limit_violation_names_joint():
    core, _ = make_core()
    sid, _ = core.join_session("alice", "WEB", Inbox())
    with pytest.raises(JointLimitError) as info:
        core.update_phantom(sid, [0, 0, 4.0, 0, 0, 0])
    assert info.value.joint_index == 2


def test_stale_session_rejected():
    core, _ = make_core()
    with pytest.raises(UnknownSessionError):
        core.update_phantom("bogus", [0.0] * 6)


def test_lock_grant_deny_reentrant_release():
    core, _ = make_core()
    sid_a, _ = core.join_session("alice", "WEB", Inbox())
    sid_b, _ = core.join_session("bob", "WEB", Inbox())
    assert core.acquire_lock(sid_a, "peg_left")["granted"]
    assert not core.acquire_lock(sid_b, "peg_left")["granted"]
    assert core.acquire_lock(sid_a, "peg_left")["granted"]  # reentrant
    with pytest.raises(LockOwnershipError):
        core.release_lock(sid_b, "peg_left")
    core.release_lock(sid_a, "peg_left")
    assert core.acquire_lock(sid_b, "peg_left")["granted"]
    with pytest.raises(UnknownObjectError):
        core.acquire_lock(sid_a, "no_such_thing")


def test_contested_lock_single_grant_every_interleaving():
    for round_num in range(50):
        core, _ = make_core()
        sid_a, _ = core.join_session("alice", "WEB", Inbox())
        sid_b, _ = core.join_session("bob", "WEB", Inbox())
        results = {}

        def attempt(name, sid):
            results[name] = core.acquire_lock(sid, "peg_right")["granted"]

        t1 = threading.Thread(target=attempt, args=("a", sid_a))
        t2 = threading.Thread(target=attempt, args=("b", sid_b))
        t1.start(); t2.start(); t1.join(); t2.join()
        assert sorted(results.values()) == [False, True], round_num


def test_disconnect_releases_locks_and_removes_phantom():
    core, _ = make_core()
    sid_a, _ = core.join_session("alice", "WEB", Inbox())
    bob = Inbox()
    core.join_session("bob", "WEB", bob)
    core.acquire_lock(sid_a, "peg_left")
    core.disconnect(sid_a)
    snap = core.snapshot()
    assert all(o.owner is None for o in snap.objects)
    assert "phantom:alice" not in [o.object_id for o in snap.objects]
    assert snap.connected_users == [("bob", "WEB")]
    # bob received a resync snapshot reflecting the departure
    resync = bob.of_type("SNAPSHOT")[-1]
    ids = [o["object_id"] for o in resync.body["objects"]]
    assert "phantom:alice" not in ids


def test_validate_forwards_exact_phantom_to_robot():
    core, sim = make_core()
    sid, _ = core.join_session("alice", "WEB", Inbox())
    q = [0.2, -0.1, 0.3, 0.0, 0.1, -0.2]
    core.update_phantom(sid, q)
    receipt = core.validate_phantom(sid)
    assert receipt["status"] == "ACCEPTED"
    accepted = [e for e in sim.ingress_log if e["status"] == "ACCEPTED"]
    assert len(accepted) == 1
    sim.run_until_idle()
    assert list(sim.current_q()) == pytest.approx(q, abs=1e-12)
    assert core.validation_receipts[0]["command_id"] == receipt["command_id"]


def test_second_validate_busy_while_first_executes():
    core, sim = make_core()
    sid, _ = core.join_session("alice", "WEB", Inbox())
    core.update_phantom(sid, [0.5, 0, 0, 0, 0, 0])
    first = core.validate_phantom(sid)
    second = core.validate_phantom(sid)
    assert first["status"] == "ACCEPTED"
    assert second["status"] == "BUSY"
    assert second["command_id"] == first["command_id"]
    assert len(core.validation_receipts) == 1
    sim.run_until_idle()
    third = core.validate_phantom(sid)
    assert third["status"] == "ACCEPTED"


def test_validate_without_robot_is_delivery_error():
    core = SessionCore(scene=default_scene(), robot_link=None)
    sid, _ = core.join_session("alice", "WEB", Inbox())
    from telecollab.session import RobotUnreachableError
    with pytest.raises(RobotUnreachableError):
        core.validate_phantom(sid)
    assert core.validation_receipts == []


def test_no_robot_cmd_except_from_validation():
    core, sim = make_core()
    sid, _ = core.join_session("alice", "WEB", Inbox())
    core.update_phantom(sid, [0.1, 0, 0, 0, 0, 0])
    core.acquire_lock(sid, "peg_left")
    core.release_lock(sid, "peg_left")
    assert sim.ingress_log == []
    core.validate_phantom(sid)
    assert len(sim.ingress_log) == 1


def test_persist_restore_round_trip(tmp_path):
    store = FileStore(tmp_path / "world.store")
    core, _ = make_core(store=store)
    sid, _ = core.join_session("alice", "WEB", Inbox())
    core.update_phantom(sid, [0.1, -0.2, 0.3, 0, 0, 0])
    core.acquire_lock(sid, "peg_left")
    core.persist_world()
    before = core.snapshot()

    restored = SessionCore(store=store)
    after = restored.snapshot()
    assert after.canonical() == before.canonical()


def test_restore_from_empty_store_uses_configured_scene(tmp_path):
    store = FileStore(tmp_path / "missing.store")
    core = SessionCore(scene=default_scene(), store=store)
    ids = sorted(o.object_id for o in core.snapshot().objects)
    assert ids == ["peg_left", "peg_right"]


def test_truncated_store_refuses_startup(tmp_path):
    store = FileStore(tmp_path / "world.store")
    core, _ = make_core(store=store)
    core.join_session("alice", "WEB", Inbox())
    core.persist_world()
    path = tmp_path / "world.store"
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) // 2])
    with pytest.raises(StoreCorruptError):
        SessionCore(store=store)


def test_per_object_broadcast_order_strictly_increases():
    core, _ = make_core()
    sid_a, _ = core.join_session("alice", "WEB", Inbox())
    watcher = Inbox()
    core.join_session("bob", "WEB", watcher)
    for i in range(50):
        core.update_phantom(sid_a, [i * 0.01, 0, 0, 0, 0, 0])
        core.acquire_lock(sid_a, "peg_left")
        core.release_lock(sid_a, "peg_left")
    per_object = {}
    for env in watcher.envelopes:
        if env.msg_type == "PHANTOM_UPDATE":
            key, seq = "phantom:alice", env.body["world_seq"]
        elif env.msg_type == "LOCK_GRANT":
            key, seq = env.body["object_id"], env.body["world_seq"]
        else:
            continue
        per_object.setdefault(key, []).append(seq)
    for key, seqs in per_object.items():
        assert all(b > a for a, b in zip(seqs, seqs[1:])), key
