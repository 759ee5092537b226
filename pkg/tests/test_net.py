"""End-to-end over real sockets: session + robot + relay + bridge."""

import json
import threading
import time

import pytest

from telecollab.netserve import RelayServer, RobotServer, SessionServer
from telecollab.relay import FrameSource, RelayCore
from telecollab.robot import RobotSim, RobotTicker
from telecollab.scenario import WireClient
from telecollab.session import SessionCore, default_scene
from telecollab.transport import connect_endpoint
from telecollab.wire import EnvelopeSender


@pytest.fixture
def stack_tcp():
    """Session server and robot server talking over loopback sockets."""
    core = SessionCore(scene=default_scene())
    server = SessionServer(core).start()
    host, port = server.address
    sim = RobotSim()
    robot_endpoint = connect_endpoint(host, port, name="robot")
    robot = RobotServer(sim, robot_endpoint)
    robot.hello()
    robot_thread = threading.Thread(target=robot.run, daemon=True)
    robot_thread.start()
    ticker = RobotTicker(sim).start()
    deadline = time.monotonic() + 2.0
    while not server.robot_link.connected():
        assert time.monotonic() < deadline, "robot server never attached"
        time.sleep(0.01)
    yield server, core, sim, (host, port)
    ticker.stop()
    robot_endpoint.close()
    server.stop()


def test_join_update_validate_over_sockets(stack_tcp):
    server, core, sim, (host, port) = stack_tcp
    alice = WireClient(host, port, "alice", "WEB")
    bob = WireClient(host, port, "bob", "VR")
    alice.join()
    bob.join()
    q = [0.05, -0.02, 0.03, 0.0, 0.01, 0.0]
    alice.update(q)
    assert alice.lock("peg_left")
    assert not bob.lock("peg_left")
    receipt = alice.validate()
    assert receipt["status"] == "ACCEPTED"
    deadline = time.monotonic() + 5.0
    while sim.state().executing is not None:
        assert time.monotonic() < deadline
        time.sleep(0.01)
    assert list(sim.current_q()) == pytest.approx(q, abs=1e-9)
    # both wire clients converge to the server snapshot
    alice.wait_settled()
    bob.wait_settled()
    server_snapshot = core.snapshot()
    assert alice.model_snapshot().canonical() == server_snapshot.canonical()
    assert bob.model_snapshot().canonical() == server_snapshot.canonical()
    # completion notice reached the clients over the wire
    completed = [e for e in alice.log if e.msg_type == "ROBOT_STATE"
                 and e.body.get("event") == "completed"]
    assert completed
    alice.disconnect()
    bob.wait_settled()
    ids = [o.object_id for o in bob.model_snapshot().objects]
    assert "phantom:alice" not in ids
    bob.disconnect()


def test_duplicate_join_gets_error_envelope(stack_tcp):
    _, _, _, (host, port) = stack_tcp
    first = WireClient(host, port, "carol")
    first.join()
    second = WireClient(host, port, "carol")
    with pytest.raises(Exception, match="already connected"):
        second.join()
    first.disconnect()
    second.disconnect()


def test_busy_validate_over_sockets(stack_tcp):
    _, _, sim, (host, port) = stack_tcp
    alice = WireClient(host, port, "alice")
    alice.join()
    alice.update([0.8, 0, 0, 0, 0, 0])
    first = alice.validate()
    second = alice.validate()
    assert first["status"] == "ACCEPTED"
    assert second["status"] == "BUSY"
    assert second["command_id"] == first["command_id"]
    alice.disconnect()


def test_relay_over_sockets_unicast_and_ping():
    core = RelayCore(queue_bound=64)
    source = FrameSource(core, "cam0", rate_hz=50.0)
    server = RelayServer(core).start()
    host, port = server.address

    endpoint = connect_endpoint(host, port, name="viewer")
    received = []
    pongs = EnvelopeSender(endpoint.send, sender="viewer")

    def reader():
        for env in endpoint.recv_envelopes():
            received.append(env)
            if env.msg_type == "PING":
                pongs.send("PONG", dict(env.body))

    t = threading.Thread(target=reader, daemon=True)
    t.start()
    pongs.send("SUBSCRIBE", {"source_id": "cam0", "mode": "UNICAST"})
    deadline = time.monotonic() + 2.0
    while not any(e.msg_type == "SUBSCRIBE" for e in received):
        assert time.monotonic() < deadline
        time.sleep(0.01)
    for _ in range(10):
        source.push_one()
    deadline = time.monotonic() + 2.0
    while sum(e.msg_type == "FRAME" for e in received) < 10:
        assert time.monotonic() < deadline
        time.sleep(0.01)
    frames = [e for e in received if e.msg_type == "FRAME"]
    seqs = [e.body["frame_seq"] for e in frames]
    assert seqs == sorted(seqs) == list(range(1, 11))
    # latency probe over the same channel
    sample = core.measure_latency("client-1")
    assert not sample.flagged
    assert sample.rtt_ms < 500.0
    endpoint.close()
    server.stop()


def test_websocket_bridge_round_trip():
    websockets = pytest.importorskip("websockets")
    import asyncio
    from telecollab.bridge import bridge_forever

    core = SessionCore(scene=default_scene())
    server = SessionServer(core).start()
    host, port = server.address
    ws_port = 18900 + (port % 1000)

    async def run():
        started = asyncio.Event()
        bridge_task = asyncio.create_task(
            bridge_forever(ws_port, host, port, started=started))
        await asyncio.wait_for(started.wait(), 5)
        from websockets.asyncio.client import connect
        async with connect(f"ws://127.0.0.1:{ws_port}/") as ws:
            await ws.send(json.dumps({
                "version": 1, "seq": 1, "msg_type": "JOIN",
                "sender": "webuser", "ts_ms": 0,
                "body": {"user_id": "webuser", "platform": "WEB"}}))
            reply = json.loads(await asyncio.wait_for(ws.recv(), 5))
            assert reply["msg_type"] == "SNAPSHOT"
            assert "session_id" in reply["body"]
            await ws.send(json.dumps({
                "version": 1, "seq": 2, "msg_type": "PHANTOM_UPDATE",
                "sender": "webuser", "ts_ms": 0,
                "body": {"q": [0.1, 0, 0, 0, 0, 0]}}))
            ack = json.loads(await asyncio.wait_for(ws.recv(), 5))
            assert ack["msg_type"] == "PHANTOM_UPDATE"
            assert ack["body"]["q"] == [0.1, 0, 0, 0, 0, 0]
            assert ack["body"]["world_seq"] == core.snapshot().world_seq
        bridge_task.cancel()

    asyncio.run(run())
    server.stop()
