"""Wiring tests: camera module vs relay, trajectory gating, probe loop."""

import time

import pytest

from telecollab.stack import LocalStack, TrajectoryUnavailableError
from telecollab.scenario import ScriptedClient


@pytest.fixture
def stack():
    s = LocalStack(camera_count=5)
    s.load_default_app()
    yield s
    s.stop()


def test_camera_units_are_live_subscriptions(stack):
    assert stack.relay.subscriber_count("cam0") == 1
    assert stack.relay.subscriber_count("cam4") == 1
    stack.core.send_safe("camera", 3)
    counts = [stack.relay.subscriber_count(f"cam{i}") for i in range(5)]
    assert counts == [1, 1, 1, 0, 0]
    stack.core.send_safe("camera", 5)
    assert all(stack.relay.subscriber_count(f"cam{i}") == 1 for i in range(5))


def test_unload_tears_down_streams_before_removal(stack):
    for source in stack.sources:
        source.push_one()
    stack.operator_channel.drain_frames()
    stack.core.unload_module("camera")
    for source in stack.sources:
        source.push_one()
    assert stack.operator_channel.drain_frames() == []
    assert "camera" not in stack.core.modules()


def test_trajectory_requires_module(stack):
    client = ScriptedClient(stack, "alice")
    client.join()
    with pytest.raises(TrajectoryUnavailableError):
        stack.execute_trajectory(client.session_id, [[0.0] * 6])
    stack.hot_add_trajectory()
    receipt = stack.execute_trajectory(client.session_id, [[0.0] * 6])
    assert receipt["status"] == "ACCEPTED"
    stack.quiesce_robot()
    assert stack.trajectory_receipts()[0]["command_id"] == \
        receipt["command_id"]


def test_probe_feeds_runtime_ewma(stack):
    assert stack.core.ewma_ms is None
    sample = stack.probe_latency(timeout_s=1.0)
    assert not sample.flagged
    assert stack.core.ewma_ms == pytest.approx(sample.rtt_ms)


def test_robot_completion_broadcast_to_clients(stack):
    client = ScriptedClient(stack, "alice")
    client.join()
    client.update([0.02, 0, 0, 0, 0, 0])
    receipt = client.validate()
    stack.quiesce_robot()
    client.pump()
    completed = [e for e in client.log if e.msg_type == "ROBOT_STATE"
                 and e.body.get("event") == "completed"]
    assert len(completed) == 1
    assert completed[0].body["completed_command_id"] == receipt["command_id"]
    assert completed[0].body["q"] == pytest.approx([0.02, 0, 0, 0, 0, 0])
