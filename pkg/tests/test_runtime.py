"""Module lifecycle, EWMA arithmetic, and the degradation controller."""

import pytest

from telecollab.prototyper import ModuleDescriptor, builtin_descriptors
from telecollab.runtime import (CapabilityError, ConflictError, CoreSignal,
                                LatencySample, ModuleCore, NotFoundError,
                                RangeError, SilentModule, UnitModule,
                                VariantError)

CAMERA = builtin_descriptors()["camera"]
TELEOP = builtin_descriptors()["teleop"]
TRAJECTORY = builtin_descriptors()["trajectory"]


def sample(rtt, ts=0):
    return LatencySample("probe", rtt, ts)


def test_core_signal_invariant():
    CoreSignal("SAFE", 4)
    CoreSignal("LOAD")
    with pytest.raises(ValueError):
        CoreSignal("SAFE")
    with pytest.raises(ValueError):
        CoreSignal("LOAD", 2)


def test_load_healthy_camera_module():
    core = ModuleCore()
    report = core.load_module(CAMERA, "CLASSIC", requested_units=5)
    assert report.status == "OK"
    assert report.active_units == 5
    entry = core.module_status("camera")
    assert entry.mode == "CLASSIC_MODE"
    assert entry.granted_units == 5


def test_duplicate_load_is_conflict():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC")
    with pytest.raises(ConflictError):
        core.load_module(CAMERA, "CLASSIC")
    assert core.module_status("camera").status == "OK"  # untouched


def test_missing_variant_rejected():
    core = ModuleCore()
    with pytest.raises(VariantError):
        core.load_module(TRAJECTORY, "MOBILE")


def test_failed_load_not_registered():
    class FailingModule(UnitModule):
        def on_load(self, granted):
            from telecollab.runtime import StateReport
            return StateReport(self.name, "FAILED", 0, "boom")

    core = ModuleCore()
    report = core.load_module(CAMERA, "CLASSIC",
                              impl=FailingModule("camera"))
    assert report.status == "FAILED"
    assert "camera" not in core.modules()


def test_unload_removes_module():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC")
    torn_down = []
    core.unload_hooks.append(torn_down.append)
    core.unload_module("camera")
    assert "camera" not in core.modules()
    assert torn_down == ["camera"]
    with pytest.raises(NotFoundError):
        core.unload_module("camera")


def test_signal_discipline_one_load_one_unload_in_order():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC")
    core.load_module(TELEOP, "CLASSIC")
    core.hot_add(TRAJECTORY, "CLASSIC")
    core.send_safe("camera", 4)
    core.unload_module("trajectory")
    per_module = {}
    for entry in core.signal_log:
        per_module.setdefault(entry["module"], []).append(entry["kind"])
    for module, kinds in per_module.items():
        assert kinds.count("LOAD") == 1
        assert kinds.count("UNLOAD") <= 1
        if "UNLOAD" in kinds:
            assert kinds.index("LOAD") < kinds.index("UNLOAD")


def test_safe_reduces_active_units():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    report = core.send_safe("camera", 4)
    assert report.status == "DEGRADED"
    assert report.active_units == 4
    entry = core.module_status("camera")
    assert entry.mode == "SAFE_MODE"
    assert entry.granted_units == 4


def test_safe_equal_to_requested_returns_classic():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    core.send_safe("camera", 3)
    report = core.send_safe("camera", 5)
    assert report.status == "OK"
    assert core.module_status("camera").mode == "CLASSIC_MODE"


def test_safe_zero_quiesces_but_stays_loaded():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    report = core.send_safe("camera", 0)
    assert report.active_units == 0
    assert "camera" in core.modules()


def test_safe_on_non_degradable_is_capability_error():
    core = ModuleCore()
    core.load_module(TELEOP, "CLASSIC")
    with pytest.raises(CapabilityError):
        core.send_safe("teleop", 0)


def test_safe_degree_out_of_range():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    with pytest.raises(RangeError):
        core.send_safe("camera", 6)
    with pytest.raises(RangeError):
        core.send_safe("camera", -1)


def test_ewma_constant_converges_exactly():
    core = ModuleCore()
    for _ in range(100):
        core.observe_latency(sample(100.0))
    assert abs(core.ewma_ms - 100.0) < 1e-6


def test_ewma_single_spike_arithmetic():
    core = ModuleCore()
    for _ in range(200):
        core.observe_latency(sample(100.0))
    core.observe_latency(sample(1000.0))
    # One-step EWMA: 0.8 * 100 + 0.2 * 1000
    assert core.ewma_ms == pytest.approx((1 - 0.2) * 100.0 + 0.2 * 1000.0,
                                         abs=1e-9)


def test_no_samples_means_no_action():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    assert core.ewma_ms is None
    assert core.decide_degradation() == []


def test_degradation_steps_down_one_unit_per_period():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    core.observe_latency(sample(400.0))  # above H immediately
    degrees = []
    for _ in range(6):
        core.control_tick(now_ms=0)
        degrees.append(core.module_status("camera").granted_units)
    assert degrees == [4, 3, 2, 1, 0, 0]
    assert core.safe_trace() == [("camera", 4), ("camera", 3), ("camera", 2),
                                 ("camera", 1), ("camera", 0)]


def test_band_interior_is_quiet():
    core = ModuleCore(high_ms=200.0, low_ms=120.0)
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    for rtt in (150.0, 130.0, 190.0, 160.0, 121.0, 199.0):
        core.observe_latency(sample(rtt))
        core.control_tick(now_ms=0)
    assert core.safe_trace() == []


def test_recovery_restores_one_unit_per_period():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    core.observe_latency(sample(500.0))
    core.control_tick(now_ms=0)   # 4
    core.control_tick(now_ms=0)   # 3
    assert core.module_status("camera").granted_units == 3
    for _ in range(40):
        core.observe_latency(sample(10.0))  # decay far below Lo
    core.control_tick(now_ms=0)   # back to 4
    core.control_tick(now_ms=0)   # back to 5
    core.control_tick(now_ms=0)   # nothing further
    assert core.safe_trace() == [("camera", 4), ("camera", 3),
                                 ("camera", 4), ("camera", 5)]
    assert core.module_status("camera").mode == "CLASSIC_MODE"


def test_priority_order_degrades_first_module_first():
    views = ModuleDescriptor(name="views", version="1", variants=("CLASSIC",),
                             degradable=True, unit_name="view", max_units=3,
                             default_units=3)
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=2)
    core.load_module(views, "CLASSIC", requested_units=2)
    core.set_priority(["camera", "views"])
    core.observe_latency(sample(999.0))
    for _ in range(4):
        core.control_tick(now_ms=0)
    # camera exhausted first, then views
    assert core.safe_trace() == [("camera", 1), ("camera", 0),
                                 ("views", 1), ("views", 0)]
    # recovery happens in reverse order
    for _ in range(60):
        core.observe_latency(sample(1.0))
    for _ in range(4):
        core.control_tick(now_ms=0)
    assert core.safe_trace()[4:] == [("views", 1), ("views", 2),
                                     ("camera", 1), ("camera", 2)]


def test_monotone_response_under_rising_latency():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    grants = []
    rtt = 100.0
    for _ in range(20):
        rtt *= 1.25
        core.observe_latency(sample(rtt))
        core.control_tick(now_ms=0)
        grants.append(core.module_status("camera").granted_units)
    assert all(b <= a for a, b in zip(grants, grants[1:]))


def test_conservation_active_never_exceeds_granted():
    core = ModuleCore()
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    rtts = [500.0] * 4 + [10.0] * 30 + [500.0] * 3
    for rtt in rtts:
        core.observe_latency(sample(rtt))
        core.control_tick(now_ms=0)
        entry = core.module_status("camera")
        assert entry.active_units <= entry.granted_units <= 5


def test_silent_module_times_out_to_failed():
    core = ModuleCore(control_period_ms=500)
    core.load_module(CAMERA, "CLASSIC", requested_units=5,
                     impl=SilentModule("camera"))
    assert core.send_safe("camera", 4, now_ms=1000) is None
    core.control_tick(now_ms=1500)   # not yet: deadline is 2 periods
    assert core.module_status("camera").status != "FAILED"
    core.control_tick(now_ms=2000)
    assert core.module_status("camera").status == "FAILED"
    # failed module is skipped by the controller
    core.observe_latency(sample(999.0))
    assert core.decide_degradation() == []


def test_signal_log_file(tmp_path):
    import json
    path = tmp_path / "signals.jsonl"
    core = ModuleCore(signal_log_path=str(path))
    core.load_module(CAMERA, "CLASSIC", requested_units=5)
    core.send_safe("camera", 4)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert [l["kind"] for l in lines] == ["LOAD", "SAFE"]
    assert lines[1]["degree"] == 4
