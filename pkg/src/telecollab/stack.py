"""Full application assembly: session + robot + relay + module runtime.

One LocalStack is the paper-shaped application running in a single process:
the shared-world session server with a simulated robot behind it, a relay
carrying camera streams to the operator's runtime, and the module runtime
degrading those streams when the measured latency climbs.  Scenario scripts
and the operator console both sit on top of this wiring.
"""

from __future__ import annotations

import threading
import time

from .kinematics import RobotParams
from .prototyper import AppSpec, ModuleDescriptor, builtin_descriptors
from .relay import FrameSource, RelayCore
from .robot import LocalRobotLink, RobotSim, RobotTicker
from .runtime import ControlLoop, ModuleCore, StateReport, UnitModule
from .session import SessionCore, ShareableObject, default_scene
from .storage import FileStore
from .transport import LatencyShim


class CameraViewsModule(UnitModule):
    """Camera module: each active unit is one live relay subscription."""

    def __init__(self, name: str, relay: RelayCore, client_id: str,
                 source_ids: list[str]):
        super().__init__(name)
        self.relay = relay
        self.client_id = client_id
        self.source_ids = source_ids
        self.subscribed: list[str] = []

    def _set_active(self, count: int) -> None:
        count = max(0, min(count, len(self.source_ids)))
        while len(self.subscribed) > count:
            source_id = self.subscribed.pop()
            self.relay.unsubscribe(self.client_id, source_id)
        for source_id in self.source_ids[len(self.subscribed):count]:
            self.relay.subscribe(self.client_id, source_id, "UNICAST")
            self.subscribed.append(source_id)
        self.active_units = len(self.subscribed)

    def on_load(self, granted_units: int) -> StateReport:
        self._set_active(granted_units)
        return StateReport(self.name, "OK", self.active_units,
                           f"{self.active_units} views streaming")

    def on_safe(self, degree: int, requested_units: int) -> StateReport:
        self._set_active(min(degree, requested_units))
        status = "OK" if self.active_units == requested_units else "DEGRADED"
        return StateReport(self.name, status, self.active_units,
                           f"{self.active_units}/{requested_units} views")

    def on_unload(self) -> StateReport:
        self._set_active(0)
        return StateReport(self.name, "OK", 0, "views torn down")


class TrajectoryModule(UnitModule):
    """Waypoint programming: only available while loaded."""

    def __init__(self, name: str, robot_link):
        super().__init__(name)
        self.robot_link = robot_link
        self.receipts: list[dict] = []

    def run(self, waypoints, origin: str) -> dict:
        status, command_id = self.robot_link.submit_trajectory(waypoints,
                                                               origin)
        receipt = {"status": status, "command_id": command_id,
                   "origin": origin}
        if status == "ACCEPTED":
            self.receipts.append(receipt)
        return receipt


class TrajectoryUnavailableError(Exception):
    """Trajectory module is not loaded."""


class LocalStack:
    def __init__(self, scene: list[ShareableObject] | None = None,
                 robot_params: RobotParams | None = None,
                 camera_count: int = 5, queue_bound: int = 32,
                 store: FileStore | None = None,
                 shim: LatencyShim | None = None,
                 high_ms: float = 200.0, low_ms: float = 120.0,
                 control_period_ms: int = 500,
                 operator_id: str = "operator"):
        self.sim = RobotSim(robot_params)
        self.robot_link = LocalRobotLink(self.sim)
        self.session = SessionCore(scene=scene or default_scene(),
                                   robot_link=self.robot_link, store=store)
        self.sim.add_listener(self.session.on_robot_event)
        self.relay = RelayCore(queue_bound=queue_bound)
        self.shim = shim
        self.operator_id = operator_id
        self.sources = [FrameSource(self.relay, f"cam{i}", rate_hz=20.0)
                        for i in range(camera_count)]
        self.operator_channel = self.relay.connect_client(operator_id,
                                                          shim=shim)
        self.core = ModuleCore(high_ms=high_ms, low_ms=low_ms,
                               control_period_ms=control_period_ms)
        self.core.unload_hooks.append(self._on_module_unloaded)
        self.relay.latency_listeners.append(self.core.observe_latency)
        # module lifecycle is visible to every connected operator
        self.core.signal_listeners.append(
            lambda body: self.session.broadcast_system("MODULE_SIGNAL", body))
        self.core.report_listeners.append(
            lambda body: self.session.broadcast_system("STATE_REPORT", body))
        self._threads: list = []
        self._stop = threading.Event()
        self._operator_pump = threading.Thread(target=self._pump_operator,
                                               daemon=True)
        self._operator_pump.start()

    # -- module wiring ---------------------------------------------------------

    def module_impl(self, descriptor: ModuleDescriptor):
        if descriptor.name == "camera":
            return CameraViewsModule("camera", self.relay, self.operator_id,
                                     [s.source_id for s in self.sources])
        if descriptor.name == "trajectory":
            return TrajectoryModule("trajectory", self.robot_link)
        return UnitModule(descriptor.name)

    def load_app(self, spec: AppSpec) -> list[StateReport]:
        reports = []
        for m in spec.modules:
            reports.append(self.core.load_module(
                m.descriptor, m.variant, requested_units=m.units,
                impl=self.module_impl(m.descriptor)))
        self.core.set_priority(list(spec.priority))
        return reports

    def load_default_app(self, camera_units: int | None = None
                         ) -> list[StateReport]:
        descs = builtin_descriptors()
        units = camera_units if camera_units is not None else len(self.sources)
        reports = [
            self.core.load_module(descs["camera"], "CLASSIC",
                                  requested_units=units,
                                  impl=self.module_impl(descs["camera"])),
            self.core.load_module(descs["teleop"], "CLASSIC",
                                  impl=self.module_impl(descs["teleop"])),
        ]
        self.core.set_priority(["camera"])
        return reports

    def hot_add_trajectory(self) -> StateReport:
        desc = builtin_descriptors()["trajectory"]
        return self.core.hot_add(desc, "CLASSIC",
                                 impl=self.module_impl(desc))

    def _on_module_unloaded(self, name: str) -> None:
        if name == "camera":
            self.relay.unsubscribe_all(self.operator_id)

    def execute_trajectory(self, session_id: str, waypoints) -> dict:
        """Program a waypoint run; requires the trajectory module."""
        entry = self.core.modules().get("trajectory")
        if entry is None:
            raise TrajectoryUnavailableError(
                "trajectory module is not loaded")
        client = self.session._require_session(session_id)
        receipt = entry.impl.run(waypoints, client.session.user_id)
        return receipt

    def trajectory_receipts(self) -> list[dict]:
        entry = self.core.modules().get("trajectory")
        return list(entry.impl.receipts) if entry else []

    # -- latency probing ---------------------------------------------------------

    def probe_latency(self, timeout_s: float = 2.0):
        return self.relay.measure_latency(self.operator_id,
                                          timeout_s=timeout_s)

    def _pump_operator(self) -> None:
        """Answer relay pings on the operator's frame channel.  The return leg
        is local; injected latency is applied once, on delivery."""
        while not self._stop.is_set():
            item = self.operator_channel.pop(timeout=0.1)
            if item is not None and item[0] == "ping":
                self.relay.pong(self.operator_id, item[1])

    # -- real-time drivers ---------------------------------------------------------

    def start_realtime(self, probe_period_s: float = 0.1,
                       frames: bool = False) -> None:
        self._ticker = RobotTicker(self.sim).start()
        self._control = ControlLoop(self.core).start()
        if frames:
            for source in self.sources:
                source.start()
        probe_thread = threading.Thread(
            target=self._probe_loop, args=(probe_period_s,), daemon=True)
        probe_thread.start()
        self._threads.append(probe_thread)

    def _probe_loop(self, period_s: float) -> None:
        while not self._stop.is_set():
            try:
                self.probe_latency(timeout_s=1.0)
            except Exception:
                pass
            time.sleep(period_s)

    def quiesce_robot(self, timeout_s: float = 30.0) -> None:
        deadline = time.monotonic() + timeout_s
        while self.sim.state().executing is not None:
            if time.monotonic() > deadline:
                raise TimeoutError("robot did not finish executing")
            if not hasattr(self, "_ticker"):
                self.sim.step(self.sim.params.tick_dt)
            else:
                time.sleep(0.005)

    def stop(self) -> None:
        self._stop.set()
        for source in self.sources:
            source.stop()
        if hasattr(self, "_ticker"):
            self._ticker.stop()
        if hasattr(self, "_control"):
            self._control.stop()
        if self.shim is not None:
            self.shim.close()
