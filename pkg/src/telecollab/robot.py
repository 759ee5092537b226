"""Simulated robot server: executes validated commands at bounded joint speed.

The sim owns the only mutable copy of the real robot's configuration.  It
accepts one command at a time (joint target or waypoint trajectory), moves
each joint toward the target at most v_max * dt per step, and emits a
completion event when every joint is within 1e-6 rad of the final target.
Every command received and every command executed is logged, so tests can
audit that no motion ever happens without a validated origin.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .kinematics import (Pose, RobotParams, check_limits, default_robot_params,
                         forward_kinematics)

TARGET_EPS = 1e-6

ACCEPTED = "ACCEPTED"
BUSY = "BUSY"


@dataclass(frozen=True)
class RobotState:
    q: tuple[float, ...]
    executing: Optional[tuple[str, tuple[float, ...]]]  # (command_id, target)
    tool_pose: Pose


class RobotSim:
    """Single robot, stepped simulation.  Thread-safe; events are delivered
    outside the internal lock."""

    def __init__(self, params: RobotParams | None = None,
                 q0: Sequence[float] | None = None):
        self.params = params or default_robot_params()
        q = np.zeros(6) if q0 is None else np.asarray(q0, dtype=float)
        check_limits(q, self.params)
        self._q = q
        self._tool_pose = forward_kinematics(self._q, self.params)
        self._executing: Optional[dict] = None
        self._lock = threading.Lock()
        self._cmd_counter = itertools.count(1)
        self._listeners: list[Callable[[dict], None]] = []
        self.ingress_log: list[dict] = []
        self.executed_log: list[dict] = []

    def add_listener(self, fn: Callable[[dict], None]) -> None:
        """fn receives ROBOT_STATE wire bodies for completion events."""
        self._listeners.append(fn)

    def current_q(self) -> list[float]:
        with self._lock:
            return [float(v) for v in self._q]

    def state(self) -> RobotState:
        with self._lock:
            return self._state_locked()

    def _state_locked(self) -> RobotState:
        executing = None
        if self._executing is not None:
            target = self._executing["waypoints"][self._executing["index"]]
            executing = (self._executing["command_id"],
                         tuple(float(v) for v in target))
        return RobotState(tuple(float(v) for v in self._q), executing,
                          self._tool_pose)

    def state_body(self, event: str = "state",
                   completed: str | None = None) -> dict:
        st = self.state()
        body = {
            "q": list(st.q),
            "tool_pose": st.tool_pose.to_dict(),
            "executing": st.executing[0] if st.executing else None,
            "event": event,
        }
        if completed is not None:
            body["completed_command_id"] = completed
        return body

    # -- command intake ----------------------------------------------------

    def submit_joint(self, q: Sequence[float], origin: str
                     ) -> tuple[str, str]:
        """Accept a single joint target.  Returns (status, command_id); on
        BUSY the id names the command currently executing."""
        return self._submit([np.asarray(q, dtype=float)], "joint", origin)

    def submit_trajectory(self, waypoints: Sequence[Sequence[float]],
                          origin: str) -> tuple[str, str]:
        if len(waypoints) == 0:
            raise ValueError("trajectory requires at least one waypoint")
        wps = [np.asarray(w, dtype=float) for w in waypoints]
        return self._submit(wps, "trajectory", origin)

    def _submit(self, waypoints: list[np.ndarray], kind: str, origin: str
                ) -> tuple[str, str]:
        for w in waypoints:
            check_limits(w, self.params)
        with self._lock:
            if self._executing is not None:
                busy_id = self._executing["command_id"]
                self.ingress_log.append({"status": BUSY, "kind": kind,
                                         "origin": origin,
                                         "busy_with": busy_id})
                return BUSY, busy_id
            command_id = f"cmd-{next(self._cmd_counter):06d}"
            self._executing = {"command_id": command_id, "waypoints": waypoints,
                               "index": 0, "kind": kind, "origin": origin}
            self.ingress_log.append({"status": ACCEPTED, "kind": kind,
                                     "origin": origin,
                                     "command_id": command_id})
            return ACCEPTED, command_id

    # -- stepped execution ---------------------------------------------------

    def step(self, dt: float) -> RobotState:
        """Advance the simulation by dt seconds (dt in (0, 0.1])."""
        if not 0 < dt <= 0.1:
            raise ValueError(f"dt must be in (0, 0.1], got {dt}")
        events: list[dict] = []
        with self._lock:
            if self._executing is not None:
                cmd = self._executing
                target = cmd["waypoints"][cmd["index"]]
                delta = target - self._q
                limit = self.params.v_max * dt
                self._q = self._q + np.clip(delta, -limit, limit)
                if np.max(np.abs(target - self._q)) < TARGET_EPS:
                    self._q = target.copy()
                    if cmd["index"] + 1 < len(cmd["waypoints"]):
                        cmd["index"] += 1
                    else:
                        self._executing = None
                        self.executed_log.append({
                            "command_id": cmd["command_id"],
                            "kind": cmd["kind"],
                            "origin": cmd["origin"],
                            "final_q": [float(v) for v in self._q],
                        })
                        events.append(("completed", cmd["command_id"]))
            self._tool_pose = forward_kinematics(self._q, self.params)
            state = self._state_locked()
        for event, command_id in events:
            body = self.state_body(event=event, completed=command_id)
            for fn in self._listeners:
                fn(body)
        return state

    def run_until_idle(self, dt: float | None = None, max_steps: int = 1_000_000
                       ) -> int:
        """Step until no command is executing; returns the step count."""
        dt = dt or self.params.tick_dt
        steps = 0
        while self.state().executing is not None:
            self.step(dt)
            steps += 1
            if steps >= max_steps:
                raise RuntimeError("robot failed to reach its target")
        return steps


class RobotTicker:
    """Background thread stepping a RobotSim at its configured tick."""

    def __init__(self, sim: RobotSim):
        self.sim = sim
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def start(self) -> "RobotTicker":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=2.0)

    def _run(self) -> None:
        dt = self.sim.params.tick_dt
        while not self._stop.is_set():
            self.sim.step(dt)
            time.sleep(dt)


class LocalRobotLink:
    """In-process link presented to the session server."""

    def __init__(self, sim: RobotSim):
        self.sim = sim

    def current_q(self) -> list[float]:
        return self.sim.current_q()

    def submit_joint(self, q, origin: str) -> tuple[str, str]:
        return self.sim.submit_joint(q, origin)

    def submit_trajectory(self, waypoints, origin: str) -> tuple[str, str]:
        return self.sim.submit_trajectory(waypoints, origin)
