"""Proximity-triggered virtual fixtures and motion assistance.

A fixture sits on a scene object and switches on when the tool peg comes
within r_on of its center, off again only beyond r_off.  The hysteresis band
keeps fixtures from flickering at the boundary.  Active fixtures blend the
operator's commanded velocity toward the object center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .kinematics import Pose


@dataclass(frozen=True)
class VirtualFixture:
    object_id: str
    center: tuple[float, float, float]
    r_on: float
    r_off: float
    active: bool = False

    def __post_init__(self):
        if not self.r_on < self.r_off:
            raise ValueError("hysteresis band requires r_on < r_off")


def _distance(peg: Pose, center) -> float:
    return math.dist(peg.position, center)


def evaluate_fixtures(peg: Pose, objects: Iterable, prior: Sequence[VirtualFixture],
                      r_on: float = 0.10, r_off: float = 0.15
                      ) -> list[VirtualFixture]:
    """Recompute fixture activation for the given peg pose.

    objects are shareable scene objects (kind SCENE_OBJECT) whose pose dict
    carries the fixture center.  A fixture activates when the peg is closer
    than r_on, deactivates beyond r_off, and in between keeps its prior state.
    Pure function of (peg, objects, prior).
    """
    prior_state = {f.object_id: f.active for f in prior}
    out = []
    for obj in objects:
        if obj.kind != "SCENE_OBJECT":
            raise ValueError(f"fixtures only attach to scene objects, "
                             f"got {obj.kind} for {obj.object_id}")
        center = tuple(float(v) for v in obj.pose["position"])
        d = _distance(peg, center)
        was_active = prior_state.get(obj.object_id, False)
        if d < r_on:
            active = True
        elif d > r_off:
            active = False
        else:
            active = was_active
        out.append(VirtualFixture(obj.object_id, center, r_on, r_off, active))
    return out


def nearest_active(peg: Pose, fixtures: Sequence[VirtualFixture]
                   ) -> VirtualFixture | None:
    best = None
    best_d = math.inf
    for f in fixtures:
        if not f.active:
            continue
        d = _distance(peg, f.center)
        if d < best_d:
            best, best_d = f, d
    return best


def apply_assistance(cmd_velocity, peg: Pose,
                     fixtures: Sequence[VirtualFixture]) -> np.ndarray:
    """Blend a commanded Cartesian velocity toward the nearest active fixture.

    output = (1 - alpha) * cmd + alpha * v_attract with
    alpha = clamp(1 - d / r_on, 0, 1), where v_attract points from the peg to
    the fixture center at the commanded speed (zero when d < 1e-9).  With no
    active fixture the command passes through unchanged.
    """
    cmd = np.asarray(cmd_velocity, dtype=float)
    fixture = nearest_active(peg, fixtures)
    if fixture is None:
        return cmd
    d = _distance(peg, fixture.center)
    alpha = min(max(1.0 - d / fixture.r_on, 0.0), 1.0)
    if d < 1e-9:
        v_attract = np.zeros(3)
    else:
        direction = (np.asarray(fixture.center) - np.asarray(peg.position)) / d
        v_attract = direction * float(np.linalg.norm(cmd))
    return (1.0 - alpha) * cmd + alpha * v_attract


def deactivate_all(fixtures: Sequence[VirtualFixture]) -> list[VirtualFixture]:
    return [replace(f, active=False) for f in fixtures]
