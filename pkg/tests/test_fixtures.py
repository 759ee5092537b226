"""Fixture hysteresis against a brute-force sweep, and the blend law."""

import math

import numpy as np
import pytest

from telecollab.fixtures import (VirtualFixture, apply_assistance,
                                 evaluate_fixtures, nearest_active)
from telecollab.kinematics import Pose
from telecollab.session import ShareableObject

R_ON, R_OFF = 0.10, 0.15
IDENT_Q = (1.0, 0.0, 0.0, 0.0)


def scene_obj(object_id="peg", center=(0.0, 0.0, 0.0)):
    return ShareableObject(object_id, "SCENE_OBJECT",
                           {"position": list(center),
                            "orientation": [1.0, 0.0, 0.0, 0.0]})


def peg_at(x):
    return Pose((x, 0.0, 0.0), IDENT_Q)


def sweep_distances():
    # 0.20 m -> 0.05 m -> 0.20 m in 1 mm steps.
    down = [0.20 - 0.001 * i for i in range(151)]
    return down + list(reversed(down))[1:]


def oracle_sweep(distances):
    """Independent hysteresis walk over the sweep."""
    active = False
    events = []
    for i, d in enumerate(distances):
        if not active and d < R_ON:
            active = True
            events.append(("on", i, d))
        elif active and d > R_OFF:
            active = False
            events.append(("off", i, d))
    return events


def test_far_peg_stays_inactive():
    fixtures = evaluate_fixtures(peg_at(1.0), [scene_obj()], [], R_ON, R_OFF)
    assert fixtures == [VirtualFixture("peg", (0.0, 0.0, 0.0), R_ON, R_OFF,
                                       False)]


def test_sweep_matches_brute_force_oracle():
    distances = sweep_distances()
    expected = oracle_sweep(distances)
    assert [e[0] for e in expected] == ["on", "off"]
    obj = scene_obj()
    prior = []
    transitions = []
    state = False
    for i, d in enumerate(distances):
        prior = evaluate_fixtures(peg_at(d), [obj], prior, R_ON, R_OFF)
        if prior[0].active != state:
            state = prior[0].active
            transitions.append(("on" if state else "off", i, d))
    assert transitions == expected
    # Activation at the first sample below r_on, deactivation at the first
    # sample above r_off, each exactly once.
    on_idx = next(i for i, d in enumerate(distances) if d < R_ON)
    off_idx = next(i for i, d in enumerate(distances)
                   if i > on_idx and d > R_OFF)
    assert transitions[0][1] == on_idx
    assert transitions[1][1] == off_idx


def test_hysteresis_band_retains_prior_state():
    obj = scene_obj()
    mid = (R_ON + R_OFF) / 2
    active_prior = [VirtualFixture("peg", (0.0, 0.0, 0.0), R_ON, R_OFF, True)]
    idle_prior = [VirtualFixture("peg", (0.0, 0.0, 0.0), R_ON, R_OFF, False)]
    assert evaluate_fixtures(peg_at(mid), [obj], active_prior,
                             R_ON, R_OFF)[0].active
    assert not evaluate_fixtures(peg_at(mid), [obj], idle_prior,
                                 R_ON, R_OFF)[0].active


def test_evaluate_is_pure():
    obj = scene_obj()
    prior = [VirtualFixture("peg", (0.0, 0.0, 0.0), R_ON, R_OFF, True)]
    a = evaluate_fixtures(peg_at(0.12), [obj], prior, R_ON, R_OFF)
    b = evaluate_fixtures(peg_at(0.12), [obj], prior, R_ON, R_OFF)
    assert a == b
    assert prior[0].active  # input untouched


def test_rejects_phantom_objects():
    phantom = ShareableObject("phantom:u", "PHANTOM_ROBOT", [0.0] * 6)
    with pytest.raises(ValueError):
        evaluate_fixtures(peg_at(1.0), [phantom], [])


def test_no_active_fixture_passthrough_is_bit_identical():
    cmd = np.array([0.017, -0.23, 1e-9])
    fixtures = [VirtualFixture("peg", (5.0, 0.0, 0.0), R_ON, R_OFF, False)]
    out = apply_assistance(cmd, peg_at(0.0), fixtures)
    assert out.tobytes() == cmd.tobytes()
    out2 = apply_assistance(cmd, peg_at(0.0), [])
    assert out2.tobytes() == cmd.tobytes()


def test_assistance_at_center_is_zero():
    fixtures = [VirtualFixture("peg", (0.0, 0.0, 0.0), R_ON, R_OFF, True)]
    out = apply_assistance([0.2, 0.1, -0.3], peg_at(0.0), fixtures)
    assert np.array_equal(out, np.zeros(3))


def test_equal_blend_at_half_activation_radius():
    # d = r_on / 2, command orthogonal to the attraction direction.
    d = R_ON / 2
    cmd = np.array([0.0, 0.2, 0.0])
    fixtures = [VirtualFixture("peg", (d, 0.0, 0.0), R_ON, R_OFF, True)]
    out = apply_assistance(cmd, peg_at(0.0), fixtures)
    # Independent calculation with plain floats:
    alpha = 1.0 - d / R_ON
    speed = math.sqrt(0.2 * 0.2)
    expected = [(1 - alpha) * 0.0 + alpha * speed,
                (1 - alpha) * 0.2,
                0.0]
    assert alpha == 0.5
    assert out == pytest.approx(expected, abs=1e-15)


def test_active_fixture_inside_band_has_zero_pull():
    # Between r_on and r_off alpha clamps to 0: active but not yet pulling.
    d = 0.12
    cmd = np.array([0.05, 0.0, 0.0])
    fixtures = [VirtualFixture("peg", (d, 0.0, 0.0), R_ON, R_OFF, True)]
    out = apply_assistance(cmd, peg_at(0.0), fixtures)
    assert out == pytest.approx(cmd, abs=0)


def test_nearest_active_fixture_wins():
    near = VirtualFixture("near", (0.05, 0.0, 0.0), R_ON, R_OFF, True)
    far = VirtualFixture("far", (0.09, 0.0, 0.0), R_ON, R_OFF, True)
    assert nearest_active(peg_at(0.0), [far, near]) is near


def test_fixture_requires_hysteresis_band():
    with pytest.raises(ValueError):
        VirtualFixture("x", (0.0, 0.0, 0.0), 0.2, 0.1)
