"""6R serial-arm kinematics over a configurable DH table.

The arm is described by standard Denavit-Hartenberg rows (a, d, alpha) plus
per-joint limits.  Nothing here is tied to a particular manufacturer; the
default table is a desk-scale 6R with a spherical-ish wrist.  All angles are
radians, all lengths meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import xmlutil
from .xmlutil import Node


class KinematicsError(Exception):
    pass


class JointLimitError(KinematicsError):
    """A joint angle falls outside its configured interval."""

    def __init__(self, joint_index: int, value: float, lo: float, hi: float):
        self.joint_index = joint_index
        super().__init__(
            f"joint {joint_index} angle {value:.6f} rad outside "
            f"[{lo:.6f}, {hi:.6f}]")


class UnreachableError(KinematicsError):
    """IK failed to converge; carries the best residual seen."""

    def __init__(self, pos_residual: float, ang_residual: float):
        self.pos_residual = pos_residual
        self.ang_residual = ang_residual
        super().__init__(
            f"target unreachable: best residual {pos_residual:.3e} m / "
            f"{ang_residual:.3e} rad")


@dataclass(frozen=True)
class Pose:
    """Cartesian tool pose: position (3,) and unit quaternion (w, x, y, z)."""

    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]

    def __post_init__(self):
        norm = math.sqrt(sum(c * c for c in self.orientation))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {norm} deviates from 1")

    def to_dict(self) -> dict:
        return {"position": [float(v) for v in self.position],
                "orientation": [float(v) for v in self.orientation]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(tuple(float(v) for v in d["position"]),
                   tuple(float(v) for v in d["orientation"]))


@dataclass(frozen=True)
class RobotParams:
    """DH table, joint limits and motion/fixture settings."""

    name: str
    a: tuple[float, ...]
    d: tuple[float, ...]
    alpha: tuple[float, ...]
    limit_min: tuple[float, ...]
    limit_max: tuple[float, ...]
    v_max: float = 0.5           # rad/s per joint
    tick_dt: float = 0.01        # s
    r_on: float = 0.10           # fixture activation radius, m
    r_off: float = 0.15          # fixture deactivation radius, m

    def __post_init__(self):
        lengths = {len(self.a), len(self.d), len(self.alpha),
                   len(self.limit_min), len(self.limit_max)}
        if lengths != {6}:
            raise ValueError("DH table and limits must all have 6 rows")
        if not self.r_on < self.r_off:
            raise ValueError("fixture hysteresis requires r_on < r_off")


def default_robot_params() -> RobotParams:
    deg = math.pi / 180.0
    return RobotParams(
        name="desk_6r",
        a=(0.0, 0.30, 0.075, 0.0, 0.0, 0.0),
        d=(0.33, 0.0, 0.0, 0.32, 0.0, 0.08),
        alpha=(-90 * deg, 0.0, -90 * deg, 90 * deg, -90 * deg, 0.0),
        limit_min=(-170 * deg,) * 6,
        limit_max=(170 * deg,) * 6,
    )


def check_limits(q, params: RobotParams) -> None:
    """Raise JointLimitError naming the first out-of-range joint."""
    for i in range(6):
        v = float(q[i])
        if not math.isfinite(v):
            raise JointLimitError(i, v, params.limit_min[i], params.limit_max[i])
        if v < params.limit_min[i] or v > params.limit_max[i]:
            raise JointLimitError(i, v, params.limit_min[i], params.limit_max[i])


def dh_transform(theta: float, d: float, a: float, alpha: float) -> np.ndarray:
    """Homogeneous transform of one standard-DH row."""
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


@lru_cache(maxsize=8)
def _dh_arrays(a: tuple, d: tuple, alpha: tuple):
    alpha_arr = np.array(alpha)
    return np.array(a), np.array(d), np.cos(alpha_arr), np.sin(alpha_arr)


def _chain_transforms(q, params: RobotParams
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tool transform plus all joint frame origins and z axes (7 each)."""
    a, d, ca, sa = _dh_arrays(params.a, params.d, params.alpha)
    q = np.asarray(q, dtype=float)
    ct, st = np.cos(q), np.sin(q)
    m = np.zeros((6, 4, 4))
    m[:, 0, 0] = ct
    m[:, 0, 1] = -st * ca
    m[:, 0, 2] = st * sa
    m[:, 0, 3] = a * ct
    m[:, 1, 0] = st
    m[:, 1, 1] = ct * ca
    m[:, 1, 2] = -ct * sa
    m[:, 1, 3] = a * st
    m[:, 2, 1] = sa
    m[:, 2, 2] = ca
    m[:, 2, 3] = d
    m[:, 3, 3] = 1.0
    T = np.eye(4)
    origins = np.zeros((7, 3))
    axes = np.zeros((7, 3))
    axes[0, 2] = 1.0
    for i in range(6):
        T = T @ m[i]
        origins[i + 1] = T[:3, 3]
        axes[i + 1] = T[:3, 2]
    return T, origins, axes


def fk_matrix(q, params: RobotParams) -> np.ndarray:
    """Tool transform as a 4x4 homogeneous matrix."""
    return _chain_transforms(q, params)[0]


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, canonical w >= 0."""
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        quat = np.array([0.25 * s,
                         (R[2, 1] - R[1, 2]) / s,
                         (R[0, 2] - R[2, 0]) / s,
                         (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
            quat = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                             (R[0, 1] + R[1, 0]) / s,
                             (R[0, 2] + R[2, 0]) / s])
        elif i == 1:
            s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
            quat = np.array([(R[0, 2] - R[2, 0]) / s,
                             (R[0, 1] + R[1, 0]) / s, 0.25 * s,
                             (R[1, 2] + R[2, 1]) / s])
        else:
            s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
            quat = np.array([(R[1, 0] - R[0, 1]) / s,
                             (R[0, 2] + R[2, 0]) / s,
                             (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    quat = quat / np.linalg.norm(quat)
    # Canonical sign: first nonzero component positive, starting from w.
    for c in quat:
        if abs(c) > 1e-12:
            if c < 0:
                quat = -quat
            break
    return quat


def quat_to_rot(quat) -> np.ndarray:
    w, x, y, z = (float(v) for v in quat)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_vector(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector (log map) of a rotation matrix."""
    cos_a = max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0))
    angle = math.acos(cos_a)
    if angle < 1e-12:
        return np.zeros(3)
    if math.pi - angle < 1e-6:
        # Near pi the antisymmetric part vanishes; recover the axis from the
        # diagonal and fix signs from the off-diagonal products.
        axis = np.sqrt(np.maximum(np.diag(R) + 1.0, 0.0) / 2.0)
        k = int(np.argmax(axis))
        for j in range(3):
            if j != k and axis[k] > 1e-9:
                axis[j] = R[k, j] / (2.0 * axis[k])
        axis = axis / np.linalg.norm(axis)
        return axis * angle
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return axis * (angle / (2.0 * math.sin(angle)))


def forward_kinematics(q, params: RobotParams) -> Pose:
    """Tool pose of joint configuration q (deterministic, total on finite q)."""
    T = fk_matrix(q, params)
    quat = rot_to_quat(T[:3, :3])
    return Pose(tuple(float(v) for v in T[:3, 3]),
                tuple(float(v) for v in quat))


def fk_jacobian(q, params: RobotParams) -> tuple[np.ndarray, np.ndarray]:
    """One chain walk yielding both the tool transform and the geometric
    Jacobian (linear rows over angular rows)."""
    T, origins, axes = _chain_transforms(q, params)
    J = np.empty((6, 6))
    J[:3, :] = np.cross(axes[:6], origins[6] - origins[:6]).T
    J[3:, :] = axes[:6].T
    return T, J


def jacobian(q, params: RobotParams) -> np.ndarray:
    """Geometric Jacobian (linear over angular) at q."""
    return fk_jacobian(q, params)[1]


def pose_error(target: Pose, current_T: np.ndarray) -> np.ndarray:
    """6-vector twist error from the current transform to the target pose."""
    return _pose_error(np.asarray(target.position),
                       quat_to_rot(target.orientation), current_T)


def _pose_error(p_target: np.ndarray, R_target: np.ndarray,
                current_T: np.ndarray) -> np.ndarray:
    e = np.empty(6)
    e[:3] = p_target - current_T[:3, 3]
    e[3:] = rotation_vector(R_target @ current_T[:3, :3].T)
    return e


_EYE6 = np.eye(6)


def _dls_solve(p_t: np.ndarray, R_t: np.ndarray, start: np.ndarray,
               params: RobotParams, max_iters: int, damping: float,
               step_clamp: float, tol: float
               ) -> tuple[np.ndarray, float, float]:
    q = np.clip(np.asarray(start, dtype=float),
                params.limit_min, params.limit_max)
    # Damping adapts around its configured seed: a fixed value stalls when
    # the smallest singular value dips near it.
    lam = damping
    T, J = fk_jacobian(q, params)
    e = _pose_error(p_t, R_t, T)
    rejections = 0
    for _ in range(max_iters):
        pos_err = float(np.linalg.norm(e[:3]))
        ang_err = float(np.linalg.norm(e[3:]))
        if pos_err < tol and ang_err < tol:
            return q, pos_err, ang_err
        dq = J.T @ np.linalg.solve(J @ J.T + lam * lam * _EYE6, e)
        peak = float(np.max(np.abs(dq)))
        if peak > step_clamp:
            dq *= step_clamp / peak
        q_next = np.clip(q + dq, params.limit_min, params.limit_max)
        T_next, J_next = fk_jacobian(q_next, params)
        e_next = _pose_error(p_t, R_t, T_next)
        if np.linalg.norm(e_next) < np.linalg.norm(e):
            q, e, J = q_next, e_next, J_next
            lam = max(lam * 0.5, 1e-5)
            rejections = 0
        else:
            lam = min(lam * 4.0, 1.0)
            rejections += 1
            if rejections >= 12:
                break  # damping saturated with no progress: stalled
    return q, float(np.linalg.norm(e[:3])), float(np.linalg.norm(e[3:]))


def inverse_kinematics(target: Pose, seed, params: RobotParams,
                       max_iters: int = 200, damping: float = 0.01,
                       step_clamp: float = 0.2, restarts: int = 128
                       ) -> np.ndarray:
    """Solve for a joint configuration whose FK matches target.

    Damped least squares from the seed, with deterministic random restarts
    when a descent stalls.  The returned solution always satisfies FK(q)
    within 1e-6 m / 1e-6 rad of the target and lies inside the joint limits;
    otherwise UnreachableError carries the best residual seen.
    """
    p_t = np.asarray(target.position, dtype=float)
    R_t = quat_to_rot(target.orientation)
    rng = np.random.default_rng(0x6D0F)
    best_pos, best_ang = math.inf, math.inf
    for attempt in range(restarts + 1):
        start = (np.asarray(seed, dtype=float) if attempt == 0
                 else rng.uniform(params.limit_min, params.limit_max))
        q, pos_err, ang_err = _dls_solve(
            p_t, R_t, start, params, max_iters, damping, step_clamp,
            tol=1e-10)
        if pos_err < 1e-6 and ang_err < 1e-6:
            return q
        if pos_err + ang_err < best_pos + best_ang:
            best_pos, best_ang = pos_err, ang_err
    raise UnreachableError(best_pos, best_ang)


# ---------------------------------------------------------------------------
# Robot config file (angles in degrees on disk)

def robot_params_to_xml(params: RobotParams) -> str:
    deg = 180.0 / math.pi
    root = Node("robot", {"name": params.name})
    dh = Node("dh")
    for i in range(6):
        dh.children.append(Node("joint", {
            "a": xmlutil.fmt_float(params.a[i]),
            "d": xmlutil.fmt_float(params.d[i]),
            "alpha": xmlutil.fmt_float(params.alpha[i] * deg),
            "limit_min": xmlutil.fmt_float(params.limit_min[i] * deg),
            "limit_max": xmlutil.fmt_float(params.limit_max[i] * deg),
        }))
    root.children.append(dh)
    root.children.append(Node("motion", {
        "v_max": xmlutil.fmt_float(params.v_max),
        "tick_dt": xmlutil.fmt_float(params.tick_dt)}))
    root.children.append(Node("fixtures", {
        "r_on": xmlutil.fmt_float(params.r_on),
        "r_off": xmlutil.fmt_float(params.r_off)}))
    return xmlutil.emit(root)


def robot_params_from_xml(text: str) -> RobotParams:
    rad = math.pi / 180.0
    root = xmlutil.parse_xml(text)
    xmlutil.require_tag(root, "robot")
    xmlutil.check_children(root, ("dh", "motion", "fixtures"))
    attrs = xmlutil.get_attrs(root, {"name": str})
    (dh,) = root.find_all("dh") or (None,)
    if dh is None:
        raise xmlutil.XmlError("<robot> requires a <dh> element")
    xmlutil.check_children(dh, ("joint",))
    rows = []
    for joint in dh.find_all("joint"):
        rows.append(xmlutil.get_attrs(joint, {
            "a": float, "d": float, "alpha": float,
            "limit_min": float, "limit_max": float}))
    if len(rows) != 6:
        raise xmlutil.XmlError(f"<dh> must contain 6 joints, found {len(rows)}")
    motion = {"v_max": 0.5, "tick_dt": 0.01}
    for m in root.find_all("motion"):
        motion = xmlutil.get_attrs(m, {"v_max": float, "tick_dt": float})
    fixtures = {"r_on": 0.10, "r_off": 0.15}
    for f in root.find_all("fixtures"):
        fixtures = xmlutil.get_attrs(f, {"r_on": float, "r_off": float})
    return RobotParams(
        name=attrs["name"],
        a=tuple(r["a"] for r in rows),
        d=tuple(r["d"] for r in rows),
        alpha=tuple(r["alpha"] * rad for r in rows),
        limit_min=tuple(r["limit_min"] * rad for r in rows),
        limit_max=tuple(r["limit_max"] * rad for r in rows),
        v_max=motion["v_max"],
        tick_dt=motion["tick_dt"],
        r_on=fixtures["r_on"],
        r_off=fixtures["r_off"],
    )
