"""The simulated arm: forward/inverse kinematics and fixture assistance."""

import numpy as np

from telecollab import kinematics as K
from telecollab.fixtures import apply_assistance, evaluate_fixtures
from telecollab.session import default_scene

params = K.default_robot_params()

q = np.array([0.4, -0.6, 0.5, 0.1, -0.4, 0.2])
pose = K.forward_kinematics(q, params)
print("tool pose at q =", np.round(q, 2))
print("  position   ", np.round(pose.position, 4))
print("  quaternion ", np.round(pose.orientation, 4))

solution = K.inverse_kinematics(pose, seed=np.zeros(6), params=params)
residual = K.pose_error(pose, K.fk_matrix(solution, params))
print("\nIK from the home seed recovers the pose:")
print("  solution   ", np.round(solution, 4))
print("  residual   ", f"{np.linalg.norm(residual[:3]):.2e} m, "
      f"{np.linalg.norm(residual[3:]):.2e} rad")

print("\nsweeping the peg toward a scene object (hysteresis band 0.10/0.15 m):")
scene = default_scene()
target = scene[0]
center = np.array(target.pose["position"])
prior = []
for distance in (0.30, 0.16, 0.12, 0.09, 0.12, 0.16):
    peg = K.Pose(tuple(center + [distance, 0, 0]), (1.0, 0.0, 0.0, 0.0))
    prior = evaluate_fixtures(peg, [target], prior, 0.10, 0.15)
    print(f"  d = {distance:.2f} m -> fixture "
          f"{'ACTIVE' if prior[0].active else 'idle'}")

print("\nassistance blends the operator's velocity toward the object:")
peg = K.Pose(tuple(center + [0.05, 0, 0]), (1.0, 0.0, 0.0, 0.0))
fixtures = evaluate_fixtures(peg, [target], prior, 0.10, 0.15)
cmd = np.array([0.0, 0.1, 0.0])
out = apply_assistance(cmd, peg, fixtures)
print("  command   ", cmd)
print("  assisted  ", np.round(out, 4), "(half pull at d = r_on/2)")
