"""Build the slit sheet, pick keypoints and look at its deformation Jacobian.

Run: python3 demos/01_plant_and_keypoints.py
"""

import numpy as np

from ppcdom.harness import load_scenario
from ppcdom.keypoints import chamfer_distance

sc = load_scenario("task_a")
plant = sc.build_plant()  # grasp, then the 1 cm pre-stretch from the scenario's setup
ks = sc.keypoint_set(plant)
print(f"{plant.mesh.n_nodes} nodes, {len(plant.mesh.edges)} springs, "
      f"{len(plant.free)} free after grasping")
print("keypoints (farthest point sampling inside the ROI):", ks.indices)

p0 = plant.features(ks.indices)
print("gripper configuration [v0, w0, v1, w1] pose:", np.round(plant.configuration(), 4))

# finite-difference Jacobian: keypoint velocity per unit twist
jac = plant.finite_difference_jacobian(ks.indices)
sv = np.linalg.svd(jac, compute_uv=False)
print("Jacobian singular values:", np.round(sv, 4))

# pull the grippers apart for two seconds; the slit opens
u = np.zeros(12)
u[0], u[6] = -0.01, 0.01
for _ in range(40):
    plant.step(u, 0.05)
p1 = plant.features(ks.indices)
print("keypoint displacement after opening the slit (mm):")
print(np.round(1e3 * (p1 - p0).reshape(-1, 3), 2))
print(f"chamfer distance to the start shape: {chamfer_distance(p0, p1):.3e} m^2")
print("linear prediction vs truth (mm):",
      np.round(1e3 * np.linalg.norm(jac @ u * 2.0 - (p1 - p0)), 3), "error over",
      np.round(1e3 * np.linalg.norm(p1 - p0), 3), "of motion")
