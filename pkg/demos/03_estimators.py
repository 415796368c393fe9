"""Motor babbling, the RBF prefit, online adaptation and Broyden updates.

Run: python3 demos/03_estimators.py
"""

import numpy as np

from ppcdom.harness import load_scenario
from ppcdom.harness.runner import babble_for, make_estimator
from ppcdom.monitor import jacobian_residual

sc = load_scenario("task_b")
plant = sc.build_plant()
ks = sc.keypoint_set(plant)
log = babble_for(sc, plant, ks, seed=0)  # anchored along the demonstrated motion
print(f"{len(log)} babbling samples, input dimension {log.inputs.shape[1]}")

rbf = make_estimator(sc, "ppc-rbf", log, seed=0)
broyden = make_estimator(sc, "ppc-broyden", log, seed=0)
print(f"RBF basis: {rbf.basis.size} centers, width {rbf.basis.widths[0]:.3f}")


def x():
    return np.concatenate([plant.configuration(), plant.features(ks.indices)])


rng = np.random.default_rng(1)
twists = rng.uniform(-0.03, 0.03, (50, 12))
j_fd = plant.finite_difference_jacobian(ks.indices)
for name, est in (("rbf", rbf), ("broyden", broyden)):
    res = np.median([jacobian_residual(est.jacobian(x()), j_fd, u) for u in twists])
    print(f"{name:8s} median relative velocity error at the start: {res:.3f}")

# drive along stage 1's demonstration and let Broyden learn from each step
demo_twist, seconds = sc.stages[0].demo[0]
for _ in range(int(seconds / sc.dt)):
    p = plant.features(ks.indices)
    plant.step(demo_twist, sc.dt)
    broyden.observe(plant.features(ks.indices) - p, demo_twist * sc.dt)
j_fd = plant.finite_difference_jacobian(ks.indices)
for name, est in (("rbf", rbf), ("broyden", broyden)):
    res = np.median([jacobian_residual(est.jacobian(x()), j_fd, u) for u in twists])
    print(f"{name:8s} after the demonstration: {res:.3f}")
