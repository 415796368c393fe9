"""One closed-loop run per controller on task_a, with the time series written to CSV.

Run: python3 demos/04_closed_loop.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from ppcdom.harness import load_scenario, prepare, run, write_csv

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
sc = load_scenario("task_a")
prep = prepare(sc, seed=0)  # targets and babbling shared by both controllers
print(f"target shift {1e3 * np.max(np.abs(prep.targets[0] - prep.plant.features(prep.keypoints.indices))):.1f} mm, "
      f"success threshold {1e3 * sc.success_threshold():.1f} mm")

for method in ("ppc-rbf", "baseline-rbf"):
    res = run(sc, method, 0, prepared=prep)
    path = write_csv(res.log, out / f"task_a_{method}.csv")
    xi = res.log.array("xi")
    print(f"{method:13s} success={res.success} convergence={res.convergence_time:.2f} s "
          f"steady-state={1e3 * res.steady_state_error:.3f} mm max xi={xi.max():.3f} "
          f"violations={res.violation_count} -> {path}")
    norm = res.log.array("norm_e")
    for t in (0.0, 0.5, 1.0, 2.0, 5.0):
        k = int(round(t / sc.dt))
        print(f"    t={t:4.1f}s |e|={1e3 * norm[k]:7.3f} mm")
