"""Performance funnels, the barrier variable and the runtime stability checks.

Run: python3 demos/02_envelope_and_barrier.py
"""

import numpy as np

from ppcdom import controller as ctl
from ppcdom import monitor
from ppcdom.errors import BarrierViolationError

env = ctl.PerformanceEnvelope.per_axis(ctl.TABLE_I["task_a"], 1)
for t in (0.0, 1.0, 5.0, 20.0):
    mu, mu_dot = ctl.envelope_value(env, t)
    print(f"t={t:5.1f}  mu_x={mu[0]:.6f}  mu_dot_x={mu_dot[0]:+.6f}  "
          f"eta={ctl.eta_gain(env, t, 0.5)[0]:.4f}")

# the barrier variable grows without bound as the error nears the wall
for frac in (0.0, 0.5, 0.9, 0.99):
    e = np.array([frac * 0.1, 0.0, 0.0])
    z = ctl.z_vector(e, env, 0.0)
    xi = ctl.transfer_error(e, *ctl.boundaries(env, 0.0))
    print(f"e/mu={frac:4.2f}  z={z[0]:10.3f}  V1={monitor.barrier_v1(xi):.4f}")

try:
    ctl.z_vector(np.array([0.1, 0.0, 0.0]), env, 0.0)
except BarrierViolationError as exc:
    print("on the wall:", exc)

# a new stage with a large error re-anchors the funnel and widens it where needed
wide = ctl.reset_stage(env, 10.0, np.array([0.12, 0.02, 0.0]))
print("re-anchored mu0:", wide.mu0, "t0:", wide.t0)

v = np.random.default_rng(0).uniform(0, 1, 10)
print("log bound holds on 10 random draws:", monitor.lemma1_check(v, np.arange(10) % 5 + 1).all())
