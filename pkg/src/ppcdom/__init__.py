"""Prescribed-performance shape control of a simulated deformable sheet.

Modules:

- ``plant``: quasi-static mass-spring sheet held by two gripper frames
- ``keypoints``: keypoint selection, farthest point sampling, Chamfer distance
- ``estimator``: RBF network Jacobian estimate, adaptive law, Broyden baseline
- ``controller``: performance envelopes, barrier variable and the control law
- ``monitor``: numeric checks of the barrier/Lyapunov argument
- ``harness``: scenarios, closed-loop runs, comparisons, CSV/JSON output
"""

from .errors import BarrierViolationError, ConfigurationError, ScenarioError, SolverDivergenceError

__version__ = "0.1.0"

__all__ = ["BarrierViolationError", "ConfigurationError", "ScenarioError", "SolverDivergenceError"]
