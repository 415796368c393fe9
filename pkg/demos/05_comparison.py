"""Compare the three controllers over a few seeds and print median/IQR statistics.

Run: python3 demos/05_comparison.py [preset] [n_seeds]
"""

import json
import sys

from ppcdom.harness import compare, load_scenario

preset = sys.argv[1] if len(sys.argv) > 1 else "task_a"
n = int(sys.argv[2]) if len(sys.argv) > 2 else 3
summary = compare(load_scenario(preset), ["ppc-rbf", "baseline-rbf", "ppc-broyden"], range(n))
print(summary.success_definition)
for method, s in summary.methods.items():
    ct, sse = s["convergence_time"], s["steady_state_error"]
    print(f"{method:13s} success {s['success_rate']:.2f}  "
          f"convergence {ct['median']:.2f} s (IQR {ct['iqr']:.2f})  "
          f"steady-state {1e3 * sse['median']:.3f} mm (IQR {1e3 * sse['iqr']:.3f})  "
          f"violations {s['violations']}")
print(json.dumps(summary.to_dict()["methods"]["ppc-rbf"], indent=1))
