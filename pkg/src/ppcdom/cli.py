"""Command line entry point: ``ppcdom <babble|run|compare|envelope|demo-target> ...``.

Validation problems (bad scenario file, unknown method, unreadable babbling
log) exit with status 2.  Runs that fail a barrier or the solver are results,
not errors, and exit 0.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .controller import boundaries, envelope_value
from .errors import ConfigurationError, ScenarioError
from .harness import (METHODS, compare, load_scenario, prepare, read_babble, result_dict, run,
                      write_babble, write_csv, write_summary)
from .harness.runner import babble_for


def _seeds(text):
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _stages(scenario, n):
    if n is None:
        return None
    if not 1 <= n <= len(scenario.stages):
        raise ScenarioError("stages", f"--stages must lie in 1..{len(scenario.stages)}")
    return n


def cmd_babble(args):
    sc = load_scenario(args.scenario)
    plant = sc.build_plant()
    ks = sc.keypoint_set(plant)
    stages = sc.stages[:_stages(sc, args.stages)]
    log = babble_for(sc, plant, ks, args.seed, [s.demo for s in stages])
    write_babble(log, args.out)
    print(f"wrote {len(log)} babbling samples to {args.out}")


def cmd_run(args):
    sc = load_scenario(args.scenario)
    n = _stages(sc, args.stages)
    blog = read_babble(args.babble) if args.babble else None
    prep = prepare(sc, args.seed, blog, n)
    if blog is not None and blog.inputs.shape[1] != 12 + 3 * prep.keypoints.n:
        raise ScenarioError("babble", "log dimension does not match the scenario keypoints")
    result = run(sc, args.method, args.seed, n_stages=n, prepared=prep)
    out = Path(args.out)
    write_csv(result.log, out)
    summary = result_dict(result)
    summary.update(scenario=sc.name, fingerprint=sc.fingerprint(),
                   success_threshold=sc.success_threshold())
    write_summary(summary, out.with_suffix(".json"))
    status = "success" if result.success else f"failed ({result.failure or 'threshold'})"
    print(f"{sc.name} {args.method} seed {args.seed}: {status}; "
          f"steady-state {result.steady_state_error:.3e} m, "
          f"convergence {result.convergence_time:.2f} s, {result.violation_count} violations")


def cmd_compare(args):
    sc = load_scenario(args.scenario)
    methods = args.method or ["ppc-rbf", "baseline-rbf", "ppc-broyden"]
    for m in methods:
        if m not in METHODS:
            raise ScenarioError("method", f"unknown method {m!r}")
    seeds = _seeds(args.seeds) if args.seeds else None
    summary = compare(sc, methods, seeds, _stages(sc, args.stages))
    data = summary.to_dict()
    data["runs"] = {m: [result_dict(r) for r in rs] for m, rs in summary.runs.items()}
    write_summary(data, args.out)
    for m, s in summary.methods.items():
        print(f"{m:16s} success {s['success_rate']:.2f}  "
              f"convergence median {s['convergence_time']['median']:.2f} s  "
              f"steady-state median {s['steady_state_error']['median']:.3e} m")


def cmd_envelope(args):
    """Nominal funnels per stage (no auto-widening), stages back to back with pauses."""
    sc = load_scenario(args.scenario)
    stages = sc.stages[:_stages(sc, args.stages)]
    dt = args.dt or sc.dt
    rows = []
    t0 = 0.0
    for i, st in enumerate(stages):
        env = st.funnel(1, t0)
        steps = int(round(st.duration / dt))
        t = t0 + dt * np.arange(steps + 1)
        for tk in t:
            mu, mu_dot = envelope_value(env, tk)
            lo, hi = boundaries(env, tk)
            rows.append([tk, i, *mu, *mu_dot, *lo, *hi])
        t0 = t[-1] + sc.pause
    header = (["t", "stage"] + [f"mu_{a}" for a in "xyz"] + [f"mu_dot_{a}" for a in "xyz"]
              + [f"phi_a_{a}" for a in "xyz"] + [f"phi_b_{a}" for a in "xyz"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join([format(r[0], ".17g"), str(r[1])]
                              + [format(v, ".17g") for v in r[2:]]) + "\n")
    print(f"wrote {len(rows)} envelope samples to {out}")


def cmd_demo_target(args):
    sc = load_scenario(args.scenario)
    prep = prepare(sc, 0, n_stages=_stages(sc, args.stages), with_babble=False)
    p0 = prep.plant.features(prep.keypoints.indices)
    data = {
        "scenario": sc.name,
        "keypoints": list(prep.keypoints.indices),
        "initial": p0.tolist(),
        "targets": [t.tolist() for t in prep.targets],
        "max_abs_displacement": [float(np.max(np.abs(t - p0))) for t in prep.targets],
    }
    write_summary(data, args.out)
    print(f"wrote {len(prep.targets)} stage targets to {args.out}")


def build_parser():
    p = argparse.ArgumentParser(prog="ppcdom", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--scenario", required=True,
                        help="scenario JSON file or preset name (task_a, task_b, task_c)")
        sp.add_argument("--out", required=True, help=out_help)
        sp.add_argument("--stages", type=int, help="use only the first N stages")

    sp = sub.add_parser("babble", help="record a motor-babbling log (CSV)")
    common(sp, "CSV path")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_babble)

    sp = sub.add_parser("run", help="one closed-loop run: CSV time series plus JSON summary")
    common(sp, "CSV path; the summary goes next to it with a .json suffix")
    sp.add_argument("--method", choices=sorted(METHODS), default="ppc-rbf")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--babble", help="reuse a babbling log written by the babble command")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="several methods over several seeds: JSON summary")
    common(sp, "JSON path")
    sp.add_argument("--method", action="append", choices=sorted(METHODS),
                    help="repeat for each method (default: ppc-rbf, baseline-rbf, ppc-broyden)")
    sp.add_argument("--seeds", help="e.g. 0-9 or 0,3,5 (default: the scenario's seeds)")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("envelope", help="dump nominal boundary curves (CSV) for plotting")
    common(sp, "CSV path")
    sp.add_argument("--dt", type=float, help="sample spacing (default: scenario dt)")
    sp.set_defaults(func=cmd_envelope)

    sp = sub.add_parser("demo-target", help="play the demonstrations and record p* per stage (JSON)")
    common(sp, "JSON path")
    sp.set_defaults(func=cmd_demo_target)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ScenarioError, ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
