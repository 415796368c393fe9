"""Run orchestration: motor babbling, target recording, the staged closed loop and comparisons."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import controller as ctl
from ..errors import BarrierViolationError, SolverDivergenceError
from ..estimator import (BroydenState, RbfBasis, adapt, broyden_update, fit_constant_jacobian,
                         make_basis, predict_jacobian, prefit, rbf_features)
from ..keypoints import KeypointSet, extract_features
from ..monitor import StabilityRecord, log_step
from ..plant import CONFIG_DIM
from .scenario import Scenario

log = logging.getLogger(__name__)

METHODS = {
    "ppc-rbf": ("ppc", "rbf"),
    "baseline-rbf": ("baseline", "rbf"),
    "ppc-broyden": ("ppc", "broyden"),
    "baseline-broyden": ("baseline", "broyden"),
}


@dataclass
class BabbleLog:
    inputs: np.ndarray  # (S, 12 + 3n): [configuration, features]
    controls: np.ndarray  # (S, 12)
    velocities: np.ndarray  # (S, 3n)

    def __len__(self):
        return len(self.controls)


def demo_path(plant, demos, dt) -> list:
    """Plant states visited while playing the demonstrations (initial state included).

    The plant is left at the end of the last demonstration.
    """
    states = [plant.state()]
    for segments in demos:
        for twist, seconds in segments:
            for _ in range(int(round(seconds / dt))):
                plant.step(np.asarray(twist, dtype=float), dt)
                states.append(plant.state())
    return states


def babble(plant, ks: KeypointSet, n_samples, rng, dt, speed_limit, radius=(0.005, 0.02),
           noise_std=0.0, anchors=None) -> BabbleLog:
    """Random small motions around a set of anchor states.

    Each sample restores a random anchor (default: the current state), moves
    the grippers by a random offset (uniform per channel, ``radius`` = (m,
    rad)), then applies a random twist bounded by ``speed_limit`` per channel
    for ``dt`` and records the keypoint velocity by differencing.  The plant
    is restored afterwards.
    """
    base = plant.state()
    anchors = [base] if not anchors else anchors
    bound = np.tile(np.repeat(radius, 3), 2)
    xs, us, vs = [], [], []
    try:
        for _ in range(n_samples):
            plant.restore(anchors[rng.integers(len(anchors))])
            offset = rng.uniform(-bound, bound)
            if np.any(offset):
                plant.step(offset, 1.0)
            p0 = extract_features(plant, ks, noise_std, rng)
            x = np.concatenate([plant.configuration(), p0])
            u = rng.uniform(-speed_limit, speed_limit, CONFIG_DIM)
            plant.step(u, dt)
            p1 = extract_features(plant, ks, noise_std, rng)
            xs.append(x)
            us.append(u)
            vs.append((p1 - p0) / dt)
    finally:
        plant.restore(base)
    return BabbleLog(np.array(xs), np.array(us), np.array(vs))


def record_target(plant, ks: KeypointSet, demos, dt) -> list[np.ndarray]:
    """Play demonstration twists open loop; the features at the end of each stage are its target.

    ``demos`` holds one list of ``(twist, seconds)`` segments per stage; stages
    chain.  The plant is reset to its initial state afterwards.
    """
    base = plant.state()
    targets = []
    try:
        for segments in demos:
            demo_path(plant, [segments], dt)
            targets.append(plant.features(ks.indices).copy())
    finally:
        plant.restore(base)
    return targets


# -- Jacobian sources ---------------------------------------------------------

class RbfEstimator:
    def __init__(self, basis: RbfBasis, weights, gamma, gain=1.0, max_norm=1e3):
        self.basis = basis
        self.weights = weights
        self.gamma = gamma
        self.gain = gain
        self.max_norm = max_norm
        self._theta = None

    def jacobian(self, x):
        self._theta = rbf_features(x, self.basis)
        return predict_jacobian(self.weights, self._theta)

    def observe(self, dp, dq):
        pass

    def adapt(self, u, drive, dt):
        self.weights = adapt(self.weights, self._theta, u, drive, self.gamma, dt, self.gain,
                             self.max_norm)


class BroydenEstimator:
    def __init__(self, jacobian, damping=1.0):
        self.state = BroydenState(np.array(jacobian, dtype=float), damping)
        self.weights = None

    def jacobian(self, x):
        return self.state.jacobian

    def observe(self, dp, dq):
        self.state = broyden_update(self.state, dp, dq)

    def adapt(self, u, drive, dt):
        pass


class FixedEstimator:
    """A known Jacobian (e.g. the finite-difference oracle or a linear plant's)."""

    def __init__(self, jacobian):
        self.j = np.asarray(jacobian, dtype=float)
        self.weights = None

    def jacobian(self, x):
        return self.j

    def observe(self, dp, dq):
        pass

    def adapt(self, u, drive, dt):
        pass


# -- logging ------------------------------------------------------------------

@dataclass
class RunLog:
    n_channels: int
    t: list = field(default_factory=list)
    stage: list = field(default_factory=list)
    phase: list = field(default_factory=list)  # "control" or "pause"
    t0: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    e: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    phi_a: list = field(default_factory=list)
    phi_b: list = field(default_factory=list)
    u: list = field(default_factory=list)
    norm_e: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    def append(self, t, stage, phase, env, mu, e, xi, phi_a, phi_b, u, record: StabilityRecord):
        self.t.append(float(t))
        self.stage.append(stage)
        self.phase.append(phase)
        self.t0.append(env.t0)
        self.mu.append(np.array(mu, dtype=float))
        self.e.append(np.array(e, dtype=float))
        self.xi.append(np.array(xi, dtype=float))
        self.phi_a.append(np.array(phi_a, dtype=float))
        self.phi_b.append(np.array(phi_b, dtype=float))
        self.u.append(np.array(u, dtype=float))
        self.norm_e.append(float(np.linalg.norm(e)))
        self.records.append(record)

    def array(self, name):
        values = getattr(self, name)
        if name in ("e", "xi", "phi_a", "phi_b", "mu"):
            return np.array(values).reshape(len(values), self.n_channels)
        if name == "u":
            return np.array(values).reshape(len(values), CONFIG_DIM)
        return np.array(values)


@dataclass
class RunResult:
    method: str
    seed: int
    success: bool
    steady_state_error: float
    convergence_time: float
    violation_count: int
    log: RunLog
    failure: str | None = None
    stage_times: list = field(default_factory=list)
    final_error: float = np.nan


def _convergence(log: RunLog, stage, threshold, dt, duration):
    idx = [k for k, (s, ph) in enumerate(zip(log.stage, log.phase)) if s == stage and ph == "control"]
    steps = int(round(duration / dt))
    if len(idx) < steps:
        return duration  # aborted inside this stage
    err = np.array([np.max(np.abs(log.e[k])) for k in idx])
    bad = np.nonzero(err > threshold)[0]
    if len(bad) == 0:
        return 0.0
    if bad[-1] == len(err) - 1:
        return duration
    return (bad[-1] + 1) * dt


def simulate(plant, ks: KeypointSet, targets, stages, gains: ctl.ControllerGains, method,
             estimator, dt, pause=0.0, noise_std=0.0, rng=None, success_threshold=None,
             settle_window=1.0, seed=0) -> RunResult:
    """Staged closed loop.

    For every stage: re-anchor the funnels at the current time (widening
    ``mu0`` if the new error starts outside), run ``duration / dt`` control
    steps, then hold ``u = 0`` for ``pause`` seconds before the next stage.
    A funnel-based controller stops at the first boundary violation.
    """
    law, _ = METHODS[method] if method in METHODS else (method, None)
    n = len(ks.indices)
    runlog = RunLog(3 * n)
    if success_threshold is None:
        success_threshold = 1.5 * max(s.delta * max(v[1] for v in s.envelope.values())
                                      for s in stages)
    rng = rng if rng is not None else np.random.default_rng(seed)
    step = 0
    t = 0.0
    failure = None
    violations = 0
    p_prev = u_prev = None

    def measure():
        return extract_features(plant, ks, noise_std, rng)

    for s_idx, (stage, target) in enumerate(zip(stages, targets)):
        p = measure()
        env = ctl.reset_stage(stage.funnel(n), t, p - target)
        steps = int(round(stage.duration / dt))
        hold = int(round(pause / dt)) if s_idx < len(stages) - 1 else 0
        for k in range(steps + hold):
            phase = "control" if k < steps else "pause"
            if k > 0:
                p = measure()
            if p_prev is not None:
                estimator.observe(p - p_prev, u_prev * dt)
            e = p - target
            mu, mu_dot = ctl.envelope_value(env, t)
            phi_a, phi_b = ctl.boundaries(env, t)
            xi = ctl.transfer_error(e, phi_a, phi_b)
            x = np.concatenate([plant.configuration(), p])
            z = eta = None
            if phase == "pause":
                u = np.zeros(CONFIG_DIM)
            else:
                j_hat = estimator.jacobian(x)
                if law == "ppc":
                    try:
                        z = ctl.z_vector(e, env, t)
                    except BarrierViolationError as exc:
                        failure = f"barrier violation at t={t:.3f} on channels {exc.channels}"
                    else:
                        eta = ctl.eta_gain(env, t, gains.k_eta)
                if failure is not None:
                    u = np.zeros(CONFIG_DIM)
                elif law == "ppc":
                    u = ctl.control(j_hat, e, z, eta, gains)
                else:
                    u = ctl.baseline_control(j_hat, e, gains)
            record = log_step(t, e, xi, phi_a, phi_b, z, eta, mu, mu_dot, estimator.weights)
            runlog.append(t, s_idx, phase, env, mu, e, xi, phi_a, phi_b, u, record)
            violations += record.violations > 0
            if failure is not None:
                break
            if phase == "control":
                estimator.adapt(u, z if law == "ppc" else e, dt)
            try:
                plant.step(u, dt)
            except SolverDivergenceError as exc:
                failure = f"solver divergence at t={t:.3f}: residual {exc.residual:.3e} N"
                break
            p_prev, u_prev = p, u
            step += 1
            t = step * dt
        if failure is not None:
            break

    stage_times = [_convergence(runlog, i, success_threshold, dt, s.duration)
                   for i, s in enumerate(stages)]
    ctrl = [k for k, ph in enumerate(runlog.phase) if ph == "control"]
    errs = np.array([np.max(np.abs(runlog.e[k])) for k in ctrl]) if ctrl else np.array([np.nan])
    window = max(1, int(round(settle_window / dt)))
    steady = float(np.mean(errs[-window:]))
    final = float(errs[-1])
    success = failure is None and violations == 0 and final <= success_threshold
    if failure:
        log.info("%s seed %d failed: %s", method, seed, failure)
    return RunResult(method, seed, success, steady, float(sum(stage_times)), int(violations),
                     runlog, failure, stage_times, final)


@dataclass
class Prepared:
    """Everything a run needs that does not depend on the control method."""

    plant: object
    keypoints: KeypointSet
    targets: list
    babble: BabbleLog | None


def prepare(scenario: Scenario, seed, babble_log: BabbleLog | None = None, n_stages=None,
            with_babble=True) -> Prepared:
    plant = scenario.build_plant()
    ks = scenario.keypoint_set(plant)
    stages = scenario.stages[:n_stages]
    demos = [s.demo for s in stages]
    recorded = record_target(plant, ks, demos, scenario.dt)
    targets = [rec if s.target is None else s.target for s, rec in zip(stages, recorded)]
    if babble_log is None and with_babble:
        babble_log = babble_for(scenario, plant, ks, seed, demos)
    return Prepared(plant, ks, targets, babble_log)


def babble_for(scenario: Scenario, plant, ks, seed, demos=None) -> BabbleLog:
    """The scenario's babbling log for ``seed``, anchored on the demonstration path."""
    est = scenario.estimator
    if demos is None:
        demos = [s.demo for s in scenario.stages]
    start = plant.state()
    anchors = demo_path(plant, demos, scenario.dt)
    plant.restore(start)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    return babble(plant, ks, est.babble_samples, rng, scenario.dt, scenario.gains.speed_limit,
                  est.babble_radius, scenario.noise_std, anchors)


def make_estimator(scenario: Scenario, method, babble_log: BabbleLog, seed):
    est = scenario.estimator
    kind = METHODS[method][1]
    if kind == "rbf":
        basis = make_basis(babble_log.inputs, est.basis_size, seed, est.width_scale)
        w = prefit(babble_log.inputs, babble_log.controls, babble_log.velocities, basis, est.ridge)
        return RbfEstimator(basis, w, scenario.gains.gamma, est.adapt_gain, est.max_weight_norm)
    j0 = fit_constant_jacobian(babble_log.controls, babble_log.velocities, est.ridge)
    return BroydenEstimator(j0, est.broyden_damping)


def run(scenario: Scenario, method, seed, babble_log: BabbleLog | None = None,
        n_stages=None, prepared: Prepared | None = None) -> RunResult:
    """One closed-loop run; a deterministic function of (scenario, method, seed)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    prep = prepared or prepare(scenario, seed, babble_log, n_stages)
    stages = scenario.stages[:n_stages]
    plant = prep.plant.copy()
    estimator = make_estimator(scenario, method, prep.babble, seed)
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return simulate(plant, prep.keypoints, prep.targets[:len(stages)], stages, scenario.gains,
                    method, estimator, scenario.dt, scenario.pause, scenario.noise_std, noise_rng,
                    scenario.success_threshold(), seed=seed)


def _stats(values):
    v = np.asarray(values, dtype=float)
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "q25": float(q25), "q75": float(q75), "iqr": float(q75 - q25)}


@dataclass
class ComparisonSummary:
    scenario: str
    seeds: list
    methods: dict
    success_definition: str
    runs: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {"scenario": self.scenario, "seeds": self.seeds, "methods": self.methods,
                "success_definition": self.success_definition}


def compare(scenario: Scenario, methods, seeds=None, n_stages=None) -> ComparisonSummary:
    """Run every method on every seed and summarise median/IQR metrics per method.

    Methods sharing a seed also share the babbling log and targets.  Runs that
    never settle count with the full stage duration as convergence time.
    """
    seeds = sorted(scenario.seeds if seeds is None else seeds)
    methods = list(methods)
    runs = {m: [] for m in dict.fromkeys(methods)}
    for seed in seeds:
        prep = prepare(scenario, seed, n_stages=n_stages)
        for m in runs:
            runs[m].append(run(scenario, m, seed, n_stages=n_stages, prepared=prep))
    summary = {}
    for m, results in runs.items():
        summary[m] = {
            "n_runs": len(results),
            "success_rate": float(np.mean([r.success for r in results])),
            "steady_state_error": _stats([r.steady_state_error for r in results]),
            "convergence_time": _stats([r.convergence_time for r in results]),
            "violations": int(sum(r.violation_count for r in results)),
        }
    definition = (f"final max-abs keypoint error <= {scenario.success_factor} x max mu_inf "
                  f"({scenario.success_threshold():.4g} m) and no boundary violations")
    return ComparisonSummary(scenario.name, seeds, summary, definition, runs)
