"""Scenario files: JSON description of one manipulation task.

See README.md ("Scenario files") for the schema.  ``load_scenario`` accepts a
file path or the name of a bundled preset (``task_a``, ``task_b``, ``task_c``).
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..controller import TABLE_I, ControllerGains, PerformanceEnvelope
from ..errors import ConfigurationError, ScenarioError
from ..keypoints import KeypointSet, select_keypoints
from ..plant import CONFIG_DIM, MeshSpec, Plant, attach_grippers, build_mesh

PRESETS = ("task_a", "task_b", "task_c")
AXES = "xyz"


@dataclass
class Stage:
    envelope: dict  # axis -> (mu0, mu_inf, alpha)
    duration: float
    delta: float = 1.0
    demo: list = field(default_factory=list)  # [(twist (12,), seconds)]
    target: np.ndarray | None = None

    def funnel(self, n_keypoints, t0=0.0) -> PerformanceEnvelope:
        return PerformanceEnvelope.per_axis(self.envelope, n_keypoints, self.delta, t0)


@dataclass
class EstimatorSettings:
    basis_size: int = 64
    babble_samples: int = 100
    babble_radius: tuple = (0.005, 0.02)  # per-channel offset bound (m, rad)
    ridge: float = 1e-6
    width_scale: float = 1.5
    adapt_gain: float = 1.0
    max_weight_norm: float = 1e3
    broyden_damping: float = 1.0


@dataclass
class Scenario:
    name: str
    mesh: MeshSpec
    grippers: dict  # {"left": selector, "right": selector}
    keypoints: dict  # {"roi": {"min", "max"}, "n", "start"}
    stages: list
    setup: list = field(default_factory=list)  # [(twist (12,), seconds)] applied after grasping
    gains: ControllerGains = field(default_factory=ControllerGains)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    dt: float = 0.05
    pause: float = 0.0
    noise_std: float = 0.0
    solver_tol: float = 1e-6
    solver_max_iter: int = 500
    gravity: float | None = None  # per-node weight (N), -z
    success_factor: float = 1.5
    seeds: list = field(default_factory=lambda: list(range(10)))
    raw: dict = field(default_factory=dict, repr=False)

    def fingerprint(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def build_plant(self) -> Plant:
        mesh = build_mesh(self.mesh)
        left = _select(mesh.nodes, self.grippers["left"], "grippers.left")
        right = _select(mesh.nodes, self.grippers["right"], "grippers.right")
        load = None
        if self.gravity:
            load = np.zeros((mesh.n_nodes, 3))
            load[:, 2] = -self.gravity
        plant = attach_grippers(mesh, left, right, tol=self.solver_tol,
                                max_iter=self.solver_max_iter, node_load=load)
        plant.solve_equilibrium()
        for twist, seconds in self.setup:
            # split long setup moves so each solve starts near its equilibrium
            n = max(1, int(np.ceil(seconds / self.dt)))
            for _ in range(n):
                plant.step(twist, seconds / n)
        return plant

    def keypoint_set(self, plant) -> KeypointSet:
        kp = self.keypoints
        if "nodes" in kp:
            return KeypointSet(tuple(kp["nodes"])).validate(plant.mesh.n_nodes)
        roi = kp["roi"]
        return select_keypoints(plant.mesh.nodes, roi["min"], roi["max"], kp.get("n", 6),
                                kp.get("start", 0))

    def success_threshold(self) -> float:
        mu_inf = max(s.delta * max(s.envelope[a][1] for a in AXES) for s in self.stages)
        return self.success_factor * mu_inf


def _select(nodes, selector, path):
    if "nodes" in selector:
        return np.asarray(selector["nodes"], dtype=np.intp)
    if "box" in selector:
        lo = np.asarray(selector["box"]["min"], dtype=float)
        hi = np.asarray(selector["box"]["max"], dtype=float)
        inside = np.all((nodes >= lo - 1e-12) & (nodes <= hi + 1e-12), axis=1)
        return np.nonzero(inside)[0]
    raise ScenarioError(path, "selector needs 'nodes' or 'box'")


# -- validation helpers -------------------------------------------------------

def _get(d, key, path, default=...):
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    if key not in d:
        if default is ...:
            raise ScenarioError(f"{path}.{key}" if path else key, "missing field")
        return default
    return d[key]


def _number(value, path, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ScenarioError(path, f"expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ScenarioError(path, "must be > 0")
    if nonneg and value < 0:
        raise ScenarioError(path, "must be >= 0")
    return float(value)


def _vector(value, n, path):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ScenarioError(path, f"expected a list of {n} numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _envelope(spec, path):
    if isinstance(spec, str):
        if spec not in TABLE_I:
            raise ScenarioError(path, f"unknown envelope preset {spec!r}")
        return {a: tuple(TABLE_I[spec][a]) for a in AXES}
    out = {}
    for a in AXES:
        ax = _get(spec, a, path)
        p = f"{path}.{a}"
        mu0 = _number(_get(ax, "mu0", p), f"{p}.mu0", positive=True)
        mu_inf = _number(_get(ax, "mu_inf", p), f"{p}.mu_inf", positive=True)
        alpha = _number(_get(ax, "alpha", p), f"{p}.alpha", positive=True)
        if not mu0 > mu_inf:
            raise ScenarioError(f"{p}.mu_inf", "must be smaller than mu0")
        out[a] = (mu0, mu_inf, alpha)
    return out


def _selector(spec, path):
    if "nodes" in spec:
        nodes = spec["nodes"]
        if not isinstance(nodes, list) or not nodes:
            raise ScenarioError(f"{path}.nodes", "expected a non-empty list of node indices")
        return {"nodes": [int(i) for i in nodes]}
    box = _get(spec, "box", path)
    return {"box": {"min": _vector(_get(box, "min", f"{path}.box"), 3, f"{path}.box.min").tolist(),
                    "max": _vector(_get(box, "max", f"{path}.box"), 3, f"{path}.box.max").tolist()}}


def _segments(spec, path):
    if not isinstance(spec, list):
        raise ScenarioError(path, "expected a list of {twist, duration} segments")
    out = []
    for k, seg in enumerate(spec):
        p = f"{path}[{k}]"
        out.append((_vector(_get(seg, "twist", p), CONFIG_DIM, f"{p}.twist"),
                    _number(_get(seg, "duration", p), f"{p}.duration", nonneg=True)))
    return out


def _stage(spec, i):
    path = f"stages[{i}]"
    stage = Stage(
        envelope=_envelope(_get(spec, "envelope", path), f"{path}.envelope"),
        duration=_number(_get(spec, "duration", path), f"{path}.duration", positive=True),
        delta=_number(_get(spec, "delta", path, 1.0), f"{path}.delta", positive=True),
    )
    demo = _get(spec, "demo", path, None)
    target = _get(spec, "target", path, None)
    if (demo is None) == (target is None):
        raise ScenarioError(path, "give exactly one of 'demo' or 'target'")
    if demo is not None:
        stage.demo = _segments(demo, f"{path}.demo")
    else:
        if not isinstance(target, list) or not target or len(target) % 3:
            raise ScenarioError(f"{path}.target", "expected a list of 3n coordinates")
        stage.target = _vector(target, len(target), f"{path}.target")
    return stage


def scenario_from_dict(data: dict, name=None) -> Scenario:
    data = copy.deepcopy(data)
    mesh = _get(data, "mesh", "")
    res = _get(mesh, "resolution", "mesh")
    try:
        spec = MeshSpec(
            shape=_get(mesh, "shape", "mesh"),
            resolution=tuple(res) if isinstance(res, list) else res,
            spacing=_number(_get(mesh, "spacing", "mesh"), "mesh.spacing", positive=True),
            stiffness=_number(_get(mesh, "stiffness", "mesh", 50.0), "mesh.stiffness", positive=True),
            layers=int(_get(mesh, "layers", "mesh", 1)),
            layer_gap=_get(mesh, "layer_gap", "mesh", None),
            hole=_get(mesh, "hole", "mesh", None),
            leg_width=_get(mesh, "leg_width", "mesh", None),
        )
        build_mesh(spec)
    except ConfigurationError as exc:
        raise ScenarioError("mesh", str(exc)) from exc

    grippers = _get(data, "grippers", "")
    grip = {side: _selector(_get(grippers, side, "grippers"), f"grippers.{side}")
            for side in ("left", "right")}

    kp = _get(data, "keypoints", "")
    if "nodes" in kp:
        keypoints = {"nodes": [int(i) for i in kp["nodes"]]}
    else:
        roi = _get(kp, "roi", "keypoints")
        keypoints = {
            "roi": {"min": _vector(_get(roi, "min", "keypoints.roi"), 3, "keypoints.roi.min").tolist(),
                    "max": _vector(_get(roi, "max", "keypoints.roi"), 3, "keypoints.roi.max").tolist()},
            "n": int(_get(kp, "n", "keypoints", 6)),
            "start": int(_get(kp, "start", "keypoints", 0)),
        }
        if keypoints["n"] < 1:
            raise ScenarioError("keypoints.n", "must be >= 1")

    stages_raw = _get(data, "stages", "")
    if not isinstance(stages_raw, list) or not stages_raw:
        raise ScenarioError("stages", "need at least one stage")
    stages = [_stage(s, i) for i, s in enumerate(stages_raw)]

    g = _get(data, "gains", "", {})
    try:
        gains = ControllerGains(
            k1=_number(g.get("k1", 2.0), "gains.k1", positive=True),
            kz=_number(g.get("kz", 1.0), "gains.kz", positive=True),
            k_eta=_number(g.get("k_eta", 0.5), "gains.k_eta", positive=True),
            gamma=_number(g.get("gamma", 0.0), "gains.gamma", nonneg=True),
            damping=_number(g.get("damping", 1e-3), "gains.damping", nonneg=True),
            speed_limit=_number(g.get("speed_limit", 0.03), "gains.speed_limit", positive=True),
        )
    except ConfigurationError as exc:
        raise ScenarioError("gains", str(exc)) from exc

    e = _get(data, "estimator", "", {})
    radius = e.get("babble_radius", [0.005, 0.02])
    est = EstimatorSettings(
        basis_size=int(e.get("basis_size", 64)),
        babble_samples=int(e.get("babble_samples", 100)),
        babble_radius=tuple(_vector(radius, 2, "estimator.babble_radius")),
        ridge=_number(e.get("ridge", 1e-6), "estimator.ridge", nonneg=True),
        width_scale=_number(e.get("width_scale", 1.5), "estimator.width_scale", positive=True),
        adapt_gain=_number(e.get("adapt_gain", 1.0), "estimator.adapt_gain", nonneg=True),
        max_weight_norm=_number(e.get("max_weight_norm", 1e3), "estimator.max_weight_norm",
                                positive=True),
        broyden_damping=_number(e.get("broyden_damping", 1.0), "estimator.broyden_damping",
                                positive=True),
    )
    if est.basis_size < 1:
        raise ScenarioError("estimator.basis_size", "must be >= 1")
    if est.babble_samples < est.basis_size:
        raise ScenarioError("estimator.babble_samples", "must be >= basis_size")
    if est.broyden_damping > 1:
        raise ScenarioError("estimator.broyden_damping", "must lie in (0, 1]")

    solver = _get(data, "solver", "", {})
    seeds = data.get("seeds", list(range(10)))
    if not isinstance(seeds, list) or not seeds:
        raise ScenarioError("seeds", "expected a non-empty list of integers")
    gravity = data.get("gravity")
    return Scenario(
        name=name or data.get("name", "scenario"),
        mesh=spec,
        grippers=grip,
        keypoints=keypoints,
        stages=stages,
        setup=_segments(data.get("setup", []), "setup"),
        gains=gains,
        estimator=est,
        dt=_number(data.get("dt", 0.05), "dt", positive=True),
        pause=_number(data.get("pause", 0.0), "pause", nonneg=True),
        noise_std=_number(data.get("noise_std", 0.0), "noise_std", nonneg=True),
        solver_tol=_number(solver.get("tol", 1e-6), "solver.tol", positive=True),
        solver_max_iter=int(solver.get("max_iter", 500)),
        gravity=None if gravity is None else _number(gravity, "gravity", nonneg=True),
        success_factor=_number(data.get("success_factor", 1.5), "success_factor", positive=True),
        seeds=[int(s) for s in seeds],
        raw=data,
    )


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file, or load a bundled preset by name."""
    name = str(path)
    if name in PRESETS:
        text = resources.files(__package__).joinpath("presets", f"{name}.json").read_text()
    else:
        p = Path(path)
        if not p.exists():
            raise ScenarioError("", f"scenario file {p} not found")
        text = p.read_text()
        name = p.stem
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data, name=data.get("name", name) if isinstance(data, dict) else name)
