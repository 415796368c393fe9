"""Quasi-static mass-spring plant driven by two rigidly attached gripper frames.

The object is a grid of point nodes joined by linear springs.  Gripper nodes
follow their frame rigidly; every other node sits at the minimum of the total
spring energy for the current gripper poses.  Control inputs are stacked
gripper twists ``[v0, w0, v1, w1]`` (m/s, rad/s), world frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.transform import Rotation

from .errors import ConfigurationError, SolverDivergenceError

SHAPES = ("slit-sheet", "square-hole-sheet", "L-sheet")
CONFIG_DIM = 12


@dataclass
class MeshSpec:
    shape: str
    resolution: int | tuple[int, int]
    spacing: float
    stiffness: float = 50.0
    layers: int = 1
    layer_gap: float | None = None  # defaults to spacing
    hole: int | None = None  # square-hole side, in nodes
    leg_width: int | None = None  # L-sheet leg thickness, in nodes


@dataclass
class Mesh:
    """Node positions (N, 3) and springs ``edges[s] = (a, b)`` with rest length and stiffness."""

    nodes: np.ndarray
    edges: np.ndarray
    rest_lengths: np.ndarray
    stiffness: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 3)
        self.edges = np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)
        self.rest_lengths = np.broadcast_to(
            np.asarray(self.rest_lengths, dtype=float), (len(self.edges),)).copy()
        self.stiffness = np.broadcast_to(
            np.asarray(self.stiffness, dtype=float), (len(self.edges),)).copy()
        n = len(self.nodes)
        if n == 0:
            raise ConfigurationError("mesh has no nodes")
        if not np.all(np.isfinite(self.nodes)):
            raise ConfigurationError("non-finite node position")
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise ConfigurationError("spring index out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ConfigurationError("spring connects a node to itself")
            if len(np.unique(np.sort(self.edges, axis=1), axis=0)) != len(self.edges):
                raise ConfigurationError("duplicate spring")
        if np.any(self.rest_lengths <= 0):
            raise ConfigurationError("rest lengths must be positive")
        if np.any(self.stiffness <= 0):
            raise ConfigurationError("stiffness must be positive")
        adj = coo_matrix((np.ones(len(self.edges)), (self.edges[:, 0], self.edges[:, 1])),
                         shape=(n, n))
        if connected_components(adj, directed=False)[0] != 1:
            raise ConfigurationError("mesh graph is not connected")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @classmethod
    def from_geometry(cls, nodes, edges, stiffness=1.0):
        """Springs at rest in the given geometry."""
        nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
        edges = np.asarray(edges, dtype=np.intp).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= len(nodes)):
            raise ConfigurationError("spring index out of range")
        rest = np.linalg.norm(nodes[edges[:, 1]] - nodes[edges[:, 0]], axis=1)
        return cls(nodes, edges, rest, stiffness)


def _grid_mask(spec, nx, ny):
    mask = np.ones((ny, nx), dtype=bool)
    if spec.shape == "square-hole-sheet":
        h = spec.hole if spec.hole is not None else (min(nx, ny) - 1) // 2
        if not 1 <= h <= min(nx, ny) - 2:
            raise ConfigurationError(f"hole size {h} does not fit a {nx}x{ny} grid")
        oy, ox = (ny - h) // 2, (nx - h) // 2
        mask[oy:oy + h, ox:ox + h] = False
    elif spec.shape == "L-sheet":
        w = spec.leg_width if spec.leg_width is not None else (min(nx, ny) + 1) // 2
        if not 1 <= w < min(nx, ny):
            raise ConfigurationError(f"leg width {w} does not fit a {nx}x{ny} grid")
        jj, ii = np.mgrid[0:ny, 0:nx]
        mask = (jj < w) | (ii < w)
    return mask


def build_mesh(spec: MeshSpec) -> Mesh:
    """Grid mesh with structural and shear springs for one of the task shapes.

    Nodes are numbered layer-major, then row (y), then column (x).  With more
    than one layer, neighbouring layers are tied by vertical springs and by the
    crossed diagonals of every vertical face, which makes each cell a braced
    cube and gives the sheet out-of-plane stiffness.
    """
    if spec.shape not in SHAPES:
        raise ConfigurationError(f"unknown mesh shape {spec.shape!r}")
    if np.isscalar(spec.resolution):
        nx = ny = int(spec.resolution)
    else:
        nx, ny = (int(r) for r in spec.resolution)
    if nx < 3 or ny < 3:
        raise ConfigurationError("resolution must be at least 3 per side")
    if not spec.spacing > 0:
        raise ConfigurationError("spacing must be positive")
    if spec.layers < 1:
        raise ConfigurationError("layers must be >= 1")
    s = float(spec.spacing)
    gap = s if spec.layer_gap is None else float(spec.layer_gap)

    mask = _grid_mask(spec, nx, ny)
    ids = -np.ones((spec.layers, ny, nx), dtype=np.intp)
    ids[:, mask] = np.arange(spec.layers * mask.sum()).reshape(spec.layers, -1)
    ll, jj, ii = np.nonzero(ids >= 0)
    order = np.argsort(ids[ll, jj, ii])
    nodes = np.column_stack([ii[order] * s, jj[order] * s, ll[order] * gap])

    # in-plane neighbour offsets: structural (dx, dy) and cell diagonals
    structural = []
    for dj, di in ((0, 1), (1, 0)):
        a = ids[:, : ny - dj, : nx - di]
        b = ids[:, dj:, di:]
        ok = (a >= 0) & (b >= 0)
        structural.append(np.column_stack([a[ok], b[ok]]))
    structural = np.concatenate(structural)
    cell = mask[:-1, :-1] & mask[:-1, 1:] & mask[1:, :-1] & mask[1:, 1:]
    c_ll, c_jj, c_ii = np.nonzero(np.broadcast_to(cell, (spec.layers,) + cell.shape))
    shear = np.concatenate([
        np.column_stack([ids[c_ll, c_jj, c_ii], ids[c_ll, c_jj + 1, c_ii + 1]]),
        np.column_stack([ids[c_ll, c_jj, c_ii + 1], ids[c_ll, c_jj + 1, c_ii]]),
    ])
    edges = [structural, shear]
    if spec.layers > 1:
        per_layer = mask.sum()
        lower = structural[structural[:, 0] < per_layer * (spec.layers - 1)]
        edges.append(np.column_stack([np.arange(per_layer * (spec.layers - 1)),
                                      np.arange(per_layer, per_layer * spec.layers)]))
        edges.append(np.column_stack([lower[:, 0], lower[:, 1] + per_layer]))
        edges.append(np.column_stack([lower[:, 1], lower[:, 0] + per_layer]))
    edges = np.concatenate(edges)

    if spec.shape == "slit-sheet":
        xs = (nx // 2 - 0.5) * s
        y_lo, y_hi = s * (1 - 1e-9), (ny - 2) * s * (1 + 1e-9)
        pa, pb = nodes[edges[:, 0]], nodes[edges[:, 1]]
        crosses = (pa[:, 0] - xs) * (pb[:, 0] - xs) < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            y_cross = pa[:, 1] + (xs - pa[:, 0]) * (pb[:, 1] - pa[:, 1]) / (pb[:, 0] - pa[:, 0])
        cut = crosses & (y_cross >= y_lo) & (y_cross <= y_hi)
        edges = edges[~cut]

    return Mesh.from_geometry(nodes, edges, spec.stiffness)


@dataclass
class GripperFrame:
    position: np.ndarray
    rotation: Rotation
    nodes: np.ndarray
    offsets: np.ndarray  # in the gripper frame

    @property
    def rotvec(self):
        return self.rotation.as_rotvec()

    def attached_positions(self):
        return self.position + self.rotation.apply(self.offsets)

    def copy(self):
        return GripperFrame(self.position.copy(), Rotation.from_quat(self.rotation.as_quat()),
                            self.nodes.copy(), self.offsets.copy())


class SpringSystem:
    """Energy, gradient and (PSD-projected) Hessian of a spring network over its free nodes."""

    def __init__(self, mesh: Mesh, free: np.ndarray, node_load=None):
        self.edges = mesh.edges
        self.rest = mesh.rest_lengths
        self.k = mesh.stiffness
        self.n_nodes = mesh.n_nodes
        self.free = np.asarray(free, dtype=np.intp)
        self.load = None if node_load is None else np.broadcast_to(
            np.asarray(node_load, dtype=float), (self.n_nodes, 3))
        nf = len(self.free)
        self.n_dof = 3 * nf
        slot = -np.ones(self.n_nodes, dtype=np.intp)
        slot[self.free] = np.arange(nf)
        a, b = self.edges[:, 0], self.edges[:, 1]
        lin, sid, sgn = [], [], []
        r3 = np.arange(3)
        for p, q, sign in ((a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)):
            ok = np.nonzero((slot[p] >= 0) & (slot[q] >= 0))[0]
            rows = 3 * slot[p[ok]][:, None, None] + r3[None, :, None]
            cols = 3 * slot[q[ok]][:, None, None] + r3[None, None, :]
            lin.append((rows * self.n_dof + cols).ravel())
            sid.append(ok)
            sgn.append(np.full(len(ok), sign))
        self._lin = np.concatenate(lin)
        self._sid = np.concatenate(sid)
        self._sgn = np.concatenate(sgn)

    def _geometry(self, x):
        d = x[self.edges[:, 1]] - x[self.edges[:, 0]]
        length = np.linalg.norm(d, axis=1)
        return d, length

    def energy(self, x):
        _, length = self._geometry(x)
        e = 0.5 * np.sum(self.k * (length - self.rest) ** 2)
        if self.load is not None:
            e -= np.sum(self.load * x)
        return e

    def gradient(self, x):
        """dE/dx for every node, shape (N, 3)."""
        d, length = self._geometry(x)
        f = (self.k * (length - self.rest) / length)[:, None] * d
        g = np.zeros((self.n_nodes, 3))
        for c in range(3):
            g[:, c] = (np.bincount(self.edges[:, 1], f[:, c], self.n_nodes)
                       - np.bincount(self.edges[:, 0], f[:, c], self.n_nodes))
        if self.load is not None:
            g -= self.load
        return g

    def hessian(self, x, project=False):
        """Free-dof Hessian; ``project`` clamps the compressive transverse term to zero (PSD)."""
        d, length = self._geometry(x)
        n = d / length[:, None]
        nnT = n[:, :, None] * n[:, None, :]
        t = 1.0 - self.rest / length
        if project:
            t = np.clip(t, 0.0, None)
        blocks = self.k[:, None, None] * (nnT + t[:, None, None] * (np.eye(3) - nnT))
        w = (self._sgn[:, None, None] * blocks[self._sid]).ravel()
        h = np.bincount(self._lin, w, self.n_dof * self.n_dof)
        return h.reshape(self.n_dof, self.n_dof)

    def residual(self, x):
        """Largest force norm over free nodes (N)."""
        if len(self.free) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.gradient(x)[self.free], axis=1)))


def relax(system: SpringSystem, x, tol=1e-6, max_iter=500):
    """Move the free nodes of ``x`` to a spring-energy minimum.

    Damped Newton with Armijo backtracking; falls back to steepest descent when
    the Newton direction is unusable.  Returns ``(x, residual, energies)`` where
    ``energies`` holds the energy after each accepted iterate.  Raises
    SolverDivergenceError if the tolerance is not met.
    """
    x = np.array(x, dtype=float)
    free = system.free
    energy = system.energy(x)
    energies = [energy]
    if len(free) == 0:
        return x, 0.0, energies
    k_scale = float(np.max(system.k))
    damping = 1e-9 * k_scale
    it = 0
    for it in range(max_iter + 1):
        g_all = system.gradient(x)
        g_nodes = g_all[free]
        residual = float(np.max(np.linalg.norm(g_nodes, axis=1)))
        if residual <= tol:
            return x, residual, energies
        if it == max_iter:
            break
        g = g_nodes.ravel()
        direction = None
        exact = system.hessian(x)
        # exact Hessian first (quadratic convergence at a stable minimum), then
        # increasingly shifted copies when compression makes it indefinite, then
        # the PSD projection
        candidates = [(exact, damping * 10.0 ** (2 * i)) for i in range(0, 7)]
        candidates.append((system.hessian(x, project=True), damping))
        for h0, shift in candidates:
            h = h0.copy()
            h[np.diag_indices_from(h)] += shift
            try:
                direction = -cho_solve(cho_factor(h), g)
            except LinAlgError:
                continue
            slope = g @ direction
            if np.isfinite(slope) and slope < 0:
                break
            direction = None
        if direction is None:
            direction = -g / k_scale
            slope = g @ direction
        slack = 64 * np.finfo(float).eps * max(abs(energy), 1e-300)
        accepted = False
        if -slope > slack:
            alpha = 1.0
            for _ in range(40):
                trial = x.copy()
                trial[free] += alpha * direction.reshape(-1, 3)
                e_trial = system.energy(trial)
                if e_trial <= energy + 1e-4 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            # The predicted decrease is below energy round-off, so the Armijo
            # test only sees noise.  Accept the full step if it is energy-neutral
            # to machine precision and shrinks the force residual.
            trial = x.copy()
            trial[free] += direction.reshape(-1, 3)
            e_trial = system.energy(trial)
            if e_trial <= energy + slack and system.residual(trial) < residual:
                accepted = True
        if not accepted:
            break
        x, energy = trial, min(e_trial, energy)
        energies.append(e_trial)
    raise SolverDivergenceError(system.residual(x), it)


class Plant:
    """Mass-spring object held by exactly two gripper frames.

    The plant is mutable: ``step`` advances it in place and returns it.  Use
    ``state``/``restore`` or ``copy`` to branch.
    """

    def __init__(self, mesh: Mesh, grippers, tol=1e-6, max_iter=500, node_load=None):
        grippers = list(grippers)
        if len(grippers) != 2:
            raise ConfigurationError("a plant needs exactly two grippers")
        self.mesh = mesh
        self.grippers = grippers
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.node_load = node_load
        attached = np.concatenate([g.nodes for g in grippers])
        self.attached = attached
        self.free = np.setdiff1d(np.arange(mesh.n_nodes), attached)
        self.system = SpringSystem(mesh, self.free, node_load)
        self.positions = mesh.nodes.copy()
        self.last_energies: list[float] = []
        self._place_attached()

    # -- state -----------------------------------------------------------
    def state(self):
        return self.positions.copy(), [g.copy() for g in self.grippers]

    def restore(self, state):
        positions, grippers = state
        self.positions = positions.copy()
        self.grippers = [g.copy() for g in grippers]

    def copy(self):
        other = Plant.__new__(Plant)
        other.__dict__.update(self.__dict__)
        other.restore(self.state())
        other.last_energies = list(self.last_energies)
        return other

    def configuration(self) -> np.ndarray:
        """Stacked ``[position, rotation vector]`` of both grippers (12,)."""
        return np.concatenate([np.concatenate([g.position, g.rotvec]) for g in self.grippers])

    def features(self, indices) -> np.ndarray:
        return self.positions[np.asarray(indices)].ravel()

    # -- dynamics --------------------------------------------------------
    def _place_attached(self):
        for g in self.grippers:
            self.positions[g.nodes] = g.attached_positions()

    def _apply_twist(self, u, dt):
        for i, g in enumerate(self.grippers):
            v, w = u[6 * i:6 * i + 3], u[6 * i + 3:6 * i + 6]
            g.position = g.position + v * dt
            if np.any(w):
                g.rotation = Rotation.from_rotvec(w * dt) * g.rotation

    def solve_equilibrium(self, tol=None) -> float:
        """Re-solve free nodes for the current gripper poses; returns the residual (N)."""
        tol = self.tol if tol is None else tol
        x, residual, energies = relax(self.system, self.positions, tol, self.max_iter)
        self.positions = x
        self.last_energies = energies
        return residual

    def step(self, u, dt) -> "Plant":
        u = np.asarray(u, dtype=float)
        if u.shape != (CONFIG_DIM,):
            raise ValueError(f"control must have shape ({CONFIG_DIM},), got {u.shape}")
        if not dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(u)):
            raise ValueError("non-finite control input")
        saved = self.state()
        self._apply_twist(u, dt)
        self._place_attached()
        try:
            self.solve_equilibrium()
        except SolverDivergenceError:
            self.restore(saved)
            raise
        return self

    def finite_difference_jacobian(self, indices, h=1e-4, tol=None) -> np.ndarray:
        """Central-difference map from gripper twist to keypoint velocity, (3n, 12).

        Each column perturbs one twist channel by ``±h`` (held for unit time)
        and re-solves equilibrium.  The plant is restored afterwards.
        """
        if not h > 0:
            raise ValueError("h must be positive")
        tol = min(self.tol, 1e-10) if tol is None else tol
        indices = np.asarray(indices)
        base = self.state()
        jac = np.zeros((3 * len(indices), CONFIG_DIM))
        try:
            for j in range(CONFIG_DIM):
                sides = []
                for sign in (1.0, -1.0):
                    self.restore(base)
                    twist = np.zeros(CONFIG_DIM)
                    twist[j] = sign * h
                    self._apply_twist(twist, 1.0)
                    self._place_attached()
                    self.solve_equilibrium(tol)
                    sides.append(self.features(indices))
                jac[:, j] = (sides[0] - sides[1]) / (2 * h)
        finally:
            self.restore(base)
        return jac


def attach_grippers(mesh: Mesh, left, right, tol=1e-6, max_iter=500, node_load=None) -> Plant:
    """Clamp two disjoint node sets to gripper frames placed at their centroids."""
    sets = []
    for name, nodes in (("left", left), ("right", right)):
        nodes = np.unique(np.asarray(list(nodes), dtype=np.intp))
        if len(nodes) == 0:
            raise ConfigurationError(f"{name} gripper has no nodes")
        if nodes.min() < 0 or nodes.max() >= mesh.n_nodes:
            raise ConfigurationError(f"{name} gripper node index out of range")
        sets.append(nodes)
    if np.intersect1d(*sets).size:
        raise ConfigurationError("gripper node sets overlap")
    frames = []
    for nodes in sets:
        centre = mesh.nodes[nodes].mean(axis=0)
        frames.append(GripperFrame(centre, Rotation.identity(), nodes, mesh.nodes[nodes] - centre))
    return Plant(mesh, frames, tol=tol, max_iter=max_iter, node_load=node_load)


@dataclass
class LinearPlant:
    """Synthetic plant with an exactly constant Jacobian: ``p = p0 + J (c - c0)``.

    Keypoint ``k`` is "node" ``k`` of ``positions``.
    """

    jacobian: np.ndarray
    p0: np.ndarray
    c: np.ndarray = field(default_factory=lambda: np.zeros(CONFIG_DIM))

    def __post_init__(self):
        self.jacobian = np.asarray(self.jacobian, dtype=float)
        self.p0 = np.asarray(self.p0, dtype=float)
        self.c = np.asarray(self.c, dtype=float).copy()
        self._c0 = self.c.copy()

    @property
    def positions(self):
        return (self.p0 + self.jacobian @ (self.c - self._c0)).reshape(-1, 3)

    def configuration(self):
        return self.c.copy()

    def features(self, indices):
        return self.positions[np.asarray(indices)].ravel()

    def step(self, u, dt):
        self.c = self.c + np.asarray(u, dtype=float) * dt
        return self

    def state(self):
        return self.c.copy()

    def restore(self, state):
        self.c = state.copy()

    def copy(self):
        other = LinearPlant(self.jacobian, self.p0, self._c0)
        other.c = self.c.copy()
        return other
