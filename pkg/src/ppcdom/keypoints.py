"""Keypoint selection and point-set geometry.

Keypoints are mesh nodes tracked with exact correspondence; the feature vector
is their stacked coordinates ``p = [x1, y1, z1, x2, ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError


@dataclass(frozen=True)
class KeypointSet:
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) < 1:
            raise ConfigurationError("need at least one keypoint")
        if len(set(idx)) != len(idx):
            raise ConfigurationError("keypoint indices must be unique")
        object.__setattr__(self, "indices", idx)

    @property
    def n(self):
        return len(self.indices)

    def validate(self, n_nodes):
        if min(self.indices) < 0 or max(self.indices) >= n_nodes:
            raise ConfigurationError("keypoint index out of range")
        return self


@dataclass
class FeatureState:
    p: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        if self.p.shape != self.target.shape or self.p.ndim != 1 or len(self.p) % 3:
            raise ValueError("feature and target must be equal-length vectors of 3-blocks")

    @property
    def error(self):
        return self.p - self.target


def farthest_point_sample(points, n, start=0, tie_tol=1e-12) -> np.ndarray:
    """Greedy max-min selection of ``n`` point indices, in selection order.

    Each round adds the point farthest from the current selection.  Distances
    within ``tie_tol`` (relative) of the maximum count as ties and the lowest
    index wins, so the result is fully determined by ``(points, n, start)``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if not 1 <= n <= len(pts):
        raise ConfigurationError(f"cannot sample {n} of {len(pts)} points")
    if not 0 <= start < len(pts):
        raise ConfigurationError("start index out of range")
    chosen = [int(start)]
    dist = np.linalg.norm(pts - pts[start], axis=1)
    for _ in range(n - 1):
        best = dist.max()
        cand = np.nonzero(dist >= best - tie_tol * max(best, 1.0))[0]
        nxt = int(cand[0])
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return np.array(chosen)


def chamfer_distance(a, b) -> float:
    """Symmetric Chamfer distance with squared nearest-neighbour distances (m^2)."""
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs two non-empty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(np.mean(d_ab ** 2) + np.mean(d_ba ** 2))


def select_keypoints(nodes, roi_min, roi_max, n=6, start=0) -> KeypointSet:
    """FPS over the mesh nodes inside an axis-aligned region of interest.

    ``start`` indexes the ROI candidates (ascending node index).
    """
    nodes = np.asarray(nodes, dtype=float)
    lo, hi = np.asarray(roi_min, dtype=float), np.asarray(roi_max, dtype=float)
    inside = np.nonzero(np.all((nodes >= lo - 1e-12) & (nodes <= hi + 1e-12), axis=1))[0]
    if len(inside) < n:
        raise ConfigurationError(f"ROI holds {len(inside)} nodes, need {n}")
    picked = farthest_point_sample(nodes[inside], n, start)
    return KeypointSet(tuple(inside[picked]))


def extract_features(plant, ks: KeypointSet, noise_std=0.0, rng=None) -> np.ndarray:
    """Stacked keypoint coordinates, optionally with additive Gaussian noise."""
    p = plant.features(ks.indices)
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        p = p + rng.normal(0.0, noise_std, p.shape)
    return p
