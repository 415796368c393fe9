"""Online Jacobian estimation: Gaussian RBF network with an adaptive law, and Broyden.

Weights are held in one array ``W`` of shape ``(n, 12, m, 3)``: ``W[k, j]`` is
the ``m x 3`` block mapping basis activations to the velocity of keypoint ``k``
per unit of control channel ``j``.  The Jacobian estimate is assembled so that
row ``3k + d`` of ``J_hat`` is coordinate ``d`` of keypoint ``k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigurationError

log = logging.getLogger(__name__)

N_CONTROL = 12


@dataclass
class RbfBasis:
    centers: np.ndarray  # (m, d)
    widths: np.ndarray  # (m,)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.widths = np.broadcast_to(np.asarray(self.widths, dtype=float),
                                      (len(self.centers),)).copy()
        if len(self.centers) < 1:
            raise ConfigurationError("basis needs at least one center")
        if np.any(self.widths <= 0):
            raise ConfigurationError("basis widths must be positive")

    @property
    def size(self):
        return len(self.centers)

    @property
    def dim(self):
        return self.centers.shape[1]


def rbf_features(x, basis: RbfBasis) -> np.ndarray:
    """theta_i = exp(-|x - c_i|^2 / sigma_i^2)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.dim,):
        raise ValueError(f"input has shape {x.shape}, basis expects ({basis.dim},)")
    sq = np.sum((basis.centers - x) ** 2, axis=1)
    return np.exp(-sq / basis.widths ** 2)


def kmeans_centers(samples, m, seed=0, max_iter=100, tol=1e-9) -> np.ndarray:
    """Lloyd's k-means started from ``m`` distinct samples drawn with ``seed``.

    Stops when no center moves more than ``tol`` or after ``max_iter`` rounds.
    An emptied cluster keeps its previous center.
    """
    x = np.asarray(samples, dtype=float)
    if len(x) < m:
        raise ConfigurationError(f"need at least {m} samples, got {len(x)}")
    rng = np.random.default_rng(seed)
    centers = x[rng.choice(len(x), size=m, replace=False)].copy()
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        new = centers.copy()
        for c in range(m):
            members = x[labels == c]
            if len(members):
                new[c] = members.mean(axis=0)
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift <= tol:
            break
    return centers


def median_width(centers, samples=None, scale=1.5) -> float:
    """Shared width: ``scale`` times the median pairwise center distance.

    A single center falls back to the median center-to-sample distance.
    """
    centers = np.atleast_2d(centers)
    if len(centers) > 1:
        d = pdist(centers)
    elif samples is not None:
        d = np.linalg.norm(np.asarray(samples) - centers[0], axis=1)
    else:
        d = np.array([1.0])
    med = float(np.median(d))
    return scale * med if med > 0 else scale


def make_basis(samples, m, seed=0, width_scale=1.5) -> RbfBasis:
    centers = kmeans_centers(samples, m, seed)
    return RbfBasis(centers, median_width(centers, samples, width_scale))


def zero_weights(n_keypoints, m):
    return np.zeros((n_keypoints, N_CONTROL, m, 3))


def predict_jacobian(w, theta) -> np.ndarray:
    n = w.shape[0]
    # blocks[k, d, j] = W[k, j]^T theta
    return np.einsum("kjmd,m->kdj", w, theta).reshape(3 * n, w.shape[1])


def adapt(w, theta, u, z, gamma, dt, gain=1.0, max_norm=1e3) -> np.ndarray:
    """One explicit-Euler step of dW[k, j] = gain * theta u_j z_k^T - gamma W[k, j].

    ``gain`` scales the data term only (1 gives the plain law).  The result is
    projected back onto the Frobenius ball of radius ``max_norm``.
    """
    theta, u, z = (np.asarray(a, dtype=float) for a in (theta, u, z))
    if gamma < 0 or not dt > 0:
        raise ValueError("need gamma >= 0 and dt > 0")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
        raise ValueError("non-finite input to adaptive law")
    n = w.shape[0]
    drive = np.einsum("m,j,kd->kjmd", theta, u, z.reshape(n, 3))
    out = w + dt * (gain * drive - gamma * w)
    norm = np.linalg.norm(out)
    if max_norm is not None and norm > max_norm:
        log.info("weight projection active: |W|_F = %.3g > %.3g", norm, max_norm)
        out *= max_norm / norm
    return out


def _ridge(phi, y, ridge):
    """argmin |phi w - y|^2 + ridge |w|^2, columnwise in ``y``."""
    s, p = phi.shape
    if s <= p:
        gram = phi @ phi.T
        gram[np.diag_indices_from(gram)] += ridge
        return phi.T @ np.linalg.solve(gram, y)
    gram = phi.T @ phi
    gram[np.diag_indices_from(gram)] += ridge
    return np.linalg.solve(gram, phi.T @ y)


def prefit(inputs, controls, velocities, basis: RbfBasis, ridge=1e-6) -> np.ndarray:
    """Least-squares initial weights from babbling samples ``(x, u, p_dot)``.

    Fits every block so that ``sum_j (W[k, j]^T theta(x)) u_j`` reproduces the
    observed keypoint velocity, with a ridge penalty on the weights.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    u = np.atleast_2d(np.asarray(controls, dtype=float))
    pdot = np.atleast_2d(np.asarray(velocities, dtype=float))
    if len(x) < 1 or not len(x) == len(u) == len(pdot):
        raise ValueError("inputs, controls and velocities must have equal non-zero length")
    m = basis.size
    theta = np.array([rbf_features(xi, basis) for xi in x])
    phi = (u[:, :, None] * theta[:, None, :]).reshape(len(x), -1)  # column j*m + i
    coef = _ridge(phi, pdot, ridge)  # (12 m, 3n)
    n = pdot.shape[1] // 3
    return coef.reshape(u.shape[1], m, n, 3).transpose(2, 0, 1, 3).copy()


def fit_constant_jacobian(controls, velocities, ridge=1e-6) -> np.ndarray:
    """Ridge fit of a single Jacobian to babbling samples, (3n, 12)."""
    u = np.atleast_2d(np.asarray(controls, dtype=float))
    pdot = np.atleast_2d(np.asarray(velocities, dtype=float))
    return _ridge(u, pdot, ridge).T


@dataclass(frozen=True)
class BroydenState:
    jacobian: np.ndarray
    damping: float = 1.0

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ConfigurationError("Broyden damping must lie in (0, 1]")


def broyden_update(state: BroydenState, dp, dq, tol=1e-9) -> BroydenState:
    """Rank-one secant correction; skipped when ``|dq| <= tol``."""
    dp = np.asarray(dp, dtype=float)
    dq = np.asarray(dq, dtype=float)
    nq = dq @ dq
    if np.sqrt(nq) <= tol:
        return state
    j = state.jacobian
    j = j + state.damping * np.outer(dp - j @ dq, dq) / nq
    return replace(state, jacobian=j)
