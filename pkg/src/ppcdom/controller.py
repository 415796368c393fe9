"""Prescribed-performance control of keypoint errors.

Every error channel ``e_i`` lives inside a funnel ``(-delta mu(t), delta mu(t))``
whose half-width decays exponentially from ``mu0`` to ``mu_inf``.  The control
law adds a barrier term that grows without bound as an error approaches its
funnel wall.  All functions accept per-channel arrays or scalars.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BarrierViolationError, ConfigurationError

# Funnel parameters per task and axis (mu0 [m], mu_inf [m], alpha [1/s]).
TABLE_I = {
    "task_a": {"x": (0.1, 0.01, 0.2), "y": (0.1, 0.01, 0.2), "z": (0.1, 0.01, 0.2)},
    "task_b": {"x": (0.1, 0.015, 0.05), "y": (0.15, 0.015, 0.05), "z": (0.15, 0.015, 0.02)},
    "task_c": {"x": (0.15, 0.015, 0.02), "y": (0.15, 0.015, 0.02), "z": (0.05, 0.01, 0.02)},
}


@dataclass(frozen=True)
class PerformanceEnvelope:
    mu0: np.ndarray
    mu_inf: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray = 1.0
    t0: float = 0.0

    def __post_init__(self):
        for name in ("mu0", "mu_inf", "alpha", "delta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not np.all(self.mu_inf > 0):
            raise ConfigurationError("mu_inf must be positive")
        if not np.all(self.mu0 > self.mu_inf):
            raise ConfigurationError("mu0 must exceed mu_inf")
        if not np.all(self.alpha > 0):
            raise ConfigurationError("alpha must be positive")
        if not np.all(self.delta > 0):
            raise ConfigurationError("delta must be positive")

    @classmethod
    def per_axis(cls, params, n_keypoints, delta=1.0, t0=0.0):
        """Expand ``{"x": (mu0, mu_inf, alpha), ...}`` to 3n channels ordered x, y, z per keypoint."""
        table = np.array([params[a] for a in "xyz"], dtype=float)  # (3, 3)
        rows = np.tile(table, (n_keypoints, 1))
        return cls(rows[:, 0], rows[:, 1], rows[:, 2], delta, t0)


@dataclass
class ControllerGains:
    k1: np.ndarray | float = 2.0
    kz: np.ndarray | float = 1.0
    k_eta: float = 0.5
    gamma: float = 0.0
    damping: float = 1e-3
    speed_limit: float = 0.03

    def __post_init__(self):
        if not (np.all(np.asarray(self.k1) > 0) and np.all(np.asarray(self.kz) > 0)):
            raise ConfigurationError("gain diagonals must be positive")
        if not self.k_eta > 0:
            raise ConfigurationError("k_eta must be positive")
        if self.gamma < 0 or self.damping < 0 or not self.speed_limit > 0:
            raise ConfigurationError("gamma, damping must be >= 0 and speed_limit > 0")


def envelope_value(env: PerformanceEnvelope, t):
    """Funnel half-width ``mu(t)`` and its time derivative."""
    tau = np.asarray(t, dtype=float) - env.t0
    if np.any(tau < 0):
        raise ValueError(f"t={t} precedes the envelope anchor t0={env.t0}")
    d = np.exp(-env.alpha * tau)
    # convex form: exactly mu0 at tau = 0 and never below mu_inf
    mu = env.mu0 * d - env.mu_inf * np.expm1(-env.alpha * tau)
    return mu, -env.alpha * (env.mu0 - env.mu_inf) * d


def boundaries(env: PerformanceEnvelope, t):
    mu, _ = envelope_value(env, t)
    upper = env.delta * mu
    return -upper, upper


def transfer_error(e, phi_a, phi_b):
    """Error divided by its active boundary: ``e/phi_b`` if ``e > 0`` else ``e/phi_a``.

    Non-negative for every ``e``; below 1 exactly when ``e`` is inside the funnel.
    """
    e = np.asarray(e, dtype=float)
    return np.where(e > 0, e / phi_b, e / phi_a)


def z_vector(e, env: PerformanceEnvelope, t):
    """Barrier variable ``xi^2 / ((1 - xi^2) e)``, evaluated as ``e / (phi^2 (1 - xi^2))``."""
    e = np.asarray(e, dtype=float)
    phi_a, phi_b = boundaries(env, t)
    phi = np.where(e > 0, phi_b, phi_a)
    xi = e / phi
    bad = np.nonzero(np.atleast_1d(np.abs(xi) >= 1))[0]
    if len(bad):
        raise BarrierViolationError(bad, xi)
    return e / (phi ** 2 * (1.0 - xi ** 2))


def eta_gain(env: PerformanceEnvelope, t, k_eta):
    """Time-varying gain; both walls share the log-rate ``mu_dot / mu``."""
    mu, mu_dot = envelope_value(env, t)
    rate = mu_dot / mu
    return np.sqrt(2.0 * rate ** 2 + k_eta)


def damped_pinv(j, damping):
    j = np.asarray(j, dtype=float)
    if not np.all(np.isfinite(j)):
        raise ValueError("non-finite Jacobian estimate")
    if damping == 0:
        return np.linalg.pinv(j)
    gram = j @ j.T
    gram[np.diag_indices_from(gram)] += damping ** 2
    return np.linalg.solve(gram, j).T


def clamp_speed(u, limit):
    """Scale the whole vector so no channel exceeds ``limit``."""
    peak = np.max(np.abs(u)) if len(u) else 0.0
    return u * (limit / peak) if peak > limit else u


def control(j_hat, e, z, eta, gains: ControllerGains):
    """u = -pinv(J_hat) [(K1 + eta) e + Kz z], speed-clamped."""
    drive = (gains.k1 + eta) * np.asarray(e) + gains.kz * np.asarray(z)
    u = -damped_pinv(j_hat, gains.damping) @ drive
    return clamp_speed(u, gains.speed_limit)


def baseline_control(j_hat, e, gains: ControllerGains):
    """Proportional law without funnel terms: u = -pinv(J_hat) K1 e, speed-clamped."""
    u = -damped_pinv(j_hat, gains.damping) @ (gains.k1 * np.asarray(e))
    return clamp_speed(u, gains.speed_limit)


def reset_stage(env: PerformanceEnvelope, t_now, e, mu0=None, margin=1.1):
    """Re-anchor the funnel at ``t_now`` for a new target.

    ``mu0`` (default: the envelope's own) is widened per channel to
    ``margin * |e| / delta`` when the fresh error would otherwise start outside.
    """
    base = env.mu0 if mu0 is None else np.asarray(mu0, dtype=float)
    need = margin * np.abs(np.asarray(e, dtype=float)) / env.delta
    return replace(env, mu0=np.maximum(base, need), t0=float(t_now))
