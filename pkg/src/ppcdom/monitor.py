"""Runtime checks of the closed-loop stability argument.

These turn the Lyapunov construction into numbers that can be logged and
asserted: the barrier value, funnel containment, the logarithm inequality used
to bound it, and the per-channel inequality that absorbs the funnel's shrink
rate into the time-varying gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BarrierViolationError


@dataclass
class ViolationReport:
    count: int
    worst_margin: float
    channels: list[int] = field(default_factory=list)


@dataclass
class StabilityRecord:
    t: float
    v1: float
    weight_norm_sq: float
    max_xi: float
    margin_upper: float
    margin_lower: float
    violations: int
    appendix_ok: bool
    min_ze: float


def barrier_v1(xi) -> float:
    """Sum of ``0.5 ln(1 / (1 - xi_i^2))`` over channels.

    ``xi`` is the active-wall ratio, so the sign-selected sum over both walls
    collapses to this single term per channel.
    """
    xi = np.asarray(xi, dtype=float)
    bad = np.nonzero(np.atleast_1d(np.abs(xi) >= 1))[0]
    if len(bad):
        raise BarrierViolationError(bad, xi)
    return float(0.5 * np.sum(-np.log1p(-xi ** 2)))


def lemma1_sides(v, y):
    """Both sides of ``ln(1/(1 - v^2y)) < v^2y / (1 - v^2y)``."""
    u = np.asarray(v, dtype=float) ** (2 * np.asarray(y))
    return -np.log1p(-u), u / (1.0 - u)


def lemma1_check(v, y):
    """Whether the logarithm bound holds strictly; vectorised over ``v`` and ``y``.

    With ``w = u / (1 - u)`` the claim is ``log1p(w) < w``.  The gap
    ``w - log1p(w) = w^2 h(w)`` is evaluated through ``h`` so that tiny ``u``
    does not round the gap to zero.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y)
    if np.any((v <= 0) | (v >= 1)):
        raise ValueError("v must lie in (0, 1)")
    if np.any((y < 1) | (y != np.round(y))):
        raise ValueError("y must be a positive integer")
    log_u = 2 * y * np.log(v)
    u = np.exp(log_u)
    w = u / (1.0 - u)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (w - np.log1p(w)) / w ** 2
    series = 0.5 - w / 3 + w ** 2 / 4 - w ** 3 / 5
    h = np.where(w > 1e-3, direct, series)
    return (h > 0) & (log_u > -np.inf)


def check_bounds(e, phi_a, phi_b) -> ViolationReport:
    """Flag channels on or outside the open interval ``(phi_a, phi_b)``."""
    e = np.asarray(e, dtype=float)
    upper = phi_b - e
    lower = e - phi_a
    margin = np.minimum(upper, lower)
    bad = np.nonzero(margin <= 0)[0]
    return ViolationReport(len(bad), float(np.min(margin)), bad.tolist())


def appendix_lhs(xi, e, z, eta, mu, mu_dot):
    """``-eta z e - xi^2 / (1 - xi^2) * mu_dot / mu`` per channel."""
    xi = np.asarray(xi, dtype=float)
    return -eta * z * e - xi ** 2 / (1.0 - xi ** 2) * (mu_dot / mu)


def appendix_inequality_check(xi, e, z, eta, mu, mu_dot) -> bool:
    return bool(np.all(appendix_lhs(xi, e, z, eta, mu, mu_dot) <= 0))


def log_step(t, e, xi, phi_a, phi_b, z=None, eta=None, mu=None, mu_dot=None,
             weights=None) -> StabilityRecord:
    """Assemble the stability record for one control step.

    ``z``/``eta`` are absent for controllers without funnel terms; the
    appendix check is then reported on the barrier value alone.
    """
    report = check_bounds(e, phi_a, phi_b)
    inside = report.count == 0
    v1 = barrier_v1(xi) if inside else np.inf
    if z is not None and inside:
        ok = appendix_inequality_check(xi, e, z, eta, mu, mu_dot)
        min_ze = float(np.min(z * e))
    else:
        ok, min_ze = inside, np.nan
    wn = float(np.sum(weights ** 2)) if weights is not None else 0.0
    return StabilityRecord(
        t=float(t), v1=v1, weight_norm_sq=wn, max_xi=float(np.max(xi)),
        margin_upper=float(np.min(phi_b - e)), margin_lower=float(np.min(e - phi_a)),
        violations=report.count, appendix_ok=ok, min_ze=min_ze,
    )


def jacobian_residual(j_hat, j_true, u) -> float:
    """Relative velocity-prediction error ``|(J_hat - J) u| / |J u|``."""
    ref = np.linalg.norm(j_true @ u)
    return float(np.linalg.norm((j_hat - j_true) @ u) / ref)
