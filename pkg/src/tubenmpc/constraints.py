"""Separation and thrust constraints, tightening margins and residuals.

Every constraint is written as ``y(x) <= y_max``. The lower thrust bound uses
``y = -fR_j`` with ``y_max = -fR_min``.
"""
from dataclasses import dataclass

import numpy as np

from .dynamics import NP, NX

SEPARATION = "separation"
THRUST_UPPER = ("thrust_upper_1", "thrust_upper_2")
THRUST_LOWER = ("thrust_lower_1", "thrust_lower_2")
KINDS = (SEPARATION,) + THRUST_UPPER + THRUST_LOWER

_FR_INDEX = {"1": 8, "2": 9}


@dataclass(frozen=True)
class BoxSets:
    """Plain box bounds on actuator states and rates (never tightened)."""

    fR_min: float = 3.0
    fR_max: float = 20.0
    tau_min: float = -5.0
    tau_max: float = 5.0
    dfR_min: float = -200.0
    dfR_max: float = 200.0
    dtau_min: float = -100.0
    dtau_max: float = 100.0

    def __post_init__(self):
        for lo, hi in (("fR_min", "fR_max"), ("tau_min", "tau_max"),
                       ("dfR_min", "dfR_max"), ("dtau_min", "dtau_max")):
            if not getattr(self, lo) < getattr(self, hi):
                raise ValueError(f"{lo} must be below {hi}")

    def input_bounds(self):
        lo = np.array([self.dfR_min, self.dfR_min, self.dtau_min, self.dtau_min])
        hi = np.array([self.dfR_max, self.dfR_max, self.dtau_max, self.dtau_max])
        return lo, hi


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    y_max: float
    tightened: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if not np.isfinite(self.y_max):
            raise ValueError("constraint bound must be finite")
        if self.kind == SEPARATION and not -1.0 < self.y_max < 1.0:
            raise ValueError("separation bound must be cos(dphi_min) with dphi_min in (0, pi)")


def default_constraints(boxes: BoxSets, dphi_min: float, tightened: bool):
    """Separation plus upper and lower thrust bounds for both vehicles."""
    specs = [ConstraintSpec(SEPARATION, float(np.cos(dphi_min)), tightened)]
    specs += [ConstraintSpec(k, boxes.fR_max, tightened) for k in THRUST_UPPER]
    specs += [ConstraintSpec(k, -boxes.fR_min, tightened) for k in THRUST_LOWER]
    return tuple(specs)


def separation_value(x):
    x = np.asarray(x)
    return np.cos(x[..., 1] - x[..., 0])


def constraint_value(spec: ConstraintSpec, x):
    x = np.asarray(x)
    if spec.kind == SEPARATION:
        return separation_value(x)
    idx = _FR_INDEX[spec.kind[-1]]
    return x[..., idx] if spec.kind.startswith("thrust_upper") else -x[..., idx]


def constraint_state_jacobian(spec: ConstraintSpec, x):
    """Row ``dy/dx`` of shape ``(..., 12)``."""
    x = np.asarray(x)
    J = np.zeros(x.shape[:-1] + (NX,))
    if spec.kind == SEPARATION:
        s = np.sin(x[..., 1] - x[..., 0])
        J[..., 0] = s
        J[..., 1] = -s
    else:
        idx = _FR_INDEX[spec.kind[-1]]
        J[..., idx] = 1.0 if spec.kind.startswith("thrust_upper") else -1.0
    return J


def constraint_sensitivity(spec: ConstraintSpec, x, Pi):
    """Constraint sensitivity ``Pi_y = J_yx Pi`` (state-only constraints)."""
    return np.einsum("...i,...ij->...j", constraint_state_jacobian(spec, x), np.asarray(Pi))


def tightening_margin(Pi_y, W_p, eps_s):
    """Smoothed margin ``sqrt(Pi_y W Pi_y^T + eps_s^2)``."""
    if eps_s <= 0:
        raise ValueError("eps_s must be positive")
    Pi_y = np.asarray(Pi_y)
    quad = np.einsum("...i,ij,...j->...", Pi_y, W_p, Pi_y)
    if np.any(quad < -1e-12 * (1.0 + np.abs(quad))):
        raise ValueError("negative quadratic form: weighting matrix is not PSD")
    return np.sqrt(np.maximum(quad, 0.0) + eps_s ** 2)


def margin_gradient(Pi_y, W_p, eps_s):
    """Gradient of :func:`tightening_margin` w.r.t. ``Pi_y``."""
    Pi_y = np.asarray(Pi_y)
    alpha = tightening_margin(Pi_y, W_p, eps_s)
    return (Pi_y @ W_p) / alpha[..., None]


def tightened_residual(spec: ConstraintSpec, x, Pi, W_p, eps_s):
    """``y + alpha - y_max`` in tube mode, ``y - y_max`` otherwise; <= 0 is feasible."""
    r = constraint_value(spec, x) - spec.y_max
    if not spec.tightened:
        return r
    return r + tightening_margin(constraint_sensitivity(spec, x, Pi), W_p, eps_s)


def tightened_row(spec: ConstraintSpec, x, Pi, W_p, eps_s):
    """Residual and its gradients w.r.t. ``x`` and ``Pi``.

    Returns ``(value, d_dx (.., 12), d_dPi (.., 12, 6))``; the ``Pi`` block is
    zero in nominal mode.
    """
    x = np.asarray(x)
    Pi = np.asarray(Pi)
    J = constraint_state_jacobian(spec, x)
    value = constraint_value(spec, x) - spec.y_max
    d_dx = J.copy()
    d_dPi = np.zeros(x.shape[:-1] + (NX, NP))
    if not spec.tightened:
        return value, d_dx, d_dPi
    Pi_y = np.einsum("...i,...ij->...j", J, Pi)
    alpha = tightening_margin(Pi_y, W_p, eps_s)
    grad = margin_gradient(Pi_y, W_p, eps_s)  # d alpha / d Pi_y
    d_dPi = J[..., :, None] * grad[..., None, :]
    if spec.kind == SEPARATION:
        # J depends on x through sin(dphi): dJ/dphi1 = -c*(1,-1), dJ/dphi2 = c*(1,-1)
        c = np.cos(x[..., 1] - x[..., 0])
        diff = Pi[..., 0, :] - Pi[..., 1, :]
        dPiy = np.einsum("...j,...j->...", grad, diff)
        d_dx[..., 0] += -c * dPiy
        d_dx[..., 1] += c * dPiy
    return value + alpha, d_dx, d_dPi


def signed_residuals(x, dphi_min: float, fR_max: float):
    """Reporting residuals ``(s_delta, s_fR1, s_fR2)``; <= 0 means satisfied."""
    x = np.asarray(x)
    s_delta = np.cos(x[..., 1] - x[..., 0]) - np.cos(dphi_min)
    return s_delta, x[..., 8] - fR_max, x[..., 9] - fR_max
