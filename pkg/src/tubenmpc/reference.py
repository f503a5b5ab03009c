"""Boundary-hugging elliptic reference for the chain tip and its joint-space image."""
from dataclasses import dataclass

import numpy as np

from .dynamics import PhysicalParams


class UnreachableTargetError(ValueError):
    """Target outside the reachable annulus of the two-link chain."""

    def __init__(self, rho, rho_min, rho_max):
        self.rho, self.rho_min, self.rho_max = rho, rho_min, rho_max
        super().__init__(f"target radius {rho:.6g} m outside reachable annulus "
                         f"[{rho_min:.6g}, {rho_max:.6g}] m")


class SingularConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class EllipseSpec:
    xc: float = 0.0
    zc: float = 1.05
    ax: float = 0.55
    az: float = 0.35
    T: float = 12.0
    eps_r: float = 0.02

    def __post_init__(self):
        if self.ax <= 0 or self.az <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        if self.T <= 0:
            raise ValueError("duration must be positive")
        if self.eps_r < 0:
            raise ValueError("reachability margin must be non-negative")


def quintic_phase(t, T):
    """Phase ``2 pi (10 s^3 - 15 s^4 + 6 s^5)`` with ``s = t/T`` and its two derivatives.

    Times outside ``[0, T]`` are clamped, so rates vanish there.
    """
    s = np.clip(np.asarray(t, dtype=float) / T, 0.0, 1.0)
    two_pi = 2.0 * np.pi
    nu = two_pi * s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)
    dnu = two_pi * 30.0 * s ** 2 * (1.0 - s) ** 2 / T
    ddnu = two_pi * 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / T ** 2
    return nu, dnu, ddnu


def ellipse_point(spec: EllipseSpec, nu, dnu, ddnu):
    """Position, velocity and acceleration on the ellipse, each ``(..., 2)``."""
    c, s = np.cos(nu), np.sin(nu)
    pos = np.stack([spec.xc + spec.ax * c, spec.zc + spec.az * s], axis=-1)
    vel = np.stack([-spec.ax * s * dnu, spec.az * c * dnu], axis=-1)
    acc = np.stack([-spec.ax * (c * dnu ** 2 + s * ddnu),
                    spec.az * (-s * dnu ** 2 + c * ddnu)], axis=-1)
    return pos, vel, acc


def two_link_ik(target, params: PhysicalParams, branch: int = 1, eps_r: float = 0.0):
    """Elevation angles placing the second vehicle at ``target``.

    ``branch=+1`` picks the solution with ``phi2 - phi1 > 0``, ``-1`` the other.
    Works on batches of targets with shape ``(..., 2)``.
    """
    target = np.asarray(target, dtype=float)
    l1, l2 = params.l1, params.l2
    rho = np.hypot(target[..., 0], target[..., 1])
    rho_min = abs(l1 - l2) + eps_r
    rho_max = l1 + l2 - eps_r
    bad = (rho < rho_min) | (rho > rho_max)
    if np.any(bad):
        worst = np.atleast_1d(rho)[np.atleast_1d(bad)][0]
        raise UnreachableTargetError(float(worst), rho_min, rho_max)
    cos_d = np.clip((rho ** 2 - l1 ** 2 - l2 ** 2) / (2.0 * l1 * l2), -1.0, 1.0)
    delta = np.sign(branch) * np.arccos(cos_d)
    phi1 = np.arctan2(target[..., 1], target[..., 0]) \
        - np.arctan2(l2 * np.sin(delta), l1 + l2 * np.cos(delta))
    return np.stack([phi1, phi1 + delta], axis=-1)


def tip_jacobian(phi, params: PhysicalParams):
    phi = np.asarray(phi)
    s1, c1 = np.sin(phi[..., 0]), np.cos(phi[..., 0])
    s2, c2 = np.sin(phi[..., 1]), np.cos(phi[..., 1])
    J = np.empty(phi.shape[:-1] + (2, 2))
    J[..., 0, 0] = -params.l1 * s1
    J[..., 0, 1] = -params.l2 * s2
    J[..., 1, 0] = params.l1 * c1
    J[..., 1, 1] = params.l2 * c2
    return J


def ik_derivatives(phi, vel, acc, params: PhysicalParams, max_cond: float = 1e8):
    """Joint rates and accelerations realizing a tip velocity and acceleration."""
    phi = np.asarray(phi, dtype=float)
    J = tip_jacobian(phi, params)
    cond = np.linalg.cond(J)
    if np.any(~np.isfinite(cond) | (cond > max_cond)):
        raise SingularConfigurationError(
            f"tip Jacobian singular (condition {np.max(cond):.3g}); links aligned or folded")
    dphi = np.linalg.solve(J, np.asarray(vel, dtype=float)[..., None])[..., 0]
    s1, c1 = np.sin(phi[..., 0]), np.cos(phi[..., 0])
    s2, c2 = np.sin(phi[..., 1]), np.cos(phi[..., 1])
    l1, l2 = params.l1, params.l2
    jdot_dphi = np.stack([-l1 * c1 * dphi[..., 0] ** 2 - l2 * c2 * dphi[..., 1] ** 2,
                          -l1 * s1 * dphi[..., 0] ** 2 - l2 * s2 * dphi[..., 1] ** 2], axis=-1)
    ddphi = np.linalg.solve(J, (np.asarray(acc, dtype=float) - jdot_dphi)[..., None])[..., 0]
    return dphi, ddphi


@dataclass(frozen=True)
class DenseReference:
    """Reference sampled on a uniform grid.

    ``stage`` rows are ``[phi1, phi2, fL1, fL2, dphi1, dphi2, ddphi1, ddphi2]``.
    """

    t: np.ndarray
    tip: np.ndarray
    stage: np.ndarray
    dt: float

    def index(self, t):
        return int(np.clip(np.rint(t / self.dt), 0, len(self.t) - 1))

    def at(self, t):
        return self.stage[self.index(t)]


def dense_reference(spec: EllipseSpec, params: PhysicalParams, fL_d=(10.0, 10.0),
                    dt: float = 0.005):
    """Build the reference on ``t = 0, dt, ..., T``.

    Raises :class:`UnreachableTargetError` if any point leaves the annulus
    shrunk by ``eps_r``.
    """
    n = int(round(spec.T / dt)) + 1
    t = np.arange(n) * dt
    nu, dnu, ddnu = quintic_phase(t, spec.T)
    pos, vel, acc = ellipse_point(spec, nu, dnu, ddnu)
    # one elbow branch (phi2 > phi1) for the whole path keeps the angles continuous
    phi = two_link_ik(pos, params, 1, spec.eps_r)
    phi = np.unwrap(phi, axis=0)
    dphi, ddphi = ik_derivatives(phi, vel, acc, params)
    stage = np.concatenate([phi, np.broadcast_to(np.asarray(fL_d, float), (n, 2)),
                            dphi, ddphi], axis=-1)
    return DenseReference(t=t, tip=pos, stage=stage, dt=dt)


def build_reference(dense: DenseReference, t_k: float, Ts: float, N: int):
    """Stage references at ``t_k + i Ts`` (i < N) and the terminal ``(phi, fL)``.

    Times past the end of the table hold the final pose with zero rates.
    """
    times = t_k + Ts * np.arange(N + 1)
    idx = np.clip(np.rint(times / dense.dt).astype(int), 0, len(dense.t) - 1)
    rows = dense.stage[idx].copy()
    past = times > dense.t[-1] + 1e-12
    rows[past, 4:] = 0.0
    return rows[:N], rows[N, :4].copy()


def reference_table(dense: DenseReference):
    """Rows for the dense CSV export in its documented column order."""
    s = dense.stage
    return np.column_stack([dense.t, dense.tip[:, 0], dense.tip[:, 1], s[:, 0], s[:, 1],
                            s[:, 4], s[:, 5], s[:, 6], s[:, 7], s[:, 2], s[:, 3]])


REFERENCE_COLUMNS = ("t", "x_d", "z_d", "phi1_d", "phi2_d", "dphi1_d", "dphi2_d",
                     "ddphi1_d", "ddphi2_d", "fL1_d", "fL2_d")
