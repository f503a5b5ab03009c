"""Planar two-vehicle rigid-link chain with input-rate extension.

Two point-mass aerial vehicles are chained to a fixed anchor through massless
rigid links with passive pin joints. Each vehicle has an independent pitch
inertia. World frame: x horizontal, z up, gravity (0, -g). Link elevation
angles are measured counterclockwise from the x axis; a vehicle with zero
pitch thrusts straight up.

Extended state layout (12)::

    [phi1, phi2, th1, th2, dphi1, dphi2, dth1, dth2, fR1, fR2, tau1, tau2]

Input layout (4)::

    [dfR1, dfR2, dtau1, dtau2]

All functions broadcast over leading axes and keep the input dtype, so they
can be evaluated with complex arguments (complex-step differentiation).
"""
from dataclasses import dataclass, replace

import numpy as np

NX = 12
NU = 4
NP = 6

STATE_NAMES = ("phi1", "phi2", "th1", "th2", "dphi1", "dphi2", "dth1", "dth2",
               "fR1", "fR2", "tau1", "tau2")
INPUT_NAMES = ("dfR1", "dfR2", "dtau1", "dtau2")

# index groups in the extended state
PHI = slice(0, 2)
TH = slice(2, 4)
DPHI = slice(4, 6)
DTH = slice(6, 8)
FR = slice(8, 10)
TAU = slice(10, 12)


@dataclass(frozen=True)
class PhysicalParams:
    """Physical parameters of the chain (vehicle j sits at the end of link j)."""

    m1: float = 0.457
    m2: float = 0.457
    l1: float = 0.942
    l2: float = 0.942
    J1: float = 0.123
    J2: float = 0.123
    g: float = 9.81
    n: int = 2

    def __post_init__(self):
        for name in ("m1", "m2", "l1", "l2", "J1", "J2", "g"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"parameter {name} must be positive, got {value}")
        if self.n != 2:
            raise ValueError(f"only two-vehicle chains are supported, got n={self.n}")

    def as_array(self):
        """Deviation-ordered values (m1, m2, l1, l2, J1, J2)."""
        return np.array([self.m1, self.m2, self.l1, self.l2, self.J1, self.J2])


def apply_deviations(nominal: PhysicalParams, p) -> PhysicalParams:
    """Scale the nominal parameters by ``(1 + p)``.

    ``p`` is ordered (d_m1, d_m2, d_l1, d_l2, d_J1, d_J2). Raises ``ValueError``
    if any scaled parameter is not strictly positive.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (NP,):
        raise ValueError(f"deviation vector must have 6 entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("deviation vector must be finite")
    scaled = nominal.as_array() * (1.0 + p)
    names = ("m1", "m2", "l1", "l2", "J1", "J2")
    for name, value in zip(names, scaled):
        if value <= 0.0:
            raise ValueError(f"deviation makes {name} non-positive ({value})")
    return replace(nominal, **{k: float(v) for k, v in zip(names, scaled)})


def thrust_direction(th):
    """Unit thrust direction (-sin th, cos th) in the world frame."""
    return np.stack([-np.sin(th), np.cos(th)], axis=-1)


def forward_kinematics(phi, params: PhysicalParams):
    """Vehicle positions ``(p1, p2)`` for elevation angles ``phi = (phi1, phi2)``."""
    phi = np.asarray(phi)
    e1 = np.stack([np.cos(phi[..., 0]), np.sin(phi[..., 0])], axis=-1)
    e2 = np.stack([np.cos(phi[..., 1]), np.sin(phi[..., 1])], axis=-1)
    p1 = params.l1 * e1
    p2 = p1 + params.l2 * e2
    return p1, p2


def mass_matrix(phi, params: PhysicalParams):
    phi = np.asarray(phi)
    c = np.cos(phi[..., 1] - phi[..., 0])
    m1, m2, l1, l2 = params.m1, params.m2, params.l1, params.l2
    M = np.empty(phi.shape[:-1] + (2, 2), dtype=np.result_type(phi, float))
    M[..., 0, 0] = (m1 + m2) * l1 ** 2
    M[..., 0, 1] = m2 * l1 * l2 * c
    M[..., 1, 0] = M[..., 0, 1]
    M[..., 1, 1] = m2 * l2 ** 2
    return M


def coriolis_matrix(phi, dphi, params: PhysicalParams):
    """Matrix C with C(q, dq) dq the velocity-product part of the bias."""
    phi, dphi = np.asarray(phi), np.asarray(dphi)
    ks = params.m2 * params.l1 * params.l2 * np.sin(phi[..., 1] - phi[..., 0])
    C = np.zeros(phi.shape[:-1] + (2, 2), dtype=np.result_type(phi, dphi, float))
    C[..., 0, 1] = -ks * dphi[..., 1]
    C[..., 1, 0] = ks * dphi[..., 0]
    return C


def gravity_terms(phi, params: PhysicalParams):
    phi = np.asarray(phi)
    m1, m2, l1, l2, g = params.m1, params.m2, params.l1, params.l2, params.g
    return np.stack([(m1 + m2) * g * l1 * np.cos(phi[..., 0]),
                     m2 * g * l2 * np.cos(phi[..., 1])], axis=-1)


def bias_terms(phi, dphi, params: PhysicalParams):
    """Coriolis/centrifugal plus gravity terms ``C(q, dq) dq + G(q)``."""
    phi, dphi = np.asarray(phi), np.asarray(dphi)
    ks = params.m2 * params.l1 * params.l2 * np.sin(phi[..., 1] - phi[..., 0])
    cor = np.stack([-ks * dphi[..., 1] ** 2, ks * dphi[..., 0] ** 2], axis=-1)
    return cor + gravity_terms(phi, params)


def generalized_thrust(phi, th, fR, params: PhysicalParams):
    """Generalized forces of both thrust vectors on the link angles."""
    phi, th, fR = np.asarray(phi), np.asarray(th), np.asarray(fR)
    q1 = params.l1 * (fR[..., 0] * np.cos(phi[..., 0] - th[..., 0])
                      + fR[..., 1] * np.cos(phi[..., 0] - th[..., 1]))
    q2 = params.l2 * fR[..., 1] * np.cos(phi[..., 1] - th[..., 1])
    return np.stack([q1, q2], axis=-1)


def solve2(M, r):
    """Solve batched 2x2 systems ``M a = r`` in closed form (complex-safe)."""
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    a0 = (M[..., 1, 1] * r[..., 0] - M[..., 0, 1] * r[..., 1]) / det
    a1 = (M[..., 0, 0] * r[..., 1] - M[..., 1, 0] * r[..., 0]) / det
    return np.stack([a0, a1], axis=-1)


def accelerations(x, params: PhysicalParams):
    """Link and pitch accelerations ``(phiddot, thddot)`` of an extended state."""
    x = np.asarray(x)
    phi, th, dphi = x[..., PHI], x[..., TH], x[..., DPHI]
    rhs = generalized_thrust(phi, th, x[..., FR], params) - bias_terms(phi, dphi, params)
    phiddot = solve2(mass_matrix(phi, params), rhs)
    tau = x[..., TAU]
    thddot = np.stack([tau[..., 0] / params.J1, tau[..., 1] / params.J2], axis=-1)
    return phiddot, thddot


def vector_field(x, u, params: PhysicalParams):
    """Continuous-time extended dynamics ``xdot = f(x, u, p)``."""
    x, u = np.asarray(x), np.asarray(u)
    phiddot, thddot = accelerations(x, params)
    u = np.broadcast_to(u, x.shape[:-1] + (NU,))
    return np.concatenate([x[..., DPHI], x[..., DTH], phiddot, thddot, u], axis=-1)


def vehicle_kinematics(x, params: PhysicalParams, phiddot=None):
    """Positions, velocities and accelerations of both vehicles.

    Returns ``(p, v, a)``, each of shape ``(..., 2, 2)`` indexed
    ``[..., vehicle, axis]``.
    """
    x = np.asarray(x)
    if phiddot is None:
        phiddot, _ = accelerations(x, params)
    phi, dphi = x[..., PHI], x[..., DPHI]
    e = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    n = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)
    lengths = np.array([params.l1, params.l2])[:, None]
    rel_p = lengths * e
    rel_v = lengths * dphi[..., None] * n
    rel_a = lengths * (phiddot[..., None] * n - dphi[..., None] ** 2 * e)
    # vehicle 2 accumulates link 1 and link 2 contributions
    cum = np.array([[1.0, 0.0], [1.0, 1.0]])
    p = np.einsum("jk,...kc->...jc", cum, rel_p)
    v = np.einsum("jk,...kc->...jc", cum, rel_v)
    a = np.einsum("jk,...kc->...jc", cum, rel_a)
    return p, v, a


def link_stresses(x, params: PhysicalParams, u=None):
    """Axial link forces ``(fL1, fL2)``, positive in tension.

    Obtained from Newton's law on each vehicle; ``u`` is accepted for
    interface symmetry with the output map and does not enter.
    """
    x = np.asarray(x)
    p, _, a = vehicle_kinematics(x, params)
    p1, p2 = p[..., 0, :], p[..., 1, :]
    a1, a2 = a[..., 0, :], a[..., 1, :]
    t = thrust_direction(x[..., TH])
    fR = x[..., FR]
    grav = np.array([0.0, -params.g])
    u2 = (p1 - p2) / params.l2
    net2 = params.m2 * a2 - fR[..., 1, None] * t[..., 1, :] - params.m2 * grav
    fL2 = np.sum(u2 * net2, axis=-1)
    u1 = -p1 / params.l1
    net1 = (params.m1 * a1 - fR[..., 0, None] * t[..., 0, :] - params.m1 * grav
            + fL2[..., None] * u2)
    fL1 = np.sum(u1 * net1, axis=-1)
    return np.stack([fL1, fL2], axis=-1)


def newton_residuals(x, params: PhysicalParams):
    """Two-axis force balance residual of both vehicles, shape ``(..., 2, 2)``.

    Zero for a consistent model: what is left after subtracting thrust,
    gravity and axial link forces from ``m_j a_j``.
    """
    x = np.asarray(x)
    p, _, a = vehicle_kinematics(x, params)
    fL = link_stresses(x, params)
    t = thrust_direction(x[..., TH])
    fR = x[..., FR]
    grav = np.array([0.0, -params.g])
    p1, p2 = p[..., 0, :], p[..., 1, :]
    u1 = -p1 / params.l1
    u2 = (p1 - p2) / params.l2
    r1 = (params.m1 * a[..., 0, :] - fR[..., 0, None] * t[..., 0, :] - params.m1 * grav
          - fL[..., 0, None] * u1 + fL[..., 1, None] * u2)
    r2 = params.m2 * a[..., 1, :] - fR[..., 1, None] * t[..., 1, :] - params.m2 * grav \
        - fL[..., 1, None] * u2
    return np.stack([r1, r2], axis=-2)


def energy(x, params: PhysicalParams):
    """Total mechanical energy (kinetic + gravitational potential)."""
    x = np.asarray(x)
    phi, dphi, dth = x[..., PHI], x[..., DPHI], x[..., DTH]
    M = mass_matrix(phi, params)
    kin = 0.5 * np.einsum("...i,...ij,...j->...", dphi, M, dphi)
    kin = kin + 0.5 * (params.J1 * dth[..., 0] ** 2 + params.J2 * dth[..., 1] ** 2)
    p1, p2 = forward_kinematics(phi, params)
    pot = params.g * (params.m1 * p1[..., 1] + params.m2 * p2[..., 1])
    return kin + pot


def actuation_power(x, params: PhysicalParams):
    """Power delivered by thrusts and body torques."""
    x = np.asarray(x)
    _, v, _ = vehicle_kinematics(x, params)
    t = thrust_direction(x[..., TH])
    fR, tau, dth = x[..., FR], x[..., TAU], x[..., DTH]
    thrust_power = np.sum(fR[..., None] * t * v, axis=(-1, -2))
    return thrust_power + np.sum(tau * dth, axis=-1)


def hover_thrust(params: PhysicalParams):
    """Thrusts that cancel each vehicle's own weight."""
    return np.array([params.m1 * params.g, params.m2 * params.g])
