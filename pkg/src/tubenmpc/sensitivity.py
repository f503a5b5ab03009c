"""Analytic Jacobians, parametric sensitivity dynamics and RK4 discretization."""
import numpy as np

from .dynamics import NP, NU, NX, PhysicalParams, vector_field

NXA = NX + NX * NP  # augmented state size (84)


def _accel_partials(x, params: PhysicalParams):
    """Link accelerations and their exact partials.

    Returns ``(phiddot, dx, dp)`` with ``dx = d(phiddot)/dx`` of shape
    ``(..., 2, 12)`` and ``dp`` the partials w.r.t. the relative deviations of
    ``(m1, m2, l1, l2)``, shape ``(..., 2, 4)``. Trigonometry and the mass
    matrix are shared between all three.
    """
    x = np.asarray(x)
    x = x.astype(np.result_type(x, float), copy=False)
    phi1, phi2 = x[..., 0], x[..., 1]
    th1, th2 = x[..., 2], x[..., 3]
    w1, w2 = x[..., 4], x[..., 5]
    f1, f2 = x[..., 8], x[..., 9]
    m1, m2, l1, l2, g = params.m1, params.m2, params.l1, params.l2, params.g
    k = m2 * l1 * l2
    s = np.sin(phi2 - phi1)
    c = np.cos(phi2 - phi1)
    c11, c12 = np.cos(phi1 - th1), np.cos(phi1 - th2)
    s11, s12 = np.sin(phi1 - th1), np.sin(phi1 - th2)
    c22, s22 = np.cos(phi2 - th2), np.sin(phi2 - th2)
    cp1, cp2 = np.cos(phi1), np.cos(phi2)
    sp1, sp2 = np.sin(phi1), np.sin(phi2)
    w1s, w2s = w1 ** 2, w2 ** 2

    # M a = r with r = Q - bias
    M11 = (m1 + m2) * l1 ** 2
    M12 = k * c
    M22 = m2 * l2 ** 2
    r1 = l1 * (f1 * c11 + f2 * c12) + k * s * w2s - (m1 + m2) * g * l1 * cp1
    r2 = l2 * f2 * c22 - k * s * w1s - m2 * g * l2 * cp2
    det = M11 * M22 - M12 ** 2
    i11, i12, i22 = M22 / det, -M12 / det, M11 / det
    a1 = i11 * r1 + i12 * r2
    a2 = i12 * r1 + i22 * r2
    phiddot = np.stack([a1, a2], axis=-1)

    # d(phiddot)/dz = M^-1 (dr/dz - dM/dz phiddot); M depends on phi only via M12
    dM12 = k * s  # d M12 / d phi1 (and minus that w.r.t. phi2)
    dr = np.zeros(x.shape[:-1] + (2, NX), dtype=x.dtype)
    dr[..., 0, 0] = (-l1 * (f1 * s11 + f2 * s12) - k * c * w2s + (m1 + m2) * g * l1 * sp1
                     - dM12 * a2)
    dr[..., 0, 1] = k * c * w2s + dM12 * a2
    dr[..., 0, 2] = l1 * f1 * s11
    dr[..., 0, 3] = l1 * f2 * s12
    dr[..., 0, 5] = 2.0 * k * s * w2
    dr[..., 0, 8] = l1 * c11
    dr[..., 0, 9] = l1 * c12
    dr[..., 1, 0] = k * c * w1s - dM12 * a1
    dr[..., 1, 1] = -l2 * f2 * s22 - k * c * w1s + m2 * g * l2 * sp2 + dM12 * a1
    dr[..., 1, 3] = l2 * f2 * s22
    dr[..., 1, 4] = -2.0 * k * s * w1
    dr[..., 1, 9] = l2 * c22

    # parameter partials of (r - M a) w.r.t. (m1, m2, l1, l2), each times its nominal value
    rp = np.empty(x.shape[:-1] + (2, 4), dtype=x.dtype)
    rp[..., 0, 0] = m1 * (-g * l1 * cp1 - l1 ** 2 * a1)
    rp[..., 1, 0] = 0.0
    rp[..., 0, 1] = m2 * (l1 * l2 * s * w2s - g * l1 * cp1 - l1 ** 2 * a1 - l1 * l2 * c * a2)
    rp[..., 1, 1] = m2 * (-l1 * l2 * s * w1s - g * l2 * cp2 - l1 * l2 * c * a1 - l2 ** 2 * a2)
    rp[..., 0, 2] = l1 * (f1 * c11 + f2 * c12 + m2 * l2 * s * w2s - (m1 + m2) * g * cp1
                          - 2.0 * (m1 + m2) * l1 * a1 - m2 * l2 * c * a2)
    rp[..., 1, 2] = l1 * (-m2 * l2 * s * w1s - m2 * l2 * c * a1)
    rp[..., 0, 3] = l2 * (m2 * l1 * s * w2s - m2 * l1 * c * a2)
    rp[..., 1, 3] = l2 * (f2 * c22 - m2 * l1 * s * w1s - m2 * g * cp2 - m2 * l1 * c * a1
                          - 2.0 * m2 * l2 * a2)

    i11, i12, i22 = i11[..., None], i12[..., None], i22[..., None]
    dx = np.stack([i11 * dr[..., 0, :] + i12 * dr[..., 1, :],
                   i12 * dr[..., 0, :] + i22 * dr[..., 1, :]], axis=-2)
    dp = np.stack([i11 * rp[..., 0, :] + i12 * rp[..., 1, :],
                   i12 * rp[..., 0, :] + i22 * rp[..., 1, :]], axis=-2)
    return phiddot, dx, dp


def jacobian_fx(x, u, params: PhysicalParams):
    """Exact state Jacobian of the extended vector field, shape ``(..., 12, 12)``."""
    x = np.asarray(x)
    _, dacc, _ = _accel_partials(x, params)
    A = np.zeros(x.shape[:-1] + (NX, NX), dtype=dacc.dtype)
    A[..., 0, 4] = A[..., 1, 5] = A[..., 2, 6] = A[..., 3, 7] = 1.0
    A[..., 4:6, :] = dacc
    A[..., 6, 10] = 1.0 / params.J1
    A[..., 7, 11] = 1.0 / params.J2
    return A


def jacobian_fu(x=None):
    """Input Jacobian of the extended vector field (constant)."""
    B = np.zeros((NX, NU))
    B[8:12, :] = np.eye(NU)
    return B


def jacobian_fp(x, u, nominal: PhysicalParams):
    """Jacobian of the vector field w.r.t. the deviation vector at zero deviation.

    Chain rule through ``theta = (1 + delta) theta_R`` multiplies each
    physical partial by the nominal value.
    """
    x = np.asarray(x)
    _, _, dp = _accel_partials(x, nominal)
    Fp = np.zeros(x.shape[:-1] + (NX, NP), dtype=dp.dtype)
    Fp[..., 4:6, 0:4] = dp
    Fp[..., 6, 4] = -x[..., 10] / nominal.J1
    Fp[..., 7, 5] = -x[..., 11] / nominal.J2
    return Fp


def sensitivity_rhs(x, u, Pi, params: PhysicalParams):
    """Variational dynamics ``Pi_dot = f_x Pi + f_p`` at the nominal parameters."""
    return _sensitivity_rhs(x, Pi, params, _accel_partials(x, params))


def _sensitivity_rhs(x, Pi, params, partials):
    # f_x is sparse: kinematic identities, the two acceleration rows and tau/J
    _, dacc, dp = partials
    Pi = np.asarray(Pi)
    out = np.zeros(np.broadcast_shapes(Pi.shape, x.shape[:-1] + (NX, NP)),
                   dtype=np.result_type(Pi, dacc))
    out[..., 0:4, :] = Pi[..., 4:8, :]
    out[..., 4:6, :] = dacc @ Pi
    out[..., 4:6, 0:4] += dp
    out[..., 6, :] = Pi[..., 10, :] / params.J1
    out[..., 7, :] = Pi[..., 11, :] / params.J2
    out[..., 6, 4] -= x[..., 10] / params.J1
    out[..., 7, 5] -= x[..., 11] / params.J2
    return out


def vec(Pi):
    """Column-major vectorization of ``(..., 12, 6)`` sensitivity matrices."""
    Pi = np.asarray(Pi)
    return np.swapaxes(Pi, -1, -2).reshape(Pi.shape[:-2] + (NX * NP,))


def unvec(v):
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (NP, NX)), -1, -2)


def augment(x, Pi):
    """Stack ``[x; vec(Pi)]`` into the 84-entry augmented state."""
    x = np.asarray(x)
    return np.concatenate([x, vec(Pi)], axis=-1)


def split(xa):
    xa = np.asarray(xa)
    return xa[..., :NX], unvec(xa[..., NX:])


def augmented_rhs(xa, u, params: PhysicalParams):
    xa = np.asarray(xa)
    x, Pi = split(xa)
    partials = _accel_partials(x, params)
    out = np.empty(np.broadcast_shapes(xa.shape, np.shape(u)[:-1] + (NXA,)),
                   dtype=np.result_type(xa, u, float))
    out[..., 0:4] = x[..., 4:8]
    out[..., 4:6] = partials[0]
    out[..., 6] = x[..., 10] / params.J1
    out[..., 7] = x[..., 11] / params.J2
    out[..., 8:12] = u
    out[..., NX:] = vec(_sensitivity_rhs(x, Pi, params, partials))
    return out


def rk4_step(rhs, s, u, h):
    """One classical RK4 step of ``sdot = rhs(s, u)`` with ``u`` held constant."""
    if h <= 0:
        raise ValueError("step size must be positive")
    k1 = rhs(s, u)
    k2 = rhs(s + 0.5 * h * k1, u)
    k3 = rhs(s + 0.5 * h * k2, u)
    k4 = rhs(s + h * k3, u)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def state_step(x, u, h, params: PhysicalParams):
    """Discrete state map F over one step of length ``h``."""
    return rk4_step(lambda s, v: vector_field(s, v, params), x, u, h)


def augmented_step(xa, u, h, params: PhysicalParams):
    """Discrete augmented map (F, F_Pi), consistent with :func:`state_step`."""
    return rk4_step(lambda s, v: augmented_rhs(s, v, params), xa, u, h)
