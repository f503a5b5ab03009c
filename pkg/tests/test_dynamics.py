import numpy as np
import pytest

from tubenmpc import dynamics as dyn
from tubenmpc.dynamics import PhysicalParams

from oracles import central_difference, rk4_fine

P = PhysicalParams()
DEG = np.pi / 180


def random_state(rng):
    x = np.empty(12)
    x[0:4] = rng.uniform(-np.pi, np.pi, 4)
    x[4:8] = rng.uniform(-2, 2, 4)
    x[8:10] = rng.uniform(3, 20, 2)
    x[10:12] = rng.uniform(-5, 5, 2)
    return x


def vertical_state(fR1, fR2):
    x = np.zeros(12)
    x[0:2] = np.pi / 2
    x[8:10] = fR1, fR2
    return x


# parameters and deviations

def test_apply_deviations_identity_and_scaling():
    assert dyn.apply_deviations(P, np.zeros(6)) == P
    q = dyn.apply_deviations(P, [0.25, 0, 0, 0, 0, 0])
    assert q.m1 == pytest.approx(0.57125, abs=1e-12)
    assert q.m2 == P.m2


def test_apply_deviations_rejects_bad_input():
    with pytest.raises(ValueError):
        dyn.apply_deviations(P, [0, 0, -1.0, 0, 0, 0])
    with pytest.raises(ValueError):
        dyn.apply_deviations(P, np.zeros(5))
    with pytest.raises(ValueError):
        dyn.apply_deviations(P, [np.nan, 0, 0, 0, 0, 0])


def test_params_validated():
    with pytest.raises(ValueError):
        PhysicalParams(m1=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(n=3)


# kinematics and Lagrangian terms

def test_forward_kinematics_examples():
    _, p2 = dyn.forward_kinematics(np.array([90, 90]) * DEG, P)
    np.testing.assert_allclose(p2, [0, 1.884], atol=1e-12)
    _, p2 = dyn.forward_kinematics(np.array([0, 90]) * DEG, P)
    np.testing.assert_allclose(p2, [0.942, 0.942], atol=1e-12)


def test_forward_kinematics_link_lengths():
    phi = np.random.default_rng(0).uniform(-4, 4, (50, 2))
    p1, p2 = dyn.forward_kinematics(phi, P)
    np.testing.assert_allclose(np.linalg.norm(p1, axis=-1), P.l1, rtol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(p2 - p1, axis=-1), P.l2, rtol=1e-14)


def test_mass_matrix_examples():
    assert dyn.mass_matrix(np.array([0.3, 0.3 + np.pi / 2]), P)[0, 1] == pytest.approx(0, abs=1e-15)
    M = dyn.mass_matrix(np.zeros(2), P)
    np.testing.assert_allclose(M, [[0.81106, 0.40552], [0.40552, 0.40552]], atol=1e-5)


def test_mass_matrix_determinant_formula():
    phi = np.random.default_rng(1).uniform(-4, 4, (100, 2))
    d = phi[:, 1] - phi[:, 0]
    expected = P.m2 * P.l1 ** 2 * P.l2 ** 2 * (P.m1 + P.m2 * np.sin(d) ** 2)
    np.testing.assert_allclose(np.linalg.det(dyn.mass_matrix(phi, P)), expected, rtol=1e-12)
    assert np.all(expected > 0)


def test_bias_terms_examples():
    np.testing.assert_allclose(dyn.bias_terms(np.array([np.pi / 2] * 2), np.zeros(2), P), 0,
                               atol=1e-14)
    # (m1 + m2) g l1 and m2 g l2 multiplied out by hand
    np.testing.assert_allclose(dyn.bias_terms(np.zeros(2), np.zeros(2), P), [8.446292, 4.223146],
                               atol=1e-6)


def test_mdot_minus_2c_skew():
    rng = np.random.default_rng(2)
    for _ in range(20):
        phi, dphi = rng.uniform(-3, 3, 2), rng.uniform(-2, 2, 2)
        h = 1e-6
        Mdot = (dyn.mass_matrix(phi + h * dphi, P) - dyn.mass_matrix(phi - h * dphi, P)) / (2 * h)
        N = Mdot - 2 * dyn.coriolis_matrix(phi, dphi, P)
        np.testing.assert_allclose(N + N.T, 0, atol=1e-8)


def test_coriolis_matches_bias():
    rng = np.random.default_rng(3)
    phi, dphi = rng.uniform(-3, 3, 2), rng.uniform(-2, 2, 2)
    lhs = dyn.coriolis_matrix(phi, dphi, P) @ dphi + dyn.gravity_terms(phi, P)
    np.testing.assert_allclose(lhs, dyn.bias_terms(phi, dphi, P), atol=1e-13)


def test_generalized_thrust_examples():
    np.testing.assert_allclose(dyn.generalized_thrust(np.ones(2), np.ones(2), np.zeros(2), P), 0)
    a = 0.7
    Q = dyn.generalized_thrust(np.full(2, a), np.full(2, a), np.array([4.0, 6.0]), P)
    np.testing.assert_allclose(Q, [P.l1 * 10.0, P.l2 * 6.0], rtol=1e-14)


def test_generalized_thrust_virtual_work():
    rng = np.random.default_rng(4)
    for _ in range(20):
        phi, th, fR = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2), rng.uniform(0, 20, 2)
        t = dyn.thrust_direction(th)
        # dp_j/dphi by finite differences of forward kinematics
        J1 = central_difference(lambda q: dyn.forward_kinematics(q, P)[0], phi)
        J2 = central_difference(lambda q: dyn.forward_kinematics(q, P)[1], phi)
        expected = fR[0] * t[0] @ J1 + fR[1] * t[1] @ J2
        np.testing.assert_allclose(dyn.generalized_thrust(phi, th, fR, P), expected, atol=1e-8)


# accelerations and vector field

def test_pitch_acceleration_ratio():
    x = np.zeros(12)
    x[0:2] = 1.0, 2.0
    x[10] = 0.123
    _, thdd = dyn.accelerations(x, P)
    assert thdd[0] == pytest.approx(1.0, abs=1e-14)
    assert thdd[1] == 0.0


def test_hover_equilibrium():
    x = vertical_state(P.m1 * P.g, P.m2 * P.g)
    phidd, _ = dyn.accelerations(x, P)
    np.testing.assert_allclose(phidd, 0, atol=1e-13)
    Q = dyn.generalized_thrust(x[0:2], x[2:4], x[8:10], P)
    np.testing.assert_allclose(Q, dyn.gravity_terms(x[0:2], P), atol=1e-13)
    np.testing.assert_allclose(dyn.vector_field(x, np.zeros(4), P), 0, atol=1e-13)


def test_equations_of_motion_residual():
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = random_state(rng)
        phidd, _ = dyn.accelerations(x, P)
        res = (dyn.mass_matrix(x[0:2], P) @ phidd + dyn.bias_terms(x[0:2], x[4:6], P)
               - dyn.generalized_thrust(x[0:2], x[2:4], x[8:10], P))
        np.testing.assert_allclose(res, 0, atol=1e-12)


def test_vector_field_input_rows():
    x = random_state(np.random.default_rng(6))
    f = dyn.vector_field(x, np.zeros(4), P)
    np.testing.assert_array_equal(f[8:12], 0)
    u = np.array([1.0, -2.0, 3.0, -4.0])
    np.testing.assert_array_equal(dyn.vector_field(x, u, P)[8:12], u)


def test_unactuated_energy_conservation():
    rng = np.random.default_rng(7)
    x0 = random_state(rng)
    x0[8:12] = 0
    xT = rk4_fine(lambda s: dyn.vector_field(s, np.zeros(4), P), x0, 2.0, 1e-4)
    E0, ET = dyn.energy(x0, P), dyn.energy(xT, P)
    assert abs(ET - E0) / max(abs(E0), 1.0) <= 1e-6


def test_work_energy_rate():
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = random_state(rng)
        f = dyn.vector_field(x, np.zeros(4), P)
        h = 1e-6
        dE = (dyn.energy(x + h * f, P) - dyn.energy(x - h * f, P)) / (2 * h)
        assert dE == pytest.approx(dyn.actuation_power(x, P), rel=1e-6, abs=1e-6)


# link stresses

def test_link_stresses_hover_zero():
    x = vertical_state(P.m1 * P.g, P.m2 * P.g)
    np.testing.assert_allclose(dyn.link_stresses(x, P), 0, atol=1e-12)


def test_link_stress_tension_sign():
    x = vertical_state(P.m1 * P.g, P.m2 * P.g + 10.0)
    assert dyn.link_stresses(x, P)[1] == pytest.approx(10.0, abs=1e-12)


def test_newton_residuals_random():
    rng = np.random.default_rng(9)
    xs = np.array([random_state(rng) for _ in range(1000)])
    assert np.max(np.abs(dyn.newton_residuals(xs, P))) <= 1e-9


def test_vehicle_acceleration_matches_fd():
    rng = np.random.default_rng(10)
    x = random_state(rng)
    h = 1e-6
    f = dyn.vector_field(x, np.zeros(4), P)
    _, v_plus, _ = dyn.vehicle_kinematics(x + h * f, P)
    _, v_minus, _ = dyn.vehicle_kinematics(x - h * f, P)
    _, _, a = dyn.vehicle_kinematics(x, P)
    np.testing.assert_allclose(a, (v_plus - v_minus) / (2 * h), atol=1e-6)
