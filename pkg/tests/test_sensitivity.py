import numpy as np
import pytest

from tubenmpc import sensitivity as sens
from tubenmpc.dynamics import PhysicalParams, apply_deviations, vector_field

from oracles import central_difference, rk4_fine
from test_dynamics import random_state

P = PhysicalParams()


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))


def test_fx_structure():
    x = random_state(np.random.default_rng(0))
    A = sens.jacobian_fx(x, np.zeros(4), P)
    np.testing.assert_array_equal(A[0:4, 4:8], np.eye(4))
    assert A[6, 10] == pytest.approx(1 / P.J1)
    assert A[7, 11] == pytest.approx(1 / P.J2)
    assert A[6, 11] == 0 and A[7, 10] == 0
    assert not A[8:12].any()


def test_fx_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x, u = random_state(rng), rng.normal(size=4)
        fd = central_difference(lambda s: vector_field(s, u, P), x)
        assert rel_err(sens.jacobian_fx(x, u, P), fd) <= 1e-5


def test_fp_structure():
    x = random_state(np.random.default_rng(2))
    Fp = sens.jacobian_fp(x, np.zeros(4), P)
    assert not Fp[0:4].any()
    assert not Fp[8:12].any()
    assert Fp[6, 4] == pytest.approx(-x[10] / P.J1)
    assert Fp[7, 5] == pytest.approx(-x[11] / P.J2)


def test_fp_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(100):
        x, u = random_state(rng), rng.normal(size=4)
        fd = central_difference(lambda d: vector_field(x, u, apply_deviations(P, d)), np.zeros(6))
        assert rel_err(sens.jacobian_fp(x, u, P), fd) <= 1e-5


def test_sensitivity_rhs_special_cases():
    rng = np.random.default_rng(4)
    x, u = random_state(rng), rng.normal(size=4)
    np.testing.assert_allclose(sens.sensitivity_rhs(x, u, np.zeros((12, 6)), P),
                               sens.jacobian_fp(x, u, P), atol=1e-14)
    Pi = rng.normal(size=(12, 6))
    expected = sens.jacobian_fx(x, u, P) @ Pi + sens.jacobian_fp(x, u, P)
    np.testing.assert_allclose(sens.sensitivity_rhs(x, u, Pi, P), expected, atol=1e-12)
    # resting, torque-free, thrust-free state in a zero-gravity world has f_p = 0
    x0 = np.zeros(12)
    x0[0:2] = 0.3, 1.2
    g0 = PhysicalParams(g=1e-300)
    np.testing.assert_allclose(sens.sensitivity_rhs(x0, np.zeros(4), np.zeros((12, 6)), g0), 0,
                               atol=1e-250)


def test_sensitivity_matches_perturbed_rollouts():
    x0 = np.zeros(12)
    x0[0:2] = 0.6, 1.9
    x0[8:10] = 6.0, 5.0
    h, steps = 0.005, 200

    def u_of(k):
        t = k * h
        return np.array([2 * np.sin(3 * t), -1.5 * np.cos(2 * t), 0.5, -0.3 * t])

    xa = sens.augment(x0, np.zeros((12, 6)))
    for k in range(steps):
        xa = sens.augmented_step(xa, u_of(k), h, P)
    _, Pi = sens.split(xa)

    eps = 1e-4
    for col in range(6):
        ends = []
        for sign in (1, -1):
            d = np.zeros(6)
            d[col] = sign * eps
            q = apply_deviations(P, d)
            x = x0.copy()
            for k in range(steps):
                x = sens.state_step(x, u_of(k), h, q)
            ends.append(x)
        fd = (ends[0] - ends[1]) / (2 * eps)
        assert np.linalg.norm(Pi[:, col] - fd) <= 1e-3 * np.linalg.norm(fd)


def test_augmented_layout_and_composition():
    rng = np.random.default_rng(5)
    x, u, Pi = random_state(rng), rng.normal(size=4), rng.normal(size=(12, 6))
    out = sens.augmented_rhs(sens.augment(x, Pi), u, P)
    np.testing.assert_allclose(out[:12], vector_field(x, u, P), atol=1e-13)
    Pidot = sens.sensitivity_rhs(x, u, Pi, P)
    for r in range(12):
        for c in range(6):
            assert out[12 + c * 12 + r] == pytest.approx(Pidot[r, c], abs=1e-12)


def test_augmented_at_equilibrium():
    x = np.zeros(12)
    x[0:2] = np.pi / 2
    x[8:10] = P.m1 * P.g, P.m2 * P.g
    out = sens.augmented_rhs(sens.augment(x, np.zeros((12, 6))), np.zeros(4), P)
    np.testing.assert_allclose(out[:12], 0, atol=1e-13)
    np.testing.assert_allclose(out[12:], sens.vec(sens.jacobian_fp(x, np.zeros(4), P)), atol=1e-13)


def test_vec_roundtrip():
    Pi = np.arange(72.0).reshape(12, 6)
    v = sens.vec(Pi)
    assert v[12] == Pi[0, 1]
    np.testing.assert_array_equal(sens.unvec(v), Pi)


def test_rk4_trivial_cases():
    s = np.array([1.0, -2.0])
    np.testing.assert_array_equal(sens.rk4_step(lambda s, u: 0 * s, s, None, 0.1), s)
    h = 0.01
    out = sens.rk4_step(lambda s, u: s, np.array([2.0]), None, h)
    assert out[0] == pytest.approx(2 * (1 + h + h ** 2 / 2 + h ** 3 / 6 + h ** 4 / 24), rel=1e-15)
    with pytest.raises(ValueError):
        sens.rk4_step(lambda s, u: s, s, None, 0.0)


def test_rk4_fifth_order_local_error():
    x0 = random_state(np.random.default_rng(6))
    x0[4:8] *= 0.3
    u = np.array([1.0, -1.0, 0.5, 0.2])
    errs = []
    for h in (0.02, 0.01):
        fine = rk4_fine(lambda s: vector_field(s, u, P), x0, h, 1e-5)
        errs.append(np.linalg.norm(sens.state_step(x0, u, h, P) - fine))
    assert 2 ** 4 <= errs[0] / errs[1] <= 2 ** 6
