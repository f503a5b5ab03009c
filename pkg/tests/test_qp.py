import numpy as np
import pytest

from tubenmpc.checks import random_qp
from tubenmpc.qp import (INFEASIBLE, INFTY, SOLVED, QpProblem, QpSettings, QpSolver,
                         kkt_residuals, kkt_satisfied, solve_qp)

from oracles import enumerate_qp

BACKENDS = ("daqp", "admm")


def finite(b):
    return np.where(np.abs(b) >= INFTY, np.sign(b) * np.inf, b)


@pytest.mark.parametrize("backend", BACKENDS)
def test_unconstrained_scalar(backend):
    sol = solve_qp(QpProblem([[1.0]], [-1.0], np.zeros((0, 1)), [], []), backend=backend)
    assert sol.status == SOLVED
    assert sol.z[0] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_projection_onto_interval(backend):
    sol = solve_qp(QpProblem([[1.0]], [0.0], [[1.0]], [2.0], [3.0]), backend=backend)
    assert sol.status == SOLVED
    assert sol.z[0] == pytest.approx(2.0, abs=1e-8)
    assert sol.y[0] < 0  # lower bound active


@pytest.mark.parametrize("backend", BACKENDS)
def test_equality_rows(backend):
    H = np.eye(2)
    prob = QpProblem(H, [0.0, 0.0], [[1.0, 1.0]], [1.0], [1.0])
    sol = solve_qp(prob, backend=backend)
    np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_random_qps_against_enumeration(backend):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        prob = random_qp(rng)
        sol = solve_qp(prob, backend=backend)
        assert sol.status == SOLVED
        z_ref = enumerate_qp(prob.H, prob.g, prob.A, finite(prob.lower), finite(prob.upper))
        worst = max(worst, np.max(np.abs(sol.z - z_ref)))
        assert kkt_satisfied(prob, sol.z, sol.y, 1e-7, 1e-7)
    assert worst <= 1e-6


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_detected(backend):
    prob = QpProblem(np.eye(2), [0.0, 0.0], [[1.0, 0.0], [1.0, 0.0]], [1.0, -INFTY], [INFTY, 0.0])
    assert solve_qp(prob, backend=backend).status == INFEASIBLE


def test_warm_start_reproduces_solution():
    rng = np.random.default_rng(12)
    prob = random_qp(rng)
    solver = QpSolver(QpSettings())
    cold = solver.solve(prob)
    warm = solver.solve(prob, warm_y=cold.y)
    np.testing.assert_allclose(warm.z, cold.z, atol=1e-9)


def test_kkt_residuals_zero_at_optimum():
    prob = QpProblem([[2.0]], [-2.0], [[1.0]], [-INFTY], [0.5])
    sol = solve_qp(prob)
    p, d = kkt_residuals(prob, sol.z, sol.y)[:2]
    assert p <= 1e-10 and d <= 1e-10
    assert sol.z[0] == pytest.approx(0.5)


def test_problem_validation():
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), [0.0], np.zeros((0, 1)), [], [])
    with pytest.raises(ValueError):
        QpProblem([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0], np.zeros((0, 2)), [], [])
    with pytest.raises(ValueError):
        QpProblem([[1.0]], [0.0], [[1.0]], [2.0], [1.0])
