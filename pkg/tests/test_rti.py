import numpy as np
import pytest
from dataclasses import replace

from tubenmpc import rti
from tubenmpc.dynamics import PhysicalParams
from tubenmpc.qp import SOLVED, QpSolver
from tubenmpc.rti import NOMINAL, TUBE, DecisionTrajectory, OcpConfig
from tubenmpc.sensitivity import augment
from tubenmpc.simulation import trim_state
from tubenmpc.uncertainty import UncertaintyBox

from oracles import central_difference
from test_dynamics import random_state

P = PhysicalParams()
PHI_EQ = np.array([0.9, 2.2])
X_EQ = trim_state(PHI_EQ, np.array([10.0, 10.0]), P)


def static_refs(N, phi=PHI_EQ, fL=(10.0, 10.0)):
    row = np.concatenate([phi, fL, np.zeros(4)])
    return np.tile(row, (N, 1)), row[:4].copy()


def equilibrium_traj(config):
    # constant state, zero inputs; in tube mode the sensitivities are rolled out
    return rti.cold_start(X_EQ, np.zeros((12, 6)), config)


# problem size and outputs

def test_decision_variable_counts():
    assert rti.variable_count(OcpConfig(mode=NOMINAL)) == 492
    assert rti.variable_count(OcpConfig(mode=TUBE)) == 2724


def test_output_maps():
    y = rti.output_map(X_EQ, None, P)
    np.testing.assert_allclose(y[4:8], 0, atol=1e-13)
    np.testing.assert_allclose(y[2:4], 10.0, atol=1e-12)
    x = np.zeros(12)
    x[0:2] = np.pi / 2
    x[8:10] = P.m1 * P.g, P.m2 * P.g + 10
    assert rti.output_map(x, None, P)[3] == pytest.approx(10.0, abs=1e-12)
    np.testing.assert_array_equal(rti.terminal_output_map(X_EQ, P), y[:4])


def test_stage_costs():
    cfg = OcpConfig()
    r = rti.output_map(X_EQ, None, P)
    assert rti.stage_cost(X_EQ, None, r, cfg.Q, P) == 0.0
    x = X_EQ.copy()
    x[0] += 1.0
    r1 = rti.output_map(x, None, P)
    r1[0] -= 1.0
    assert rti.stage_cost(x, None, r1, cfg.Q, P) == pytest.approx(2.5)
    Q = cfg.Q.copy()
    Q[4:] = 0.0
    r2 = r.copy()
    r2[4:] += 123.0
    assert rti.stage_cost(X_EQ, None, r2, Q, P) == 0.0
    assert rti.terminal_cost(X_EQ, r[:4], cfg.QN, P) == 0.0


def test_weight_expansion():
    np.testing.assert_array_equal(rti.expand_pairs([5, 1]), [5, 5, 1, 1])
    np.testing.assert_array_equal(OcpConfig().Q, [5, 5, 1, 1, 0.1, 0.1, 0.1, 0.1])


def test_config_validation():
    with pytest.raises(ValueError):
        OcpConfig(mode="robust")
    with pytest.raises(ValueError):
        OcpConfig(N=0)
    with pytest.raises(ValueError):
        OcpConfig(Q=np.ones(4))


# linearization

@pytest.mark.parametrize("mode", [NOMINAL, TUBE])
def test_linearize_stage_against_differences(mode):
    cfg = OcpConfig(mode=mode)
    rng = np.random.default_rng(0)
    x = random_state(rng)
    x[4:8] *= 0.3
    xs = augment(x, 0.1 * rng.normal(size=(12, 6))) if mode == TUBE else x
    u = rng.normal(size=4)
    blk = rti.linearize_stage(xs, u, np.zeros(8), cfg)
    fdA = central_difference(lambda s: rti.shooting_step(s, u, cfg), xs)
    fdB = central_difference(lambda v: rti.shooting_step(xs, v, cfg), u)
    scale = lambda M: np.maximum(np.abs(M), 1.0)
    assert np.max(np.abs(blk["A"] - fdA) / scale(fdA)) <= 1e-5
    assert np.max(np.abs(blk["B"] - fdB) / scale(fdB)) <= 1e-5
    assert np.min(np.linalg.eigvalsh(blk["hessian"])) >= -1e-10
    if mode == NOMINAL:
        assert blk["constraint_grads"].shape[1] == 12
    else:
        fdc = central_difference(lambda s: rti.constraint_rows(s[None], cfg)[0][0], xs)
        np.testing.assert_allclose(blk["constraint_grads"], fdc, atol=1e-6)


def test_nominal_constraint_rows_have_no_sensitivity_block():
    cfg = OcpConfig(mode=TUBE, uncertainty=UncertaintyBox())
    nominal = replace(cfg, mode=NOMINAL)
    x = random_state(np.random.default_rng(1))
    _, g = rti.constraint_rows(x[None], nominal)
    assert g.shape == (1, 5, 12)
    _, gt = rti.constraint_rows(rti.measured_state(x, np.ones((12, 6)), cfg)[None], cfg)
    assert np.any(gt[0, :, 12:])


# condensed QP

@pytest.mark.parametrize("mode", [NOMINAL, TUBE])
def test_zero_step_at_optimum(mode):
    cfg = OcpConfig(mode=mode, N=10, uncertainty=UncertaintyBox.zero())
    traj = equilibrium_traj(cfg)
    dxs, du, sol, _ = rti.condense_and_solve(traj, static_refs(cfg.N), traj.states[0], cfg,
                                             QpSolver(cfg.qp))
    assert sol.status == SOLVED
    assert np.max(np.abs(du)) <= 1e-9
    assert np.max(np.abs(dxs)) <= 1e-9


def test_single_stage_matches_sparse_kkt():
    cfg = OcpConfig(N=1)
    x0 = X_EQ.copy()
    x0[0] += 0.01
    x0[4] = 0.05
    traj = DecisionTrajectory(np.stack([X_EQ, X_EQ]), np.array([[1.0, -1.0, 0.5, 0.2]]))
    refs = static_refs(1)
    lin = rti.linearize(traj, cfg)
    _, du, sol, _ = rti.condense_and_solve(traj, refs, x0, cfg, QpSolver(cfg.qp), lin=lin)
    assert sol.status == SOLVED

    # sparse variables w = (dx0, dx1, du0) with the dynamics as equality constraints
    n = 12 + 12 + 4
    sqN = np.sqrt(cfg.QN)
    Jt = np.zeros((4, n))
    Jt[:, 12:24] = sqN[:, None] * lin.JyN
    rt = sqN * (lin.yN - refs[1])
    Hs = Jt.T @ Jt
    Hs[24:, 24:] += cfg.lambda_reg * np.eye(4)
    gs = Jt.T @ rt
    E = np.zeros((24, n))
    E[:12, :12] = np.eye(12)
    E[12:, :12] = -lin.A[0]
    E[12:, 12:24] = np.eye(12)
    E[12:, 24:] = -lin.B[0]
    e = np.concatenate([x0 - traj.states[0], lin.defects[0]])
    K = np.block([[Hs, E.T], [E, np.zeros((24, 24))]])
    # the Hessian is singular in dx0 directions that the equalities pin down, so K is regular
    w = np.linalg.solve(K, np.concatenate([-gs, e]))[:n]
    np.testing.assert_allclose(du[0], w[24:], atol=1e-8, rtol=1e-8)


def test_zero_box_tube_matches_nominal_step():
    base = OcpConfig(N=15, uncertainty=UncertaintyBox.zero())
    tube = replace(base, mode=TUBE)
    x0 = X_EQ.copy()
    x0[0:2] += [-0.08, 0.05]
    refs = static_refs(base.N)
    steps = []
    for cfg in (base, tube):
        traj = rti.cold_start(x0, np.zeros((12, 6)), cfg)
        _, du, sol, _ = rti.condense_and_solve(traj, refs, traj.states[0], cfg, QpSolver(cfg.qp))
        assert sol.status == SOLVED
        steps.append(du)
    np.testing.assert_allclose(steps[0], steps[1], atol=1e-8)


# real-time iteration

def test_converged_warm_start_gives_zero_input():
    cfg = OcpConfig(N=10)
    u0, warm, diag, _ = rti.rti_step(X_EQ, None, static_refs(cfg.N), cfg, equilibrium_traj(cfg))
    assert diag.qp_status == SOLVED
    assert np.linalg.norm(u0) <= 1e-6
    assert warm.states.shape == (11, 12)


def test_zero_box_rti_inputs_identical():
    base = OcpConfig(N=15, uncertainty=UncertaintyBox.zero())
    tube = replace(base, mode=TUBE)
    x0 = X_EQ.copy()
    x0[0:2] += [-0.08, 0.05]
    refs = static_refs(base.N)
    u = []
    for cfg in (base, tube):
        ctrl = rti.RtiController(cfg)
        for _ in range(3):
            u0, diag = ctrl.step(x0, np.zeros((12, 6)), refs)
            assert diag.qp_status == SOLVED
        u.append(u0)
    np.testing.assert_allclose(u[0], u[1], atol=1e-8)


def test_repeated_iterations_contract():
    cfg = OcpConfig(N=15)
    x0 = X_EQ.copy()
    x0[0:2] += [-0.1, 0.07]
    res = rti.solve_full(x0, None, static_refs(cfg.N), cfg, kkt_tol=1e-10, max_sqp_iter=25)
    norms = np.array(res.step_norms)
    # the last torque rates barely reach the outputs, so the regularized steps along
    # those directions shrink slowly; they must still never grow
    assert norms[-1] < 1e-2 * norms[0]
    tail = norms[3:]
    assert np.all(np.diff(tail) <= 0.0)


@pytest.mark.parametrize("mode", [NOMINAL, TUBE])
def test_full_solve_feasible(mode):
    cfg = OcpConfig(N=12, mode=mode)
    x0 = X_EQ.copy()
    x0[0:2] += [-0.1, 0.07]
    res = rti.solve_full(x0, np.zeros((12, 6)), static_refs(cfg.N), cfg, kkt_tol=1e-9,
                         max_sqp_iter=15)
    assert res.iterations == 15 or res.converged
    assert np.max(np.abs(rti.dynamics_defects(res.trajectory, cfg))) <= 1e-8
    vals, _ = rti.constraint_rows(res.trajectory.states[1:], cfg)
    assert np.max(vals) <= 1e-8
    lo, hi = cfg.boxes.input_bounds()
    assert np.all(res.trajectory.inputs >= lo - 1e-8) and np.all(res.trajectory.inputs <= hi + 1e-8)


def test_shift_drops_first_stage():
    cfg = OcpConfig(N=4)
    traj = DecisionTrajectory(np.arange(60.0).reshape(5, 12), np.arange(16.0).reshape(4, 4))
    s = rti.shift(traj)
    np.testing.assert_array_equal(s.states[:4], traj.states[1:])
    np.testing.assert_array_equal(s.states[4], traj.states[4])
    np.testing.assert_array_equal(s.inputs[3], traj.inputs[3])
    assert rti.variable_count(cfg) == 5 * 12 + 16


def test_blown_up_guess_is_reported_not_raised():
    cfg = OcpConfig(N=5)
    warm = equilibrium_traj(cfg)
    warm.states[2, 4] = np.inf
    u0, nxt, diag, _ = rti.rti_step(X_EQ, None, static_refs(cfg.N), cfg, warm)
    assert diag.qp_status == rti.NONFINITE
    # the failed step leaves the guess untouched apart from the shift
    np.testing.assert_array_equal(nxt.states[0], warm.states[1])


def test_failed_qp_holds_actuator_commands():
    cfg = OcpConfig(N=5)
    ctrl = rti.RtiController(cfg)
    ctrl.step(X_EQ, None, static_refs(cfg.N))
    ctrl.warm.states[3, 5] = np.nan
    u0, diag = ctrl.step(X_EQ, None, static_refs(cfg.N))
    assert diag.qp_status != SOLVED
    np.testing.assert_array_equal(u0, 0.0)
    assert ctrl.warm is None
    # the next period starts again from the measurement
    _, diag = ctrl.step(X_EQ, None, static_refs(cfg.N))
    assert diag.qp_status == SOLVED
