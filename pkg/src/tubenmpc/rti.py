"""Multiple-shooting NMPC with real-time iterations.

Both the nominal problem (12 shooting states per stage) and the tube problem
(84 shooting states: the extended state plus the column-stacked sensitivity
matrix) are handled by the same Gauss-Newton machinery. Each real-time
iteration linearizes the dynamics by complex-step differentiation through
the RK4 map, condenses the state deviations out and solves a dense QP over
the input deviations.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from . import constraints as cons
from .constraints import BoxSets, ConstraintSpec
from .dynamics import NP, NU, NX, PhysicalParams, accelerations, link_stresses
from .qp import INFTY, SOLVED, QpProblem, QpSettings, QpSolution, QpSolver
from .sensitivity import NXA, augmented_step, state_step, unvec, vec
from .uncertainty import UncertaintyBox, weighting_matrix

NOMINAL = "nominal"
TUBE = "tube"
# QP status when the condensed data overflows; counts as a solver failure
NONFINITE = "nonfinite"

NY = 8
NYN = 4
_CS_STEP = 1e-30


def expand_pairs(weights):
    """Repeat each listed weight for a pair of outputs: (a, b) -> (a, a, b, b)."""
    return np.repeat(np.asarray(weights, dtype=float), 2)


@dataclass
class OcpConfig:
    N: int = 30
    Ts: float = 0.01
    mode: str = NOMINAL
    Q: np.ndarray = field(default_factory=lambda: expand_pairs([5.0, 1.0, 0.1, 0.1]))
    QN: np.ndarray = field(default_factory=lambda: expand_pairs([50.0, 10.0]))
    boxes: BoxSets = field(default_factory=BoxSets)
    dphi_min: float = np.deg2rad(30.0)
    uncertainty: UncertaintyBox = field(default_factory=UncertaintyBox)
    eps_s: float = 1e-12
    lambda_reg: float = 1e-9
    enforce_initial_stage: bool = False
    qp: QpSettings = field(default_factory=QpSettings)
    params: PhysicalParams = field(default_factory=PhysicalParams)

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.QN = np.asarray(self.QN, dtype=float)
        if self.N < 1:
            raise ValueError("horizon must have at least one step")
        if self.Ts <= 0:
            raise ValueError("sampling time must be positive")
        if self.mode not in (NOMINAL, TUBE):
            raise ValueError(f"mode must be 'nominal' or 'tube', got {self.mode!r}")
        if self.Q.shape != (NY,) or self.QN.shape != (NYN,):
            raise ValueError("Q needs 8 and QN 4 diagonal entries")
        if np.any(self.Q < 0) or np.any(self.QN < 0):
            raise ValueError("weights must be non-negative")
        if self.eps_s <= 0:
            raise ValueError("eps_s must be positive")

    @property
    def tube(self):
        return self.mode == TUBE

    @property
    def nx(self):
        """Shooting-state dimension."""
        return NXA if self.tube else NX

    @property
    def specs(self):
        return cons.default_constraints(self.boxes, self.dphi_min, self.tube)

    @property
    def W_p(self):
        return weighting_matrix(self.uncertainty)


def variable_count(config: OcpConfig):
    return config.nx * (config.N + 1) + NU * config.N


@dataclass
class DecisionTrajectory:
    """Shooting states ``(N+1, nx)`` and inputs ``(N, 4)``."""

    states: np.ndarray
    inputs: np.ndarray

    def copy(self):
        return DecisionTrajectory(self.states.copy(), self.inputs.copy())

    @property
    def size(self):
        return self.states.size + self.inputs.size


def output_map(x, u, params: PhysicalParams):
    """Stage output ``[phi, fL, dphi, phiddot]`` (8)."""
    x = np.asarray(x)
    phiddot, _ = accelerations(x, params)
    return np.concatenate([x[..., 0:2], link_stresses(x, params), x[..., 4:6], phiddot], axis=-1)


def terminal_output_map(x, params: PhysicalParams):
    """Terminal output ``[phi, fL]`` (4)."""
    x = np.asarray(x)
    return np.concatenate([x[..., 0:2], link_stresses(x, params)], axis=-1)


def stage_cost(x, u, r, Q, params: PhysicalParams):
    e = output_map(x, u, params) - r
    return 0.5 * np.sum(np.asarray(Q) * e ** 2, axis=-1)


def terminal_cost(x, r_N, Q_N, params: PhysicalParams):
    e = terminal_output_map(x, params) - r_N
    return 0.5 * np.sum(np.asarray(Q_N) * e ** 2, axis=-1)


def objective(traj: DecisionTrajectory, refs, config: OcpConfig):
    stage_refs, term_ref = refs
    xs = traj.states[:, :NX]
    return (np.sum(stage_cost(xs[:-1], traj.inputs, stage_refs, config.Q, config.params))
            + terminal_cost(xs[-1], term_ref, config.QN, config.params))


def shooting_step(xs, u, config: OcpConfig):
    """Discrete shooting map on the configured state space."""
    if config.tube:
        return augmented_step(xs, u, config.Ts, config.params)
    return state_step(xs, u, config.Ts, config.params)


def dynamics_jacobians(xs, us, config: OcpConfig):
    """Next states and Jacobians of the discrete map for a batch of stages.

    Returns ``(F, A, B)`` with ``A = dF/dxs`` of shape ``(K, nx, nx)`` and
    ``B = dF/du`` of shape ``(K, nx, 4)``. Derivatives w.r.t. the extended
    state and input are taken by complex step through RK4; the sensitivity
    columns of the augmented map are exactly ``I (x) dF/dx`` because the
    stacked RK4 stages are the forward-mode derivative of the state map.
    """
    xs = np.asarray(xs, dtype=float)
    us = np.asarray(us, dtype=float)
    K, nx = xs.shape
    nd = NX + NU
    seeds = np.eye(nd) * _CS_STEP
    xc = np.repeat(xs[:, None, :], nd, axis=1).astype(complex)
    uc = np.repeat(us[:, None, :], nd, axis=1).astype(complex)
    xc[:, :, :NX] += 1j * seeds[:, :NX]
    uc += 1j * seeds[:, NX:]
    Fc = shooting_step(xc, uc, config)
    F = Fc[:, 0, :].real.copy()
    D = np.swapaxes(Fc.imag / _CS_STEP, 1, 2)  # (K, nx, 16)
    A = np.zeros((K, nx, nx))
    A[:, :, :NX] = D[:, :, :NX]
    B = D[:, :, NX:].copy()
    if config.tube:
        Fx = D[:, :NX, :NX]
        for k in range(NP):
            blk = slice(NX + k * NX, NX + (k + 1) * NX)
            A[:, blk, blk] = Fx
    return F, A, B


def output_jacobians(xs, config: OcpConfig, terminal=False):
    """Outputs and their Jacobians w.r.t. the extended state (complex step)."""
    xs = np.asarray(xs, dtype=float)[..., :NX]
    xc = np.repeat(xs[:, None, :], NX, axis=1).astype(complex)
    xc += 1j * _CS_STEP * np.eye(NX)
    if terminal:
        yc = terminal_output_map(xc, config.params)
    else:
        yc = output_map(xc, None, config.params)
    return yc[:, 0, :].real.copy(), np.swapaxes(yc.imag / _CS_STEP, 1, 2)


def constraint_rows(xs, config: OcpConfig):
    """Tightened constraint values and gradients for a batch of shooting states.

    Returns ``(values (K, nc), grads (K, nc, nx))``.
    """
    xs = np.asarray(xs, dtype=float)
    K = xs.shape[0]
    x = xs[:, :NX]
    Pi = unvec(xs[:, NX:]) if config.tube else np.zeros((K, NX, NP))
    W = config.W_p
    specs = config.specs
    vals = np.empty((K, len(specs)))
    grads = np.zeros((K, len(specs), config.nx))
    for c, spec in enumerate(specs):
        v, dx, dPi = cons.tightened_row(spec, x, Pi, W, config.eps_s)
        vals[:, c] = v
        grads[:, c, :NX] = dx
        if config.tube:
            grads[:, c, NX:] = vec(dPi)
    return vals, grads


def constraint_margins(xs, config: OcpConfig):
    """Tightening margins per constraint (zeros in nominal mode)."""
    xs = np.asarray(xs, dtype=float)
    if not config.tube:
        return np.zeros(xs.shape[:-1] + (len(config.specs),))
    x, Pi = xs[..., :NX], unvec(xs[..., NX:])
    out = []
    for spec in config.specs:
        Pi_y = cons.constraint_sensitivity(spec, x, Pi)
        out.append(cons.tightening_margin(Pi_y, config.W_p, config.eps_s))
    return np.stack(out, axis=-1)


@dataclass
class Linearization:
    F: np.ndarray        # (N, nx) shooting map at each stage
    A: np.ndarray        # (N, nx, nx)
    B: np.ndarray        # (N, nx, 4)
    defects: np.ndarray  # (N, nx)
    y: np.ndarray        # (N, 8) stage outputs
    Jy: np.ndarray       # (N, 8, 12)
    yN: np.ndarray       # (4,)
    JyN: np.ndarray      # (4, 12)
    cval: np.ndarray     # (N+1, nc)
    cgrad: np.ndarray    # (N+1, nc, nx)


def linearize(traj: DecisionTrajectory, config: OcpConfig):
    """Gauss-Newton model of the whole horizon around ``traj``."""
    xs, us = traj.states, traj.inputs
    F, A, B = dynamics_jacobians(xs[:-1], us, config)
    y, Jy = output_jacobians(xs[:-1], config)
    yN, JyN = output_jacobians(xs[-1:], config, terminal=True)
    cval, cgrad = constraint_rows(xs, config)
    return Linearization(F=F, A=A, B=B, defects=F - xs[1:], y=y, Jy=Jy, yN=yN[0],
                         JyN=JyN[0], cval=cval, cgrad=cgrad)


def linearize_stage(xs, u, r, config: OcpConfig):
    """Gauss-Newton blocks of a single stage.

    Returns a dict with the weighted output residual and its Jacobians, the
    dynamics sensitivities and the constraint rows.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    F, A, B = dynamics_jacobians(xs, u, config)
    y, Jy = output_jacobians(xs, config)
    sq = np.sqrt(config.Q)
    cval, cgrad = constraint_rows(xs, config)
    Jres_x = np.zeros((NY, config.nx))
    Jres_x[:, :NX] = sq[:, None] * Jy[0]
    return {
        "residual": sq * (y[0] - np.asarray(r)),
        "J_residual_x": Jres_x,
        "J_residual_u": np.zeros((NY, NU)),
        "F": F[0], "A": A[0], "B": B[0],
        "constraint_values": cval[0], "constraint_grads": cgrad[0],
        "hessian": Jres_x.T @ Jres_x,
    }


@dataclass
class CondensedQp:
    problem: QpProblem
    S: np.ndarray       # (N+1, nx, 4N) state-deviation sensitivity to input deviations
    s: np.ndarray       # (N+1, nx) affine part
    row_stage: np.ndarray
    initial_violation: float


def condense(traj: DecisionTrajectory, lin: Linearization, x0, refs, config: OcpConfig):
    """Eliminate the state deviations and assemble the dense QP in ``du``.

    Returns None if the condensed data is not finite or its bounds cross.
    """
    N, nx, nu = config.N, config.nx, NU
    nz = nu * N
    stage_refs, term_ref = refs
    x0 = np.asarray(x0, dtype=float)

    S = np.zeros((N + 1, nx, nz))
    s = np.zeros((N + 1, nx))
    s[0] = x0 - traj.states[0]
    for i in range(N):
        cols = slice(0, nu * i)
        if config.tube:
            Fx = lin.A[i, :NX, :NX]
            Si = S[i, :, cols]
            nxt = np.empty((nx, nu * i))
            nxt[:NX] = Fx @ Si[:NX]
            sens = Si[NX:].reshape(NP, NX, -1)
            nxt[NX:] = (lin.A[i, NX:, :NX] @ Si[:NX]
                        + (Fx @ sens).reshape(NX * NP, -1))
            S[i + 1, :, cols] = nxt
        else:
            S[i + 1, :, cols] = lin.A[i] @ S[i, :, cols]
        S[i + 1, :, nu * i:nu * (i + 1)] = lin.B[i]
        s[i + 1] = lin.A[i] @ s[i] + lin.defects[i]

    # least-squares objective, stacked over stages 1..N-1 plus the terminal block
    sq, sqN = np.sqrt(config.Q), np.sqrt(config.QN)
    J = lin.Jy[1:] @ S[1:N, :NX]
    r = lin.y[1:] - stage_refs[1:] + (lin.Jy[1:] @ s[1:N, :NX, None])[..., 0]
    JN = lin.JyN @ S[N, :NX]
    rN = lin.yN - term_ref + lin.JyN @ s[N, :NX]
    Jw = np.vstack([(sq[None, :, None] * J).reshape(-1, nz), sqN[:, None] * JN])
    rw = np.concatenate([(sq * r).ravel(), sqN * rN])
    H = Jw.T @ Jw + config.lambda_reg * np.eye(nz)
    H = 0.5 * (H + H.T)
    g = Jw.T @ rw

    # constraint rows: inputs, then per stage 1..N the state constraints and torque box
    u_lo, u_hi = config.boxes.input_bounds()
    nc = lin.cval.shape[1]
    b = config.boxes
    Gs = lin.cgrad[1:] @ S[1:]
    c_up = -(lin.cval[1:] + (lin.cgrad[1:] @ s[1:, :, None])[..., 0])
    tau = traj.states[1:, 10:12] + s[1:, 10:12]
    stage_rows = np.concatenate([Gs, S[1:, 10:12]], axis=1).reshape(-1, nz)
    stage_lo = np.concatenate([np.full((N, nc), -INFTY), b.tau_min - tau], axis=1).ravel()
    stage_hi = np.concatenate([c_up, b.tau_max - tau], axis=1).ravel()
    A = np.vstack([np.eye(nz), stage_rows])
    lower = np.concatenate([np.tile(u_lo, N) - traj.inputs.ravel(), stage_lo])
    upper = np.concatenate([np.tile(u_hi, N) - traj.inputs.ravel(), stage_hi])
    row_stage = np.concatenate([np.repeat(np.arange(N), nu), np.repeat(np.arange(1, N + 1), nc + 2)])

    # stage 0 is fixed by the measurement: check it instead of handing the QP a constant row
    init_viol = 0.0
    if config.enforce_initial_stage:
        v0, G0 = lin.cval[0], lin.cgrad[0]
        init_viol = float(np.max(v0 + G0 @ s[0]))
    # a bound past -INFTY only appears once the rollout has blown up
    if not (np.isfinite(H).all() and np.isfinite(g).all() and np.isfinite(A).all()
            and not np.isnan(lower).any() and not np.isnan(upper).any()
            and np.all(lower <= upper)):
        return None
    prob = QpProblem(H, g, A, lower, upper)
    return CondensedQp(prob, S, s, row_stage, init_viol)


@dataclass
class StepDiagnostics:
    qp_status: str
    qp_iterations: int
    prim_res: float
    dual_res: float
    solve_time: float
    step_norm: float
    alpha: np.ndarray = None
    predicted_residuals: np.ndarray = None


def _initial_stage_infeasible(cqp: CondensedQp, config: OcpConfig):
    tol = config.qp.tol_abs + config.qp.tol_rel
    return config.enforce_initial_stage and cqp.initial_violation > tol


def condense_and_solve(traj: DecisionTrajectory, refs, x0, config: OcpConfig,
                       solver: QpSolver, warm_y=None, lin=None):
    """One Gauss-Newton QP; returns ``(state step, input step, solution, condensed)``."""
    # overflow in a blown-up guess is caught below and reported as a failed QP
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if lin is None:
            lin = linearize(traj, config)
        cqp = condense(traj, lin, x0, refs, config)
    if cqp is None:
        nz = NU * config.N
        sol = QpSolution(np.zeros(nz), np.zeros(nz + config.N * (lin.cval.shape[1] + 2)),
                         NONFINITE, np.inf, np.inf, 0)
        return np.zeros((config.N + 1, config.nx)), np.zeros((config.N, NU)), sol, None
    sol = solver.solve(cqp.problem, warm_y=warm_y)
    if _initial_stage_infeasible(cqp, config):
        sol.status = "infeasible"
        sol.info["initial_stage_violation"] = cqp.initial_violation
    du = sol.z
    dxs = cqp.S @ du + cqp.s
    return dxs, du.reshape(config.N, NU), sol, cqp


def measured_state(x, Pi, config: OcpConfig):
    x = np.asarray(x, dtype=float)
    if config.tube:
        return np.concatenate([x, vec(np.zeros((NX, NP)) if Pi is None else Pi)])
    return x.copy()


def cold_start(x0, Pi0, config: OcpConfig):
    """Constant-state, zero-input guess; sensitivities rolled out from ``Pi0``."""
    xs0 = measured_state(x0, Pi0, config)
    states = np.repeat(xs0[None, :], config.N + 1, axis=0)
    inputs = np.zeros((config.N, NU))
    if config.tube:
        for i in range(config.N):
            nxt = augmented_step(states[i], inputs[i], config.Ts, config.params)
            states[i + 1, NX:] = nxt[NX:]
    return DecisionTrajectory(states, inputs)


def shift(traj: DecisionTrajectory):
    """Drop stage 0 and duplicate the last stage."""
    states = np.concatenate([traj.states[1:], traj.states[-1:]], axis=0)
    inputs = np.concatenate([traj.inputs[1:], traj.inputs[-1:]], axis=0)
    return DecisionTrajectory(states, inputs)


class RtiController:
    """Stateful real-time-iteration controller (warm start, duals, last input)."""

    def __init__(self, config: OcpConfig):
        self.config = config
        self.solver = QpSolver(config.qp)
        self.warm = None
        self.warm_y = None
        self.last_u = np.zeros(NU)

    def reset(self):
        self.warm = None
        self.warm_y = None
        self.last_u = np.zeros(NU)

    def step(self, x_meas, Pi, refs):
        if self.warm is None:
            self.warm = cold_start(x_meas, Pi, self.config)
        u0, self.warm, diag, y = rti_step(x_meas, Pi, refs, self.config, self.warm,
                                          self.solver, self.warm_y)
        if diag.qp_status == SOLVED:
            self.warm_y = y
            self.last_u = u0
        else:
            # hold the previous thrust and torque commands (zero rate) and rebuild the
            # guess from the next measurement; repeating a saturated rate runs the
            # actuators out of their box within a few periods
            self.warm = None
            self.warm_y = None
            u0 = np.zeros(NU)
            self.last_u = u0
        return u0, diag


def _shift_duals(y, config: OcpConfig):
    """Shift multipliers stage-wise, consistent with :func:`shift`."""
    nz = NU * config.N
    yu = y[:nz].reshape(config.N, NU)
    yu = np.concatenate([yu[1:], yu[-1:]])
    ys = y[nz:].reshape(config.N, -1)
    ys = np.concatenate([ys[1:], ys[-1:]])
    return np.concatenate([yu.ravel(), ys.ravel()])


def rti_step(x_measured, Pi_current, refs, config: OcpConfig, warm: DecisionTrajectory,
             solver: QpSolver = None, warm_y=None):
    """One real-time iteration.

    Returns ``(u0, shifted warm start, diagnostics, shifted duals)``.
    """
    solver = solver or QpSolver(config.qp)
    x0 = measured_state(x_measured, Pi_current, config)
    traj = warm.copy()
    t0 = time.perf_counter()
    dxs, du, sol, cqp = condense_and_solve(traj, refs, x0, config, solver, warm_y)
    elapsed = time.perf_counter() - t0
    if sol.status == SOLVED:
        traj.states += dxs
        traj.inputs += du
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        alpha = constraint_margins(traj.states[0], config)
        predicted = constraint_rows(traj.states, config)[0]
    diag = StepDiagnostics(
        qp_status=sol.status, qp_iterations=sol.iterations, prim_res=sol.prim_res,
        dual_res=sol.dual_res, solve_time=elapsed,
        step_norm=float(np.sqrt(np.sum(dxs ** 2) + np.sum(du ** 2))),
        alpha=alpha, predicted_residuals=predicted,
    )
    return traj.inputs[0].copy(), shift(traj), diag, _shift_duals(sol.y, config)


@dataclass
class FullSolveResult:
    trajectory: DecisionTrajectory
    converged: bool
    iterations: int
    step_norms: list


def solve_full(x0, Pi0, refs, config: OcpConfig, kkt_tol=1e-8, max_sqp_iter=50,
               init: DecisionTrajectory = None):
    """Gauss-Newton SQP iterated to convergence (offline reference solution)."""
    solver = QpSolver(config.qp)
    xs0 = measured_state(x0, Pi0, config)
    traj = init.copy() if init is not None else cold_start(x0, Pi0, config)
    norms = []
    for it in range(1, max_sqp_iter + 1):
        dxs, du, sol, _ = condense_and_solve(traj, refs, xs0, config, solver)
        if sol.status != SOLVED:
            return FullSolveResult(traj, False, it, norms)
        traj.states += dxs
        traj.inputs += du
        norms.append(float(np.sqrt(np.sum(dxs ** 2) + np.sum(du ** 2))))
        if norms[-1] <= kkt_tol:
            return FullSolveResult(traj, True, it, norms)
    return FullSolveResult(traj, False, max_sqp_iter, norms)


def dynamics_defects(traj: DecisionTrajectory, config: OcpConfig):
    return shooting_step(traj.states[:-1], traj.inputs, config) - traj.states[1:]
