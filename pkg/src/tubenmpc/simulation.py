"""Closed-loop experiments: true plant at 200 Hz, RTI controller at 100 Hz."""
import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import signed_residuals
from .dynamics import NP, NX, PhysicalParams, apply_deviations, hover_thrust, link_stresses
from .qp import SOLVED
from .reference import DenseReference, EllipseSpec, build_reference, dense_reference
from .rti import NOMINAL, TUBE, OcpConfig, RtiController
from .sensitivity import augment, augmented_step, split, state_step


@dataclass
class SimConfig:
    plant_rate: float = 200.0
    control_rate: float = 100.0
    duration: float = 12.0
    e_phi0_deg: tuple = (-8.0, 4.0)
    p_true: np.ndarray = field(default_factory=lambda: np.zeros(NP))
    ocp: OcpConfig = field(default_factory=OcpConfig)
    ellipse: EllipseSpec = field(default_factory=EllipseSpec)
    fL_d: tuple = (10.0, 10.0)
    Pi0: np.ndarray = None
    start: str = "hover"

    def __post_init__(self):
        self.p_true = np.asarray(self.p_true, dtype=float)
        if self.start not in ("hover", "trim"):
            raise ValueError(f"start must be 'hover' or 'trim', got {self.start!r}")
        ratio = self.plant_rate / self.control_rate
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("plant rate must be an integer multiple of the control rate")
        if abs(1.0 / self.control_rate - self.ocp.Ts) > 1e-12:
            raise ValueError("controller sampling time must match the control rate")

    @property
    def substeps(self):
        return int(round(self.plant_rate / self.control_rate))

    @property
    def plant_dt(self):
        return 1.0 / self.plant_rate


LOG_COLUMNS = (
    "t", "phi1", "phi2", "th1", "th2", "dphi1", "dphi2", "dth1", "dth2", "fR1", "fR2",
    "tau1", "tau2", "ufR1", "ufR2", "utau1", "utau2", "phi1_d", "phi2_d", "fL1", "fL2",
    "fL1_d", "fL2_d", "e_phi1", "e_phi2", "e_fL1", "e_fL2", "s_delta", "s_fR1", "s_fR2",
    "alpha_sep", "alpha_fR1", "alpha_fR2", "qp_status", "qp_time_ms",
)


@dataclass
class TrialLog:
    """Time series on the plant grid; controller fields are zero-order held."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    ref: np.ndarray          # (K, 8) stage reference at each plant sample
    fL: np.ndarray
    alpha: np.ndarray        # (K, 3) margins for separation, fR1 and fR2 upper bounds
    qp_status: np.ndarray    # (K,) strings
    qp_time: np.ndarray      # seconds
    qp_iterations: np.ndarray
    dphi_min: float
    fR_min: float
    fR_max: float
    mode: str = NOMINAL
    p_true: np.ndarray = None
    Pi: np.ndarray = None    # (K, 12, 6) tube mode only

    @property
    def e_phi(self):
        return self.x[:, 0:2] - self.ref[:, 0:2]

    @property
    def e_fL(self):
        return self.fL - self.ref[:, 2:4]

    @property
    def residuals(self):
        return np.column_stack(signed_residuals(self.x, self.dphi_min, self.fR_max))

    @property
    def solver_failures(self):
        return int(np.sum(self.control_mask & (self.qp_status != SOLVED)))

    @property
    def control_mask(self):
        """True on samples where a new controller update happened."""
        mask = np.zeros(len(self.t), dtype=bool)
        mask[self._control_index] = True
        return mask

    _control_index: np.ndarray = None

    def table(self):
        """Rows in :data:`LOG_COLUMNS` order (status kept as strings)."""
        res = self.residuals
        numeric = np.column_stack([
            self.t, self.x, self.u, self.ref[:, 0:2], self.fL, self.ref[:, 2:4],
            self.e_phi, self.e_fL, res, self.alpha,
        ])
        return numeric, self.qp_status, 1e3 * self.qp_time

    def write_csv(self, path):
        numeric, status, ms = self.table()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for row, st, tm in zip(numeric, status, ms):
                w.writerow([repr(float(v)) for v in row] + [st, repr(float(tm))])


def initial_state(ref0, e_phi0_deg, params: PhysicalParams, fR_min=3.0, fR_max=20.0):
    """Perturbed start at rest: pitch level, hover thrusts, zero torques."""
    x = np.zeros(NX)
    x[0:2] = np.asarray(ref0)[0:2] + np.deg2rad(np.asarray(e_phi0_deg, dtype=float))
    x[8:10] = np.clip(hover_thrust(params), fR_min, fR_max)
    return x


def propagate_sensitivity(x, u, Pi, h, params: PhysicalParams):
    """Advance ``Pi`` along the measured state with the prediction model's RK4 map."""
    _, Pi_next = split(augmented_step(augment(x, Pi), u, h, params))
    return Pi_next


def run_trial(sim: SimConfig, mode: str = None, reference: DenseReference = None,
              progress=None):
    """Simulate one closed-loop experiment and return its :class:`TrialLog`.

    ``mode`` overrides ``sim.ocp.mode``. The controller only ever sees the
    nominal parameters; the plant integrates the deviated ones.
    """
    ocp = sim.ocp if mode is None else replace(sim.ocp, mode=mode)
    nominal = ocp.params
    true_params = apply_deviations(nominal, sim.p_true)
    dense = reference if reference is not None else dense_reference(
        sim.ellipse, nominal, sim.fL_d, dt=sim.plant_dt)

    n_ctrl = int(round(sim.duration * sim.control_rate))
    sub = sim.substeps
    K = n_ctrl * sub + 1
    t = np.arange(K) * sim.plant_dt

    x = initial_state(dense.stage[0], sim.e_phi0_deg, nominal, ocp.boxes.fR_min, ocp.boxes.fR_max)
    if sim.start == "trim":
        x = trim_state(x[0:2], dense.stage[0, 2:4], nominal, ocp.boxes.fR_min, ocp.boxes.fR_max)
    Pi = np.zeros((NX, NP)) if sim.Pi0 is None else np.array(sim.Pi0, dtype=float)

    xs = np.empty((K, NX))
    us = np.zeros((K, 4))
    alpha = np.zeros((K, 3))
    status = np.empty(K, dtype=object)
    qp_time = np.zeros(K)
    qp_iter = np.zeros(K, dtype=int)
    Pis = np.zeros((K, NX, NP)) if ocp.mode == TUBE else None
    ctrl_idx = np.arange(n_ctrl) * sub

    controller = RtiController(ocp)
    xs[0] = x
    for k in range(n_ctrl):
        j0 = k * sub
        refs = build_reference(dense, t[j0], ocp.Ts, ocp.N)
        u, diag = controller.step(x, Pi, refs)
        if ocp.mode == TUBE:
            Pis[j0:j0 + sub] = Pi
            Pi = propagate_sensitivity(x, u, Pi, ocp.Ts, nominal)
        for j in range(j0, j0 + sub):
            us[j] = u
            alpha[j] = diag.alpha[:3]
            status[j] = diag.qp_status
            qp_time[j] = diag.solve_time
            qp_iter[j] = diag.qp_iterations
            x = state_step(x, u, sim.plant_dt, true_params)
            xs[j + 1] = x
        if progress is not None:
            progress(k, n_ctrl)
    # last sample repeats the final controller values
    us[-1], alpha[-1], status[-1] = us[-2], alpha[-2], status[-2]
    qp_time[-1], qp_iter[-1] = qp_time[-2], qp_iter[-2]
    if Pis is not None:
        Pis[-1] = Pi

    ref = dense.stage[np.clip(np.rint(t / dense.dt).astype(int), 0, len(dense.t) - 1)]
    log = TrialLog(t=t, x=xs, u=us, ref=ref, fL=link_stresses(xs, true_params), alpha=alpha,
                   qp_status=status.astype(str), qp_time=qp_time, qp_iterations=qp_iter,
                   dphi_min=ocp.dphi_min, fR_min=ocp.boxes.fR_min, fR_max=ocp.boxes.fR_max,
                   mode=ocp.mode, p_true=sim.p_true.copy(), Pi=Pis)
    log._control_index = ctrl_idx
    return log


def trim_state(phi, fL, params: PhysicalParams, fR_min=3.0, fR_max=20.0):
    """Static state at elevations ``phi`` whose thrusts produce link stresses ``fL``.

    Each vehicle's thrust balances its weight and the two link forces, which
    fixes both its magnitude and its pitch.
    """
    phi = np.asarray(phi, dtype=float)
    e1 = np.array([np.cos(phi[0]), np.sin(phi[0])])
    e2 = np.array([np.cos(phi[1]), np.sin(phi[1])])
    up = np.array([0.0, 1.0])
    F1 = fL[0] * e1 - fL[1] * e2 + params.m1 * params.g * up
    F2 = fL[1] * e2 + params.m2 * params.g * up
    x = np.zeros(NX)
    x[0:2] = phi
    for j, F in enumerate((F1, F2)):
        x[2 + j] = np.arctan2(-F[0], F[1])
        x[8 + j] = np.clip(np.hypot(F[0], F[1]), fR_min, fR_max)
    return x
