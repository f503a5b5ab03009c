"""Self-verification suites behind ``tubenmpc check``.

Each suite compares the implementation against an independent oracle
(conservation law, finite differences, Newton's law, brute force, forward
kinematics) and returns a :class:`SuiteResult`. Model functions are looked up
on the module at call time so that tests can inject faults.
"""
import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from . import reference as ref
from . import sensitivity as sens
from .qp import INFTY, SOLVED, QpProblem, solve_qp


@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.name:<9} worst={self.worst:.3e} tol={self.tol:.0e}  "
                f"{self.detail} ({self.seconds:.1f} s)")


def _random_states(rng, count):
    x = np.empty((count, dyn.NX))
    x[:, 0:4] = rng.uniform(-np.pi, np.pi, (count, 4))
    x[:, 4:8] = rng.uniform(-2.0, 2.0, (count, 4))
    x[:, 8:10] = rng.uniform(3.0, 20.0, (count, 2))
    x[:, 10:12] = rng.uniform(-5.0, 5.0, (count, 2))
    return x


def _rk4(x, u, h, steps, params):
    for _ in range(steps):
        k1 = dyn.vector_field(x, u, params)
        k2 = dyn.vector_field(x + 0.5 * h * k1, u, params)
        k3 = dyn.vector_field(x + 0.5 * h * k2, u, params)
        k4 = dyn.vector_field(x + h * k3, u, params)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def energy_suite(seed=0, count=8, duration=2.0, dt=1e-4, tol=1e-6):
    """Unactuated energy drift and the actuated work-energy balance."""
    params = dyn.PhysicalParams()
    rng = np.random.default_rng(seed)
    x0 = _random_states(rng, count)
    x0[:, 8:12] = 0.0
    x0[:, 4:8] *= 0.5
    E0 = dyn.energy(x0, params)
    xT = _rk4(x0, np.zeros(dyn.NU), dt, int(round(duration / dt)), params)
    drift = np.max(np.abs(dyn.energy(xT, params) - E0) / np.maximum(np.abs(E0), 1.0))

    # dE/dt by central differences along the flow against the actuation power
    xs = _random_states(rng, 100)
    h = 1e-5
    f = dyn.vector_field(xs, np.zeros(dyn.NU), params)
    dE = (dyn.energy(xs + h * f, params) - dyn.energy(xs - h * f, params)) / (2.0 * h)
    power = dyn.actuation_power(xs, params)
    balance = np.max(np.abs(dE - power) / np.maximum(np.abs(power), 1.0))
    worst = float(max(drift, balance))
    return SuiteResult("energy", worst <= tol, worst, tol,
                       f"drift {drift:.2e}, work-energy {balance:.2e}")


def jacobian_suite(seed=0, count=100, h=1e-6, tol=1e-5):
    """Analytic f_x and f_p against central finite differences."""
    params = dyn.PhysicalParams()
    rng = np.random.default_rng(seed)
    xs = _random_states(rng, count)
    us = rng.normal(size=(count, dyn.NU))
    worst = 0.0
    for x, u in zip(xs, us):
        A = sens.jacobian_fx(x, u, params)
        Fp = sens.jacobian_fp(x, u, params)
        Ad = np.empty_like(A)
        for i in range(dyn.NX):
            e = np.zeros(dyn.NX)
            e[i] = h
            Ad[:, i] = (dyn.vector_field(x + e, u, params) - dyn.vector_field(x - e, u, params)) / (2 * h)
        Fd = np.empty_like(Fp)
        for k in range(dyn.NP):
            d = np.zeros(dyn.NP)
            d[k] = h
            Fd[:, k] = (dyn.vector_field(x, u, dyn.apply_deviations(params, d))
                        - dyn.vector_field(x, u, dyn.apply_deviations(params, -d))) / (2 * h)
        for exact, approx in ((A, Ad), (Fp, Fd)):
            err = np.abs(exact - approx) / np.maximum(np.abs(approx), 1.0)
            worst = max(worst, float(err.max()))
    return SuiteResult("jacobian", worst <= tol, worst, tol, f"{count} random points")


def newton_suite(seed=0, count=1000, tol=1e-9):
    """Both-axis force balance of the link stresses on random states."""
    params = dyn.PhysicalParams()
    xs = _random_states(np.random.default_rng(seed), count)
    worst = float(np.max(np.abs(dyn.newton_residuals(xs, params))))
    return SuiteResult("newton", worst <= tol, worst, tol, f"{count} random states")


def enumerate_qp(prob: QpProblem):
    """Brute-force optimum: try every active set (at most n rows), keep the best feasible."""
    n, m = prob.n, prob.m
    lo = np.where(prob.lower <= -INFTY, -np.inf, prob.lower)
    hi = np.where(prob.upper >= INFTY, np.inf, prob.upper)
    best, best_val = None, np.inf
    for k in range(min(n, m) + 1):
        for rows in itertools.combinations(range(m), k):
            sides = [[s for s, b in ((-1, lo[r]), (1, hi[r])) if np.isfinite(b)] for r in rows]
            for choice in itertools.product(*sides):
                Aa = prob.A[list(rows)]
                b = np.array([lo[r] if c < 0 else hi[r] for r, c in zip(rows, choice)])
                K = np.block([[prob.H, Aa.T], [Aa, np.zeros((k, k))]])
                try:
                    z = np.linalg.solve(K, np.concatenate([-prob.g, b]))[:n]
                except np.linalg.LinAlgError:
                    continue
                Az = prob.A @ z
                if np.all(Az >= lo - 1e-9) and np.all(Az <= hi + 1e-9):
                    val = prob.objective(z)
                    if val < best_val - 1e-14:
                        best, best_val = z, val
    return best


def random_qp(rng, n_max=8, m_max=12):
    """Strictly convex, feasible random QP with mixed one- and two-sided rows."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    L = rng.normal(size=(n, n))
    H = L @ L.T + 0.1 * np.eye(n)
    A = rng.normal(size=(m, n))
    Ax = A @ rng.normal(size=n)
    lo = Ax - rng.uniform(0.0, 1.0, m)
    hi = Ax + rng.uniform(0.0, 1.0, m)
    kind = rng.integers(0, 3, m)
    lo[kind == 1] = -INFTY
    hi[kind == 2] = INFTY
    return QpProblem(H, 3.0 * rng.normal(size=n), A, lo, hi)


def qp_suite(seed=0, count=200, tol=1e-6, backend="daqp"):
    """QP backend against brute-force active-set enumeration."""
    rng = np.random.default_rng(seed)
    worst, failed = 0.0, 0
    for _ in range(count):
        prob = random_qp(rng)
        sol = solve_qp(prob, backend=backend)
        z_ref = enumerate_qp(prob)
        if sol.status != SOLVED:
            failed += 1
            continue
        worst = max(worst, float(np.max(np.abs(sol.z - z_ref))))
    ok = failed == 0 and worst <= tol
    return SuiteResult("qp", ok, worst, tol, f"{count} QPs ({backend}), {failed} unsolved")


def ik_suite(seed=0, count=1000, tol=1e-10):
    """Inverse kinematics followed by forward kinematics returns the target."""
    params = dyn.PhysicalParams()
    rng = np.random.default_rng(seed)
    rho_lo = abs(params.l1 - params.l2) + 0.02
    rho_hi = params.l1 + params.l2 - 0.02
    rho = rng.uniform(max(rho_lo, 0.05), rho_hi, count)
    ang = rng.uniform(-np.pi, np.pi, count)
    target = np.stack([rho * np.cos(ang), rho * np.sin(ang)], axis=-1)
    worst = 0.0
    for branch in (1, -1):
        phi = ref.two_link_ik(target, params, branch)
        _, p2 = dyn.forward_kinematics(phi, params)
        worst = max(worst, float(np.max(np.abs(p2 - target))))
    return SuiteResult("ik", worst <= tol, worst, tol, f"{count} targets, both branches")


SUITES = {
    "energy": energy_suite,
    "jacobian": jacobian_suite,
    "newton": newton_suite,
    "qp": qp_suite,
    "ik": ik_suite,
}


def run_suites(names=None):
    names = list(SUITES) if names is None else list(names)
    if not names:
        raise ValueError("no suites selected")
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)}")
    results = []
    for name in names:
        t0 = time.perf_counter()
        res = SUITES[name]()
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
