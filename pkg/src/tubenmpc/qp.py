"""Dense convex QP solvers.

Solves::

    minimize    0.5 z'Hz + g'z
    subject to  lower <= A z <= upper

Two backends share one contract:

``admm``
    Operator splitting in the style of OSQP: Ruiz equilibration,
    over-relaxed ADMM with adaptive step size and primal/dual infeasibility
    certificates. Once the iterate suggests an active set, a polishing
    stage solves the reduced KKT system and repairs the active set until
    the KKT conditions hold to the requested tolerance.
``daqp``
    The DAQP dual active-set solver (compiled), warm-started from the
    previous multipliers. Much faster on the small dense MPC subproblems.

Every returned solution is checked against the KKT conditions here, so the
reported status does not depend on the backend's own bookkeeping.
"""
from dataclasses import dataclass, field

import time

import daqp
import numpy as np
import scipy.linalg as sla

INFTY = 1e20

SOLVED = "solved"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = self.g.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        m = self.A.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H must be {n}x{n}, got {self.H.shape}")
        if self.lower.shape != (m,) or self.upper.shape != (m,):
            raise ValueError("bounds must match the number of constraint rows")
        if not np.allclose(self.H, self.H.T, atol=1e-10, rtol=0.0):
            raise ValueError("H must be symmetric")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self):
        return self.g.size

    @property
    def m(self):
        return self.A.shape[0]

    def objective(self, z):
        return 0.5 * z @ self.H @ z + self.g @ z


@dataclass
class QpSolution:
    z: np.ndarray
    y: np.ndarray
    status: str
    prim_res: float
    dual_res: float
    iterations: int
    polished: bool = False
    info: dict = field(default_factory=dict)


@dataclass
class QpSettings:
    backend: str = "daqp"
    tol_abs: float = 1e-8
    tol_rel: float = 1e-8
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    scaling_iter: int = 10
    adaptive_rho_interval: int = 25
    polish_tol: float = 1e-3
    polish_every: int = 25
    polish_refine: int = 3
    polish_max_swaps: int = 30
    eps_infeasible: float = 1e-7


def _ruiz(H, A, g, iters):
    """Ruiz equilibration of the KKT matrix. Returns ``(D, E, c)``."""
    n, m = H.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Hs, As = H.copy(), A.copy()
    for _ in range(iters):
        col = np.maximum(np.abs(Hs).max(axis=0), np.abs(As).max(axis=0) if m else 0.0)
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(np.abs(As).max(axis=1), 1e-4, 1e4)) if m else np.ones(0)
        Hs = d[:, None] * Hs * d[None, :]
        As = e[:, None] * As * d[None, :]
        D *= d
        E *= e
    gs = D * g
    scale = max(np.abs(Hs).max(axis=0).mean() if n else 1.0, np.abs(gs).max() if n else 1.0)
    c = 1.0 / np.clip(scale, 1e-4, 1e4)
    return D, E, c


class QpSolver:
    """Reusable solver instance; holds no state between ``solve`` calls."""

    def __init__(self, settings: QpSettings = None, **overrides):
        self.settings = settings or QpSettings()
        for k, v in overrides.items():
            if not hasattr(self.settings, k):
                raise TypeError(f"unknown QP setting {k!r}")
            setattr(self.settings, k, v)

    def solve(self, prob: QpProblem, warm_z=None, warm_y=None):
        t0 = time.perf_counter()
        if self.settings.backend == "daqp":
            sol = self._solve_daqp(prob, warm_y)
        elif self.settings.backend == "admm":
            sol = self._solve_admm(prob, warm_z, warm_y)
        else:
            raise ValueError(f"unknown QP backend {self.settings.backend!r}")
        sol.info["solve_time"] = time.perf_counter() - t0
        return sol

    def _solve_daqp(self, prob: QpProblem, warm_y=None):
        s = self.settings
        m = prob.m
        upper = np.where(prob.upper >= INFTY, 1e30, prob.upper)
        lower = np.where(prob.lower <= -INFTY, -1e30, prob.lower)
        sense = np.zeros(m, dtype=np.int32)
        eq = np.isfinite(prob.lower) & (prob.upper - prob.lower <= 1e-12 * (1.0 + np.abs(prob.lower)))
        sense[eq] = 5
        kwargs = {}
        if warm_y is not None and len(warm_y) == m:
            kwargs["dual_start"] = np.asarray(warm_y, dtype=float)
        z, _, flag, info = daqp.solve(prob.H, prob.g, prob.A, upper, lower, sense,
                                      iter_limit=s.max_iter, **kwargs)
        y = np.asarray(info["lam"], dtype=float)
        if flag == -1:
            status = INFEASIBLE
        elif flag in (1, 2):
            status = SOLVED
        else:
            status = MAX_ITER
        z = np.asarray(z, dtype=float)
        pr, dr, sc = kkt_residuals(prob, z, y)
        if status == SOLVED and not kkt_satisfied(prob, z, y, s.tol_abs, s.tol_rel):
            status = MAX_ITER
        return QpSolution(z, y, status, pr, dr, int(info["iterations"]), True,
                          info={"exitflag": int(flag)})

    def _solve_admm(self, prob: QpProblem, warm_z=None, warm_y=None):
        s = self.settings
        n, m = prob.n, prob.m
        lower = np.where(prob.lower <= -INFTY, -np.inf, prob.lower)
        upper = np.where(prob.upper >= INFTY, np.inf, prob.upper)

        if m == 0:
            z = _solve_unconstrained(prob.H, prob.g)
            res = kkt_residuals(prob, z, np.zeros(0))
            status = SOLVED if res[1] <= s.tol_abs + s.tol_rel * res[2] else MAX_ITER
            return QpSolution(z, np.zeros(0), status, res[0], res[1], 0, True)

        D, E, c = _ruiz(prob.H, prob.A, prob.g, s.scaling_iter)
        Hs = c * (D[:, None] * prob.H * D[None, :])
        gs = c * D * prob.g
        As = E[:, None] * prob.A * D[None, :]
        ls, us = E * lower, E * upper
        eq = np.isfinite(ls) & np.isfinite(us) & (us - ls < 1e-10 * (1.0 + np.abs(ls)))

        x = np.zeros(n) if warm_z is None else np.asarray(warm_z, float) / D
        y = np.zeros(m) if warm_y is None else c * np.asarray(warm_y, float) / E
        zc = np.clip(As @ x, ls, us)

        rho = s.rho
        rho_vec = np.where(eq, 1e3 * rho, rho)
        factor = sla.cho_factor(Hs + s.sigma * np.eye(n) + As.T @ (rho_vec[:, None] * As))

        best = None
        polished = False
        it = 0
        for it in range(1, s.max_iter + 1):
            xt = sla.cho_solve(factor, s.sigma * x - gs + As.T @ (rho_vec * zc - y))
            ztil = As @ xt
            x_new = s.alpha * xt + (1.0 - s.alpha) * x
            zr = s.alpha * ztil + (1.0 - s.alpha) * zc
            z_new = np.clip(zr + y / rho_vec, ls, us)
            dy = rho_vec * (zr - z_new)
            y_new = y + dy
            dx = x_new - x
            x, zc, y = x_new, z_new, y_new

            Ax = As @ x
            Hx = Hs @ x
            Aty = As.T @ y
            # residuals in the unscaled problem
            r_prim = np.max(np.abs((Ax - zc) / E))
            r_dual = np.max(np.abs((Hx + gs + Aty) / D)) / c
            p_norm = max(np.max(np.abs(Ax / E)), np.max(np.abs(zc / E)))
            d_norm = max(np.max(np.abs(Hx / D)), np.max(np.abs(Aty / D)),
                         np.max(np.abs(gs / D))) / c
            eps_p = s.tol_abs + s.tol_rel * p_norm
            eps_d = s.tol_abs + s.tol_rel * d_norm

            if r_prim <= eps_p and r_dual <= eps_d:
                z_out = D * x
                y_out = E * y / c
                best = (z_out, y_out)
                break

            if self._primal_infeasible(As, ls, us, dy, E, D):
                return QpSolution(D * x, E * y / c, INFEASIBLE, r_prim, r_dual, it,
                                  info={"certificate": "primal"})
            if self._dual_infeasible(Hs, As, gs, ls, us, dx, D, c):
                return QpSolution(D * x, E * y / c, INFEASIBLE, r_prim, r_dual, it,
                                  info={"certificate": "dual"})

            loose = (r_prim <= s.polish_tol * (1.0 + p_norm)
                     and r_dual <= s.polish_tol * (1.0 + d_norm))
            if loose and (it % s.polish_every == 0 or not polished):
                polished = True
                sol = polish(prob, D * x, E * y / c, lower, upper, s)
                if sol is not None:
                    sol.iterations = it
                    return sol

            if it % s.adaptive_rho_interval == 0:
                ratio = np.sqrt((r_prim / (p_norm + 1e-10)) / (r_dual / (d_norm + 1e-10) + 1e-30))
                new_rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                if new_rho > 5.0 * rho or new_rho < 0.2 * rho:
                    rho = new_rho
                    rho_vec = np.where(eq, 1e3 * rho, rho)
                    factor = sla.cho_factor(Hs + s.sigma * np.eye(n)
                                            + As.T @ (rho_vec[:, None] * As))

        if best is not None:
            z_out, y_out = best
            sol = polish(prob, z_out, y_out, lower, upper, s)
            if sol is not None:
                sol.iterations = it
                return sol
            pr, dr, _ = kkt_residuals(prob, z_out, y_out)
            ok = kkt_satisfied(prob, z_out, y_out, s.tol_abs, s.tol_rel)
            return QpSolution(z_out, y_out, SOLVED if ok else MAX_ITER, pr, dr, it)

        z_out, y_out = D * x, E * y / c
        sol = polish(prob, z_out, y_out, lower, upper, s)
        if sol is not None:
            sol.iterations = it
            return sol
        pr, dr, _ = kkt_residuals(prob, z_out, y_out)
        return QpSolution(z_out, y_out, MAX_ITER, pr, dr, it)

    def _primal_infeasible(self, As, ls, us, dy, E, D):
        eps = self.settings.eps_infeasible
        dy_unscaled = E * dy
        norm = np.max(np.abs(dy_unscaled))
        if norm < 1e-30:
            return False
        if np.max(np.abs(D * (As.T @ dy))) > eps * norm:
            return False
        pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
        if np.any((pos > 0) & ~np.isfinite(us)) or np.any((neg < 0) & ~np.isfinite(ls)):
            return False
        # infinite bounds only meet zero multipliers here; skip them instead of forming inf * 0
        support = (np.sum(us[pos > 0] * pos[pos > 0]) + np.sum(ls[neg < 0] * neg[neg < 0]))
        return support < -eps * norm

    def _dual_infeasible(self, Hs, As, gs, ls, us, dx, D, c):
        eps = self.settings.eps_infeasible
        norm = np.max(np.abs(D * dx))
        if norm < 1e-30:
            return False
        if np.max(np.abs(Hs @ dx / D)) / c > eps * norm:
            return False
        if gs @ dx / c >= -eps * norm:
            return False
        Adx = As @ dx
        ok_up = np.isfinite(us) & (Adx > eps * norm)
        ok_lo = np.isfinite(ls) & (Adx < -eps * norm)
        return not np.any(ok_up | ok_lo)


def _solve_unconstrained(H, g):
    try:
        return sla.cho_solve(sla.cho_factor(H), -g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H, -g, rcond=None)[0]


def kkt_residuals(prob: QpProblem, z, y):
    """Primal violation, stationarity residual and a scale for relative tolerances."""
    Az = prob.A @ z
    lower = np.where(prob.lower <= -INFTY, -np.inf, prob.lower)
    upper = np.where(prob.upper >= INFTY, np.inf, prob.upper)
    prim = np.max(np.abs(np.clip(Az, lower, upper) - Az)) if prob.m else 0.0
    Hz = prob.H @ z
    Aty = prob.A.T @ y if prob.m else np.zeros_like(z)
    dual = np.max(np.abs(Hz + prob.g + Aty))
    scale = max(np.max(np.abs(Hz)), np.max(np.abs(Aty)), np.max(np.abs(prob.g)))
    return prim, dual, scale


def complementarity_violation(prob: QpProblem, z, y):
    """Largest multiplier attached to a bound that is not active (scaled by slack)."""
    if prob.m == 0:
        return 0.0
    Az = prob.A @ z
    up_slack = np.where(prob.upper >= INFTY, np.inf, prob.upper - Az)
    lo_slack = np.where(prob.lower <= -INFTY, np.inf, Az - prob.lower)
    up_viol = np.minimum(np.maximum(y, 0.0), up_slack)
    lo_viol = np.minimum(np.maximum(-y, 0.0), lo_slack)
    return float(max(np.max(up_viol), np.max(lo_viol)))


def kkt_satisfied(prob: QpProblem, z, y, tol_abs=1e-8, tol_rel=1e-8):
    """Primal feasibility, stationarity and complementarity to tolerance."""
    pr, dr, sc = kkt_residuals(prob, z, y)
    Az = prob.A @ z if prob.m else np.zeros(0)
    p_scale = np.max(np.abs(Az)) if prob.m else 0.0
    tol_p = tol_abs + tol_rel * p_scale
    tol_d = tol_abs + tol_rel * sc
    comp = complementarity_violation(prob, z, y)
    return pr <= tol_p and dr <= tol_d and comp <= max(tol_p, tol_d) * (1.0 + np.max(np.abs(y), initial=0.0))


def polish(prob: QpProblem, z, y, lower, upper, s: QpSettings):
    """Active-set refinement of an approximate solution.

    Starting from the active set suggested by ``(z, y)``, solve the reduced
    KKT system, then add violated rows / drop rows with wrong-signed
    multipliers until the KKT conditions hold. Returns ``None`` on failure.
    """
    n, m = prob.n, prob.m
    Az = prob.A @ z
    # -1 lower active, +1 upper active, 0 inactive
    state = np.zeros(m, dtype=int)
    state[(Az - lower < -y) & np.isfinite(lower)] = -1
    state[(upper - Az < y) & np.isfinite(upper)] = 1
    eq = np.isfinite(lower) & (upper - lower <= 1e-12 * (1.0 + np.abs(lower)))
    state[eq] = 1
    H, A, g = prob.H, prob.A, prob.g
    delta = 1e-11 * max(1.0, np.abs(H).max())

    seen = set()
    for _ in range(s.polish_max_swaps):
        act = np.flatnonzero(state)
        key = tuple(act * state[act])
        if key in seen:
            return None
        seen.add(key)
        Aa = A[act]
        b = np.where(state[act] < 0, lower[act], upper[act])
        k = act.size
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        K[:n, n:] = Aa.T
        K[n:, :n] = Aa
        rhs = np.concatenate([-g, b])
        Kreg = K.copy()
        Kreg[:n, :n] += delta * np.eye(n)
        Kreg[n:, n:] -= delta * np.eye(k)
        try:
            lu = sla.lu_factor(Kreg)
        except (np.linalg.LinAlgError, ValueError):
            return None
        sol = sla.lu_solve(lu, rhs)
        for _ in range(s.polish_refine):
            sol = sol + sla.lu_solve(lu, rhs - K @ sol)
        if not np.all(np.isfinite(sol)):
            return None
        zp = sol[:n]
        yp = np.zeros(m)
        yp[act] = sol[n:]

        Azp = A @ zp
        scale_p = 1.0 + np.max(np.abs(Azp))
        tol_p = s.tol_abs + s.tol_rel * scale_p
        viol_up = np.isfinite(upper) & (Azp - upper > tol_p) & (state == 0)
        viol_lo = np.isfinite(lower) & (lower - Azp > tol_p) & (state == 0)
        wrong = ((state < 0) & (yp > 0)) | ((state > 0) & (yp < 0) & ~eq)
        tol_d = s.tol_abs + s.tol_rel * (1.0 + np.max(np.abs(yp)))
        wrong &= np.abs(yp) > tol_d
        if not (viol_up.any() or viol_lo.any() or wrong.any()):
            pr, dr, sc = kkt_residuals(prob, zp, yp)
            if kkt_satisfied(prob, zp, yp, s.tol_abs, s.tol_rel):
                return QpSolution(zp, yp, SOLVED, pr, dr, 0, True)
            return None
        # one change per pass, most severe first
        cand = []
        gap = np.where(viol_up, Azp - upper, 0.0) + np.where(viol_lo, lower - Azp, 0.0)
        if gap.any():
            i = int(np.argmax(gap))
            cand.append((gap[i], i, 1 if viol_up[i] else -1))
        if wrong.any():
            j = int(np.argmax(np.where(wrong, np.abs(yp), 0.0)))
            cand.append((abs(yp[j]), j, 0))
        cand.sort(reverse=True)
        _, idx, new_state = cand[0]
        state[idx] = new_state
    return None


def solve_qp(prob: QpProblem, warm_z=None, warm_y=None, tol_abs=1e-8, tol_rel=1e-8,
             max_iter=4000, backend="daqp"):
    """Functional entry point with the default settings."""
    solver = QpSolver(QpSettings(backend=backend, tol_abs=tol_abs, tol_rel=tol_rel,
                                 max_iter=max_iter))
    return solver.solve(prob, warm_z, warm_y)
