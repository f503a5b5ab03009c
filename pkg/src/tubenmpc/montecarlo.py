"""Paired Monte-Carlo campaigns over the parameter uncertainty box.

Every trial draws one deviation vector and runs it through each controller,
so success rates, RMSEs and residuals can be compared pairwise. Results are
merged by trial index, which keeps the report independent of worker count.
"""
import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .rti import NOMINAL, TUBE
from .simulation import SimConfig, run_trial
from .uncertainty import UncertaintyBox, sample_uniform

CONTROLLERS = (NOMINAL, TUBE)

# per-controller columns of the campaign CSV; wall-clock timings live in a
# separate file so everything else regenerates byte-identically
METRICS = ("success", "solver_failures", "rmse_phi1", "rmse_phi2", "max_s_delta",
           "max_s_fR1", "max_s_fR2", "min_fR1", "min_fR2")
TIMING_METRICS = ("mean_solve_ms", "max_solve_ms")
QUANTILE_METRICS = ("rmse_phi1", "rmse_phi2", "max_s_delta", "max_s_fR1", "max_s_fR2")
QUANTILE_NAMES = ("min", "q1", "median", "q3", "max")


@dataclass
class McConfig:
    n_sim: int = 100
    box: UncertaintyBox = field(default_factory=UncertaintyBox)
    eps_tol: float = 1e-3
    seed: int = 0
    controllers: tuple = CONTROLLERS
    workers: int = 1

    def __post_init__(self):
        if self.n_sim < 1:
            raise ValueError("n_sim must be at least 1")
        if self.eps_tol <= 0:
            raise ValueError("eps_tol must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        self.controllers = tuple(self.controllers)
        bad = [c for c in self.controllers if c not in CONTROLLERS]
        if bad or not self.controllers:
            raise ValueError(f"controllers must be a non-empty subset of {CONTROLLERS}, got {bad}")


def rmse(series):
    """Root-mean-square of a series (same unit in and out)."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("empty series")
    return float(np.sqrt(np.mean(series ** 2)))


def classify_trial(log, eps_tol=1e-3):
    """Success: no QP failure and no constraint beyond ``eps_tol`` at any plant sample."""
    if log.solver_failures > 0:
        return False
    if np.max(log.residuals) > eps_tol:
        return False
    return bool(np.min(log.x[:, 8:10]) >= log.fR_min - eps_tol)


def trial_metrics(log, eps_tol=1e-3):
    """Scalar summary of one closed-loop run (angles in degrees)."""
    e = np.degrees(log.e_phi)
    res = log.residuals
    solve_ms = 1e3 * log.qp_time[log.control_mask]
    return {
        "success": int(classify_trial(log, eps_tol)),
        "solver_failures": log.solver_failures,
        "rmse_phi1": rmse(e[:, 0]),
        "rmse_phi2": rmse(e[:, 1]),
        "max_s_delta": float(res[:, 0].max()),
        "max_s_fR1": float(res[:, 1].max()),
        "max_s_fR2": float(res[:, 2].max()),
        "min_fR1": float(log.x[:, 8].min()),
        "min_fR2": float(log.x[:, 9].min()),
        "mean_solve_ms": float(solve_ms.mean()),
        "max_solve_ms": float(solve_ms.max()),
    }


def _run_one(task):
    index, controller, p, sim, eps_tol, log_dir = task
    log = run_trial(replace(sim, p_true=p), controller)
    if log_dir is not None:
        log.write_csv(os.path.join(log_dir, f"trial_{index:04d}_{controller}.csv"))
    return index, controller, trial_metrics(log, eps_tol)


@dataclass
class McReport:
    """Per-trial rows plus aggregates derived from them."""

    samples: np.ndarray                  # (n_sim, 6)
    metrics: dict                        # controller -> list of per-trial dicts
    eps_tol: float = 1e-3
    seed: int = 0

    @property
    def n_sim(self):
        return len(self.samples)

    @property
    def controllers(self):
        return tuple(c for c in CONTROLLERS if c in self.metrics)

    def column(self, controller, name):
        return np.array([row[name] for row in self.metrics[controller]], dtype=float)

    def success_rate(self, controller):
        return int(self.column(controller, "success").sum()) / self.n_sim

    def paired_ordering(self):
        """Fraction of trials where nominal success implies tube success."""
        nom = self.column(NOMINAL, "success").astype(bool)
        tube = self.column(TUBE, "success").astype(bool)
        return float(np.mean(~nom | tube))

    def ordering_violations(self):
        nom = self.column(NOMINAL, "success").astype(bool)
        tube = self.column(TUBE, "success").astype(bool)
        return [int(i) for i in np.flatnonzero(nom & ~tube)]

    def quantiles(self, controller, name, subset=None):
        v = self.column(controller, name)
        if subset is not None:
            v = v[subset]
        if v.size == 0:
            return dict.fromkeys(QUANTILE_NAMES, float("nan"))
        q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
        return dict(zip(QUANTILE_NAMES, (float(a) for a in q)))

    def summary(self):
        out = {"n_sim": self.n_sim, "seed": self.seed, "eps_tol": self.eps_tol,
               "success_rate": {c: self.success_rate(c) for c in self.controllers},
               "successes": {c: int(self.column(c, "success").sum()) for c in self.controllers}}
        if len(self.controllers) == 2:
            out["paired_ordering"] = self.paired_ordering()
            out["ordering_violations"] = self.ordering_violations()
        out["quantiles"] = {c: {m: self.quantiles(c, m) for m in QUANTILE_METRICS}
                            for c in self.controllers}
        return out

    def has_timing(self):
        return all(m in self.metrics[c][0] for c in self.controllers for m in TIMING_METRICS)

    def timing_summary(self):
        out = {c: {"mean_solve_ms": float(self.column(c, "mean_solve_ms").mean()),
                   "max_solve_ms": float(self.column(c, "max_solve_ms").max())}
               for c in self.controllers}
        if NOMINAL in out and TUBE in out:
            out["ratio_tube_over_nominal"] = (out[TUBE]["mean_solve_ms"]
                                              / out[NOMINAL]["mean_solve_ms"])
        return out

    # file artifacts

    def header(self):
        cols = ["trial"] + [f"p{i + 1}" for i in range(self.samples.shape[1])]
        for c in self.controllers:
            cols += [f"{c}_{m}" for m in METRICS]
        return cols

    def write(self, out_dir):
        """Write ``trials.csv``, ``summary.json`` and one quantile CSV per metric."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "trials.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for k in range(self.n_sim):
                row = [k] + [repr(float(v)) for v in self.samples[k]]
                for c in self.controllers:
                    row += [_fmt(self.metrics[c][k][m]) for m in METRICS]
                w.writerow(row)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if self.has_timing():
            with open(os.path.join(out_dir, "timing.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["trial"] + [f"{c}_{m}" for c in self.controllers
                                        for m in TIMING_METRICS])
                for k in range(self.n_sim):
                    w.writerow([k] + [repr(float(self.metrics[c][k][m]))
                                      for c in self.controllers for m in TIMING_METRICS])
            with open(os.path.join(out_dir, "timing.json"), "w") as fh:
                json.dump(self.timing_summary(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        for m in QUANTILE_METRICS:
            with open(os.path.join(out_dir, f"quantiles_{m}.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(("controller",) + QUANTILE_NAMES)
                for c in self.controllers:
                    q = self.quantiles(c, m)
                    w.writerow([c] + [repr(q[n]) for n in QUANTILE_NAMES])

    @classmethod
    def from_csv(cls, path, eps_tol=1e-3, seed=0):
        """Rebuild a report from a ``trials.csv`` written by :meth:`write`.

        A ``timing.csv`` next to it is merged in when present.
        """
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        timing_path = os.path.join(os.path.dirname(path), "timing.csv")
        if os.path.exists(timing_path):
            with open(timing_path, newline="") as fh:
                for r, t in zip(rows, csv.DictReader(fh)):
                    r.update({k: v for k, v in t.items() if k != "trial"})
        if not rows:
            raise ValueError(f"{path}: no trials")
        pcols = sorted((k for k in rows[0] if k.startswith("p") and k[1:].isdigit()),
                       key=lambda k: int(k[1:]))
        samples = np.array([[float(r[k]) for k in pcols] for r in rows])
        metrics = {}
        for c in CONTROLLERS:
            if f"{c}_success" not in rows[0]:
                continue
            names = METRICS + tuple(m for m in TIMING_METRICS if f"{c}_{m}" in rows[0])
            metrics[c] = [{m: _parse(r[f"{c}_{m}"], m) for m in names} for r in rows]
        return cls(samples=samples, metrics=metrics, eps_tol=eps_tol, seed=seed)


def _fmt(v):
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def _parse(text, name):
    return int(text) if name in ("success", "solver_failures") else float(text)


def run_campaign(mc: McConfig, sim: SimConfig = None, log_dir=None, progress=None):
    """Run every sampled deviation through every configured controller."""
    sim = sim or SimConfig()
    samples = sample_uniform(mc.box, mc.seed, mc.n_sim)
    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
    tasks = [(k, c, samples[k], sim, mc.eps_tol, log_dir)
             for k in range(mc.n_sim) for c in mc.controllers]
    metrics = {c: [None] * mc.n_sim for c in mc.controllers}
    done = 0
    if mc.workers > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(mc.workers) as pool:
            for k, c, m in pool.imap_unordered(_run_one, tasks):
                metrics[c][k] = m
                done += 1
                if progress is not None:
                    progress(done, len(tasks))
    else:
        for task in tasks:
            k, c, m = _run_one(task)
            metrics[c][k] = m
            done += 1
            if progress is not None:
                progress(done, len(tasks))
    return McReport(samples=samples, metrics=metrics, eps_tol=mc.eps_tol, seed=mc.seed)
