"""YAML run configuration.

Every section mirrors one library type and every key is optional; missing
keys keep the library defaults, which are the published parameter-table
values. Unknown keys are rejected with their full dotted path. Angles are
given in degrees here and converted to radians on load.

Layout (all keys shown with their defaults)::

    physical:     {m1: 0.457, m2: 0.457, l1: 0.942, l2: 0.942, J1: 0.123, J2: 0.123, g: 9.81}
    uncertainty:  {b_m1: 0.25, b_m2: 0.25, b_l1: 0.24, b_l2: 0.24, b_J1: 0.25, b_J2: 0.25}
    constraints:  {fR_min: 3, fR_max: 20, tau_min: -5, tau_max: 5, dfR_min: -200,
                   dfR_max: 200, dtau_min: -100, dtau_max: 100, dphi_min_deg: 30}
    ocp:          {N: 30, Ts: 0.01, Q: [5, 1, 0.1, 0.1], QN: [50, 10], eps_s: 1.0e-12,
                   lambda_reg: 1.0e-9, enforce_initial_stage: false,
                   qp: {backend: daqp, tol_abs: 1.0e-8, tol_rel: 1.0e-8, max_iter: 4000}}
    reference:    {xc: 0, zc: 1.05, ax: 0.55, az: 0.35, T: 12, eps_r: 0.02, dt: 0.005,
                   fL_d: [10, 10]}
    simulation:   {plant_rate: 200, control_rate: 100, duration: 12, e_phi0_deg: [-8, 4],
                   start: hover, Pi0: null}
    montecarlo:   {n_sim: 100, eps_tol: 1.0e-3, seed: 0, controllers: [nominal, tube], workers: 1}
    output_dir:   runs
"""
from dataclasses import dataclass, field

import numpy as np
import yaml

from .constraints import BoxSets
from .dynamics import NP, NX, PhysicalParams
from .montecarlo import McConfig
from .qp import QpSettings
from .reference import EllipseSpec
from .rti import NOMINAL, OcpConfig, expand_pairs
from .simulation import SimConfig
from .uncertainty import UncertaintyBox


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_SCHEMA = {
    "physical": {"m1": float, "m2": float, "l1": float, "l2": float, "J1": float, "J2": float,
                 "g": float},
    "uncertainty": {"b_m1": float, "b_m2": float, "b_l1": float, "b_l2": float, "b_J1": float,
                    "b_J2": float},
    "constraints": {"fR_min": float, "fR_max": float, "tau_min": float, "tau_max": float,
                    "dfR_min": float, "dfR_max": float, "dtau_min": float, "dtau_max": float,
                    "dphi_min_deg": float},
    "ocp": {"N": int, "Ts": float, "Q": list, "QN": list, "eps_s": float, "lambda_reg": float,
            "enforce_initial_stage": bool,
            "qp": {"backend": str, "tol_abs": float, "tol_rel": float, "max_iter": int}},
    "reference": {"xc": float, "zc": float, "ax": float, "az": float, "T": float, "eps_r": float,
                  "dt": float, "fL_d": list},
    "simulation": {"plant_rate": float, "control_rate": float, "duration": float,
                   "e_phi0_deg": list, "start": str, "Pi0": (list, type(None))},
    "montecarlo": {"n_sim": int, "eps_tol": float, "seed": int, "controllers": list,
                   "workers": int},
    "output_dir": str,
}


def _check(tree, schema, path=""):
    if not isinstance(tree, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(tree).__name__}")
    for key, value in tree.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise ConfigError(f"unknown config key '{where}'")
        expected = schema[key]
        if isinstance(expected, dict):
            _check(value, expected, where)
            continue
        types = expected if isinstance(expected, tuple) else (expected,)
        if float in types and isinstance(value, int) and not isinstance(value, bool):
            continue
        if bool not in types and isinstance(value, bool):
            raise ConfigError(f"config key '{where}': expected {types[0].__name__}, got bool")
        if not isinstance(value, types):
            raise ConfigError(f"config key '{where}': expected {types[0].__name__}, "
                              f"got {type(value).__name__}")


def _numbers(value, n, where):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"config key '{where}': expected {n} finite numbers, got {value!r}")
    return arr


@dataclass
class RunConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    box: UncertaintyBox = field(default_factory=UncertaintyBox)
    ocp: OcpConfig = field(default_factory=OcpConfig)
    ellipse: EllipseSpec = field(default_factory=EllipseSpec)
    reference_dt: float = 0.005
    sim: SimConfig = field(default_factory=SimConfig)
    mc: McConfig = field(default_factory=McConfig)
    output_dir: str = "runs"

    def sim_for(self, mode=NOMINAL, p_true=None):
        from dataclasses import replace
        sim = replace(self.sim, ocp=replace(self.ocp, mode=mode))
        if p_true is not None:
            sim = replace(sim, p_true=np.asarray(p_true, dtype=float))
        return sim


def from_dict(tree):
    """Build a validated :class:`RunConfig` from a parsed mapping."""
    tree = {} if tree is None else tree
    _check(tree, _SCHEMA)
    try:
        return _build(tree)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(tree):
    params = PhysicalParams(**tree.get("physical", {}))
    box = UncertaintyBox(**tree.get("uncertainty", {}))

    cons = dict(tree.get("constraints", {}))
    dphi_min = np.deg2rad(cons.pop("dphi_min_deg", 30.0))
    if not 0.0 < dphi_min < np.pi:
        raise ConfigError("config key 'constraints.dphi_min_deg' must lie in (0, 180)")
    boxes = BoxSets(**cons)

    o = dict(tree.get("ocp", {}))
    qp = QpSettings(**o.pop("qp", {}))
    if qp.backend not in ("daqp", "admm"):
        raise ConfigError(f"config key 'ocp.qp.backend': expected daqp or admm, got {qp.backend!r}")
    Q = o.pop("Q", [5.0, 1.0, 0.1, 0.1])
    QN = o.pop("QN", [50.0, 10.0])
    Q = expand_pairs(_numbers(Q, 4, "ocp.Q")) if len(Q) == 4 else _numbers(Q, 8, "ocp.Q")
    QN = expand_pairs(_numbers(QN, 2, "ocp.QN")) if len(QN) == 2 else _numbers(QN, 4, "ocp.QN")
    ocp = OcpConfig(Q=Q, QN=QN, boxes=boxes, dphi_min=float(dphi_min), uncertainty=box, qp=qp,
                    params=params, **o)

    r = dict(tree.get("reference", {}))
    ref_dt = float(r.pop("dt", 0.005))
    fL_d = tuple(_numbers(r.pop("fL_d", [10.0, 10.0]), 2, "reference.fL_d"))
    ellipse = EllipseSpec(**r)

    s = dict(tree.get("simulation", {}))
    e0 = tuple(_numbers(s.pop("e_phi0_deg", [-8.0, 4.0]), 2, "simulation.e_phi0_deg"))
    Pi0 = s.pop("Pi0", None)
    if Pi0 is not None:
        Pi0 = np.asarray(Pi0, dtype=float)
        if Pi0.shape != (NX, NP):
            raise ConfigError(f"config key 'simulation.Pi0': expected a {NX}x{NP} matrix")
    sim = SimConfig(ocp=ocp, ellipse=ellipse, fL_d=fL_d, e_phi0_deg=e0, Pi0=Pi0, **s)
    if abs(ref_dt - sim.plant_dt) > 1e-12:
        raise ConfigError("config key 'reference.dt' must equal 1/simulation.plant_rate")

    m = dict(tree.get("montecarlo", {}))
    mc = McConfig(box=box, **m)
    return RunConfig(params=params, box=box, ocp=ocp, ellipse=ellipse, reference_dt=ref_dt,
                     sim=sim, mc=mc, output_dir=tree.get("output_dir", "runs"))


def load(path=None):
    """Read a YAML file (``None`` gives the defaults)."""
    if path is None:
        return from_dict({})
    try:
        with open(path) as fh:
            tree = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return from_dict(tree)


def default_yaml():
    """The documented default configuration as YAML text."""
    tree = {
        "physical": {"m1": 0.457, "m2": 0.457, "l1": 0.942, "l2": 0.942, "J1": 0.123,
                     "J2": 0.123, "g": 9.81},
        "uncertainty": {"b_m1": 0.25, "b_m2": 0.25, "b_l1": 0.24, "b_l2": 0.24, "b_J1": 0.25,
                        "b_J2": 0.25},
        "constraints": {"fR_min": 3.0, "fR_max": 20.0, "tau_min": -5.0, "tau_max": 5.0,
                        "dfR_min": -200.0, "dfR_max": 200.0, "dtau_min": -100.0,
                        "dtau_max": 100.0, "dphi_min_deg": 30.0},
        "ocp": {"N": 30, "Ts": 0.01, "Q": [5.0, 1.0, 0.1, 0.1], "QN": [50.0, 10.0],
                "eps_s": 1e-12, "lambda_reg": 1e-9, "enforce_initial_stage": False,
                "qp": {"backend": "daqp", "tol_abs": 1e-8, "tol_rel": 1e-8, "max_iter": 4000}},
        "reference": {"xc": 0.0, "zc": 1.05, "ax": 0.55, "az": 0.35, "T": 12.0, "eps_r": 0.02,
                      "dt": 0.005, "fL_d": [10.0, 10.0]},
        "simulation": {"plant_rate": 200.0, "control_rate": 100.0, "duration": 12.0,
                       "e_phi0_deg": [-8.0, 4.0], "start": "hover", "Pi0": None},
        "montecarlo": {"n_sim": 100, "eps_tol": 1e-3, "seed": 0,
                       "controllers": ["nominal", "tube"], "workers": 1},
        "output_dir": "runs",
    }
    return yaml.safe_dump(tree, sort_keys=False)
