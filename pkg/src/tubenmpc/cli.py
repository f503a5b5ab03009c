"""Command-line entry point: ``tubenmpc {simulate,montecarlo,check,reference}``.

Exit codes: 0 on success, 1 when a check suite fails or the reference is
unreachable, 2 on usage or configuration errors, 3 on file errors.
"""
import argparse
import csv
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .dynamics import NP
from .montecarlo import CONTROLLERS, McReport, run_campaign, trial_metrics
from .reference import REFERENCE_COLUMNS, UnreachableTargetError, dense_reference, reference_table
from .rti import NOMINAL, TUBE
from .simulation import run_trial
from .uncertainty import sample_uniform

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parser():
    top = _Parser(prog="tubenmpc", description="Tube-based NMPC for a cable-suspended aerial chain.")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="YAML configuration file (defaults when omitted)")
        p.add_argument("--out", help="output directory (overrides output_dir)")

    p = sub.add_parser("simulate", help="run one closed-loop trial")
    common(p)
    p.add_argument("--mode", choices=(NOMINAL, TUBE), default=NOMINAL)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--p", type=float, nargs="+", metavar="P",
                   help="six deviations d_m1 d_m2 d_l1 d_l2 d_J1 d_J2")
    g.add_argument("--seed", type=int, help="draw the deviations uniformly from the box")
    p.add_argument("--start", choices=("hover", "trim"), help="initial condition type")

    p = sub.add_parser("montecarlo", help="paired campaign over the uncertainty box")
    common(p)
    p.add_argument("--mode", choices=CONTROLLERS + ("both",), default="both")
    p.add_argument("--nsim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--logs", action="store_true", help="also write every trial's time series")

    p = sub.add_parser("check", help="run the self-verification suites")
    p.add_argument("suites", nargs="*", metavar="SUITE",
                   help="subset of energy, jacobian, newton, qp, ik (all when omitted)")
    p.add_argument("--suite", action="append", dest="suite_opt", metavar="SUITE",
                   help="select a suite (repeatable)")

    p = sub.add_parser("reference", help="export the dense joint-space reference")
    common(p)
    p.add_argument("--csv", help="output CSV path (default <out>/reference.csv)")
    return top


def _load(args):
    run = cfgmod.load(args.config)
    out = args.out or run.output_dir
    return run, out


def cmd_simulate(args):
    run, out = _load(args)
    if args.p is not None:
        if len(args.p) != NP:
            raise cfgmod.ConfigError(f"--p needs exactly {NP} values, got {len(args.p)}")
        p = np.array(args.p)
        if not run.box.contains(p):
            print("warning: deviation vector lies outside the uncertainty box", file=sys.stderr)
    elif args.seed is not None:
        p = sample_uniform(run.box, args.seed, 1)[0]
    else:
        p = np.zeros(NP)
    sim = run.sim_for(args.mode, p)
    if args.start:
        from dataclasses import replace
        sim = replace(sim, start=args.start)
    log = run_trial(sim)
    os.makedirs(out, exist_ok=True)
    log.write_csv(os.path.join(out, f"trial_{args.mode}.csv"))
    summary = {"mode": args.mode, "p": [float(v) for v in p], "start": sim.start}
    summary.update(trial_metrics(log, run.mc.eps_tol))
    with open(os.path.join(out, f"trial_{args.mode}.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    verdict = "success" if summary["success"] else "failure"
    print(f"{args.mode}: {verdict}; rmse phi = ({summary['rmse_phi1']:.3f}, "
          f"{summary['rmse_phi2']:.3f}) deg, max s_delta = {summary['max_s_delta']:.4f}, "
          f"QP failures = {summary['solver_failures']}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_montecarlo(args):
    run, out = _load(args)
    from dataclasses import replace
    mc = run.mc
    changes = {}
    if args.nsim is not None:
        changes["n_sim"] = args.nsim
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.mode != "both":
        changes["controllers"] = (args.mode,)
    try:
        mc = replace(mc, **changes)
    except ValueError as exc:
        raise cfgmod.ConfigError(str(exc)) from exc

    def progress(done, total):
        print(f"\r{done}/{total} trials", end="", file=sys.stderr, flush=True)

    log_dir = os.path.join(out, "trials") if args.logs else None
    report = run_campaign(mc, run.sim, log_dir=log_dir, progress=progress)
    print(file=sys.stderr)
    report.write(out)
    for c in report.controllers:
        print(f"{c}: success {report.success_rate(c):.1%} "
              f"({int(report.column(c, 'success').sum())}/{report.n_sim})")
    if len(report.controllers) == 2:
        print(f"paired ordering (nominal success implies tube success): "
              f"{report.paired_ordering():.1%}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_check(args):
    from .checks import SUITES, run_suites
    names = list(args.suites) + list(args.suite_opt or [])
    if (args.suites or args.suite_opt is not None) and not [n for n in names if n]:
        raise cfgmod.ConfigError("empty suite selection")
    names = [n for n in names if n] or None
    unknown = [n for n in (names or []) if n not in SUITES]
    if unknown:
        raise cfgmod.ConfigError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)}")
    results = run_suites(names)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_reference(args):
    run, out = _load(args)
    try:
        dense = dense_reference(run.ellipse, run.params, run.sim.fL_d, dt=run.reference_dt)
    except UnreachableTargetError as exc:
        print(f"error: reference unreachable: {exc}", file=sys.stderr)
        return EXIT_FAIL
    path = args.csv or os.path.join(out, "reference.csv")
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REFERENCE_COLUMNS)
        for row in reference_table(dense):
            w.writerow([repr(float(v)) for v in row])
    print(f"wrote {len(dense.t)} rows to {path}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "montecarlo": cmd_montecarlo, "check": cmd_check,
            "reference": cmd_reference}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
