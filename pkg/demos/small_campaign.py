"""A ten-pair Monte-Carlo campaign, small enough to watch.

Same protocol as the full study: each sampled deviation vector is flown by
both controllers and a trial counts as a success only if no QP failed and
no constraint residual exceeded eps_tol.

    python3 demos/small_campaign.py [n_sim] [workers]
"""
import os
import sys

from tubenmpc.montecarlo import McConfig, run_campaign
from tubenmpc.simulation import SimConfig

n_sim = int(sys.argv[1]) if len(sys.argv) > 1 else 10
workers = int(sys.argv[2]) if len(sys.argv) > 2 else 1


def progress(done, total):
    print(f"\r{done}/{total}", end="", flush=True)


report = run_campaign(McConfig(n_sim=n_sim, seed=7, workers=workers), SimConfig(), progress=progress)
print()
out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out", "campaign")
report.write(out)
for c in report.controllers:
    q = report.quantiles(c, "max_s_delta")
    print(f"{c:>8}: success {report.success_rate(c):.0%}, max s_delta median {q['median']:+.4f}")
print("paired ordering", f"{report.paired_ordering():.0%}", "| files in", out)
