"""Where does the tube spend its margin?

Runs the tube controller once and reports, over time, the tightening margin
alpha of each constraint. The separation margin grows with the sensitivity
of the link angle difference to the parameters. The thrust margins never
rise above eps_s: thrust is an integrator of the commanded rate, so the
parameters cannot move it.

    python3 demos/tube_margins.py
"""
import numpy as np

from tubenmpc.simulation import SimConfig, run_trial

log = run_trial(SimConfig(duration=6.0), "tube")
mask = log.control_mask
t, alpha = log.t[mask], log.alpha[mask]
s_delta = log.residuals[mask, 0]

print("   t [s]   alpha_sep   alpha_fR1   alpha_fR2   s_delta")
for k in range(0, len(t), 50):
    print(f"{t[k]:8.2f}  {alpha[k, 0]:10.4f}  {alpha[k, 1]:10.2e}  {alpha[k, 2]:10.2e}  {s_delta[k]:+8.4f}")
print(f"largest separation margin {alpha[:, 0].max():.4f} at t = {t[np.argmax(alpha[:, 0])]:.2f} s")
