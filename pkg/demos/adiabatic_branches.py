"""Branch evolution under the ramped loop perturbation.

Usage: python adiabatic_branches.py [T_seconds] [out.png]
"""

import sys
import warnings

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fluxbec import ChipSetup, solve_trap
from fluxbec.chip import profiles
from fluxbec.constants import MILLIGAUSS, UM
from fluxbec.quantum_dynamics import (Grid1D, RampSchedule, evolve_branches,
                                      ground_state, relative_phase)
from fluxbec.trap import RB87_F2_MF2 as SP, fit_axial_model

T = float(sys.argv[1]) if len(sys.argv) > 1 else 1.0
out = sys.argv[2] if len(sys.argv) > 2 else "adiabatic_branches.png"

solved = solve_trap(ChipSetup())
wy = solved.trap.frequencies[1]
fit = fit_axial_model(profiles(solved, 100 * UM, 1001, 0.5, "clockwise")[1])
grid = Grid1D.centered(64 * UM, 1024)
psi0 = ground_state(grid, 0.5 * SP.mass * wy ** 2 * grid.y ** 2, SP)
schedule = RampSchedule(T, fit.a, wy)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    r0, r1 = evolve_branches(psi0, schedule, fit, SP, threads=2)
phi = relative_phase(r0, r1, 1)
print(f"T = {T} s: min fidelity {r0.min_fidelity:.4f} / {r1.min_fidelity:.4f}, "
      f"Phi(T) = {phi.final:.2e} rad")

fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
a.plot(r0.times, r0.fidelity, label="branch 0")
a.plot(r1.times, r1.fidelity, "--", label="branch 1")
a.set_xlabel("t [s]")
a.set_ylabel("instantaneous ground-state fidelity")
a.legend()
b.plot(grid.y / UM, psi0.density * UM, "k:", label="initial")
b.plot(grid.y / UM, r0.final.density * UM, label="branch 0")
b.plot(grid.y / UM, r1.final.density * UM, label="branch 1")
b.set_xlabel("y [um]")
b.set_ylabel("density [1/um]")
b.legend()
fig.tight_layout()
fig.savefig(out, dpi=120)
print("wrote", out)
