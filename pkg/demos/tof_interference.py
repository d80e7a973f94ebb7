"""Time-of-flight densities of the loop-condensate state, conditioned on the loop readout."""

import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from fluxbec.constants import UM
from fluxbec.entanglement import (CompositeState, entanglement_entropy, free_expand,
                                  fringe_spacing, measured_fringe_period, tof_density)
from fluxbec.quantum_dynamics import Grid1D, Wavefunction1D
from fluxbec.trap import RB87_F2_MF2 as SP

out = sys.argv[1] if len(sys.argv) > 1 else "tof_interference.png"
t = 10e-3
grid = Grid1D.centered(32 * UM, 512)
state = CompositeState.symmetric(Wavefunction1D.gaussian(grid, 1 * UM, -5 * UM),
                                 Wavefunction1D.gaussian(grid, 1 * UM, 5 * UM))
print(f"entropy {entanglement_entropy(state):.4f} bits")
expanded = free_expand(state, t, SP)
dens = {c: tof_density(expanded, c, t) for c in ("none", "plus", "minus")}
lam = fringe_spacing(1 * UM, 10 * UM, SP, t)
period, _ = measured_fringe_period(dens["plus"], dens["minus"])
print(f"Lambda {lam / UM:.4f} um, measured {period / UM:.4f} um")

fig, ax = plt.subplots(figsize=(7, 4))
for c, d in dens.items():
    ax.plot(d.grid.y / UM, d.density * UM, label=f"{c} (p = {d.p_outcome:.2f})")
ax.set_xlim(-40, 40)
ax.set_xlabel("y [um]")
ax.set_ylabel("density [1/um]")
ax.legend()
fig.tight_layout()
fig.savefig(out, dpi=120)
print("wrote", out)
