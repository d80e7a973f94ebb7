"""Axial profiles for both loop currents, the model fit and the distance sweep."""

import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fluxbec import ChipSetup, solve_trap
from fluxbec.chip import profiles, sweep_distance
from fluxbec.constants import UM
from fluxbec.trap import fit_axial_model, perturbation_amplitude

out = sys.argv[1] if len(sys.argv) > 1 else "loop_perturbation.png"
setup = ChipSetup()
solved = solve_trap(setup)
bare, cw = profiles(solved, 100 * UM, 1001, 0.5, "clockwise")
_, acw = profiles(solved, 100 * UM, 1001, 0.5, "anticlockwise")
fit = fit_axial_model(cw)
print(f"amplitude {perturbation_amplitude(cw):.3f} mG")
print("fit:", {k: round(v, 6) for k, v in fit.to_dict().items()})

d_um = np.arange(8, 31, 2)
pts = sweep_distance(setup, d_um * UM)

fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
a.plot(bare.y_um, bare.intensity_mG, "k:", label="bare")
a.plot(cw.y_um, cw.intensity_mG, label="clockwise")
a.plot(acw.y_um, acw.intensity_mG, label="anticlockwise")
a.plot(cw.y_um, fit.evaluate(cw.y_um), "--", lw=1, label="fit")
a.set_xlabel("y [um]")
a.set_ylabel("|B| [mG]")
a.legend()
b.semilogy(d_um, [p.amplitude_mG for p in pts], "o-")
b.set_xlabel("loop distance d [um]")
b.set_ylabel("perturbation amplitude [mG]")
fig.tight_layout()
fig.savefig(out, dpi=120)
print("wrote", out)
