"""|B| on the horizontal plane through the Z-wire trap, with and without the loop."""

import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fluxbec import ChipSetup, solve_trap
from fluxbec.constants import GAUSS, MILLIGAUSS, UM
from fluxbec.magnetostatics import GridSpec, field_grid

out = sys.argv[1] if len(sys.argv) > 1 else "trap_field.png"
setup = ChipSetup()
solved = solve_trap(setup)
tc = solved.trap
print(f"minimum at {np.round(tc.minimum / UM, 3)} um, bottom {tc.bottom_field / GAUSS:.4f} G")
print("frequencies [Hz]:", np.round(tc.frequencies_hz, 2))

grid = GridSpec.centered(tc.minimum, (30 * UM, 60 * UM, 0.0), (121, 241, 1))
fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
for ax, (title, asm) in zip(axes, [("bare trap", solved.assembly),
                                   ("with loop", solved.with_loop(setup.loop_current()))]):
    fmap = field_grid(asm, grid)
    x, y, _ = grid.axes()
    img = (fmap.intensity[:, :, 0].T - tc.bottom_field) / MILLIGAUSS
    m = ax.pcolormesh((x - tc.minimum[0]) / UM, (y - tc.minimum[1]) / UM, img, shading="auto",
                      vmax=np.percentile(img, 60))
    ax.set_title(title)
    ax.set_xlabel("x [um]")
    fig.colorbar(m, ax=ax, label="|B| - B_min [mG]")
axes[0].set_ylabel("y [um]")
fig.tight_layout()
fig.savefig(out, dpi=120)
print("wrote", out)
