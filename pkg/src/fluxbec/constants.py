"""Physical constants and unit conversions.

Everything inside the package is SI (m, s, A, T, J). The helpers below are
the single conversion boundary to the lab units used in reports and CSV
files (um, ms, G, mG).
"""

import numpy as np

CONSTANTS_VERSION = "1"

MU0 = 4e-7 * np.pi                  # vacuum permeability [T m / A]
FLUX_QUANTUM = 2.067833848e-15      # h / 2e [Wb]
MU_B = 9.2740100783e-24             # Bohr magneton [J / T]
MASS_RB87 = 1.44316060e-25          # [kg]
HBAR = 1.054571817e-34              # [J s]
A_SCATTER_RB87 = 5.31e-9            # s-wave scattering length [m]

UM = 1e-6
MS = 1e-3
GAUSS = 1e-4
MILLIGAUSS = 1e-7


def to_um(x):
    return np.asarray(x) / UM


def to_mG(b):
    return np.asarray(b) / MILLIGAUSS


def to_gauss(b):
    return np.asarray(b) / GAUSS


def table():
    """Return the pinned constants as a plain dict (for manifests)."""
    return {
        "version": CONSTANTS_VERSION,
        "mu0": MU0,
        "flux_quantum": FLUX_QUANTUM,
        "mu_B": MU_B,
        "mass_rb87": MASS_RB87,
        "hbar": HBAR,
        "a_scatter_rb87": A_SCATTER_RB87,
    }
