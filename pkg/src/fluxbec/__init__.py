"""Atom-chip BEC coupled to a superconducting flux loop.

Magnetostatics of the chip, the loop as a two-level system, trap
characterization, 1D branch dynamics and time-of-flight signatures of the
resulting loop-condensate entanglement.
"""

from .chip import ChipSetup, SolvedTrap, profiles, solve_trap, sweep_distance
from .entanglement import (CompositeState, TofDensity, apply_cnot, branch_overlap,
                           entanglement_entropy, free_expand, fringe_spacing, noon_fringe_spacing,
                           perturbation_distinguishability_check, tof_density)
from .fluxloop import (LoopCircuit, TwoLevelHamiltonian, TwoLevelState, bias_field_for_half_quantum,
                       evolve_two_level, measure_loop, persistent_current_for_flux, self_inductance)
from .magnetostatics import (CircularLoop, FieldMap, FiniteSegment, GridSpec, SourceAssembly,
                             UniformBias, field_grid, loop_field, segment_field, total_field, z_wire)
from .quantum_dynamics import (BranchResult, Grid1D, RampSchedule, Wavefunction1D,
                               adiabatic_criterion, branch_evolution, chemical_potential,
                               ground_state, propagate, relative_phase, thomas_fermi_mu)
from .trap import (RB87_F2_MF2, AtomSpecies, AxialFitParams, AxialProfile, TrapCharacterization,
                   axial_profile, find_minimum, fit_axial_model, perturbation_amplitude, potential,
                   trap_frequencies)

__version__ = "0.1.0"
