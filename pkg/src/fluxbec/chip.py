"""The atom-chip scenario: Z-wire trap, loop placement and calibration.

The wire dimensions and the loop conductor radius are not known, so two
knobs are calibrated against target numbers instead of being guessed:

* the Z-wire central-bar length sets the axial trap frequency;
* the loop wire radius sets the inductance, hence the persistent current
  and the perturbation amplitude.

:class:`ChipSetup` holds everything needed to rebuild the assembly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .constants import GAUSS, MILLIGAUSS, UM
from .errors import FluxBecError, PhysicsError
from .fluxloop import LoopCircuit, bias_field_for_half_quantum, persistent_current_for_flux
from .magnetostatics import CircularLoop, SourceAssembly, UniformBias, total_field, z_wire
from .trap import (RB87_F2_MF2, AtomSpecies, AxialProfile, TrapCharacterization, axial_profile,
                   find_minimum, perturbation_amplitude, refine_minimum, trap_frequencies)

log = logging.getLogger(__name__)

# Calibrated against a 10 Hz axial frequency and a 5.5 mG perturbation
# amplitude (see calibrate_bar_length / calibrate_wire_radius).
CALIBRATED_BAR_LENGTH = 5.0152e-3
CALIBRATED_WIRE_RADIUS = 0.26089e-6


@dataclass(frozen=True)
class ChipSetup:
    wire_current: float = 5.0                  # A
    bar_length: float = CALIBRATED_BAR_LENGTH  # m
    lead_length: float = 50e-3                 # m
    bias_x: float = 20 * GAUSS                 # T
    bottom_field: float = 1 * GAUSS            # T, tuned with a y bias
    loop_radius: float = 5e-6                  # m
    wire_radius: float = CALIBRATED_WIRE_RADIUS
    loop_distance: float = 10e-6               # loop centre below the trap minimum [m]
    flux_fraction: float = 0.5
    direction: str = "clockwise"
    include_loop_bias: bool = False            # add the half-quantum z bias to the assembly
    trap_guess: tuple = (0.0, 0.0, 500e-6)
    species: AtomSpecies = field(default=RB87_F2_MF2)

    def wire_sources(self):
        return z_wire(self.wire_current, self.bar_length, self.lead_length)

    def loop_geometry(self, center=(0.0, 0.0, 0.0), current=0.0):
        return CircularLoop(center, (0.0, 0.0, 1.0), self.loop_radius, current)

    def loop_current(self, flux_fraction=None, direction=None):
        """Signed loop current; clockwise seen from +z is negative about +z."""
        ff = self.flux_fraction if flux_fraction is None else flux_fraction
        direction = self.direction if direction is None else direction
        circuit = LoopCircuit(self.loop_geometry(), self.wire_radius)
        i = persistent_current_for_flux(circuit, ff)
        if direction == "clockwise":
            return -abs(i)
        if direction == "anticlockwise":
            return abs(i)
        raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class SolvedTrap:
    """A tuned bare trap: assembly without the loop plus its characterization."""

    setup: ChipSetup
    bias_x: float
    bias_y: float
    assembly: SourceAssembly
    trap: TrapCharacterization

    @property
    def loop_center(self):
        m = self.trap.minimum
        return np.array([m[0], m[1], m[2] - self.setup.loop_distance])

    def with_loop(self, current, center=None) -> SourceAssembly:
        center = self.loop_center if center is None else center
        loop = self.setup.loop_geometry(center, current)
        extra = (loop,)
        if self.setup.include_loop_bias:
            extra += (UniformBias([0.0, 0.0, bias_field_for_half_quantum(loop)]),)
        return self.assembly + extra


def _bare_assembly(setup, bias_x, bias_y):
    return SourceAssembly(setup.wire_sources() + (UniformBias([bias_x, 0.0, 0.0]),
                                                  UniformBias([0.0, bias_y, 0.0])))


def tune_bottom(setup: ChipSetup, bias_x=None, guess=None, tol=1e-12):
    """Find the y bias that puts the trap bottom at ``setup.bottom_field``."""
    bias_x = setup.bias_x if bias_x is None else bias_x
    guess = np.asarray(setup.trap_guess if guess is None else guess, dtype=float)
    bias_y = 0.0
    step = 5.0
    for _ in range(30):
        asm = _bare_assembly(setup, bias_x, bias_y)
        tc = find_minimum(asm, setup.species, guess, simplex_step=step)
        step = 0.2
        guess = tc.minimum
        by = total_field(asm, tc.minimum)[1]
        err = setup.bottom_field - tc.bottom_field
        if abs(err) < tol * setup.bottom_field:
            break
        # the bottom field is dominated by its y component
        bias_y += err if by >= 0 else -err
        if bias_y == 0.0 and by == 0.0:
            bias_y = setup.bottom_field
    else:
        raise PhysicsError("bottom-field tuning did not converge")
    return bias_y, guess


def solve_trap(setup: ChipSetup, bias_x=None) -> SolvedTrap:
    bias_x = setup.bias_x if bias_x is None else bias_x
    bias_y, guess = tune_bottom(setup, bias_x)
    asm = _bare_assembly(setup, bias_x, bias_y)
    tc = find_minimum(asm, setup.species, guess, simplex_step=0.2)
    omegas, axes, cond = trap_frequencies(asm, setup.species, tc.minimum)
    tc = TrapCharacterization(tc.minimum, tc.bottom_field, omegas, axes, cond)
    m = refine_minimum(asm, tc.minimum, tc.axial_axis)
    tc = TrapCharacterization(m, float(np.linalg.norm(total_field(asm, m))), omegas, axes, cond)
    return SolvedTrap(setup, bias_x, bias_y, asm, tc)


def solve_trap_at_height(setup: ChipSetup, height, tol=1e-10, start=None) -> SolvedTrap:
    """Adjust the x bias (re-tuning the bottom) until the minimum sits at ``height``."""
    start = solve_trap(setup) if start is None else start
    bx0, z0 = start.bias_x, start.trap.minimum[2]
    if abs(z0 - height) < tol:
        return start
    # wire-like scaling B ~ 1/z gives a good second point
    bx1 = bx0 * z0 / height
    s1 = solve_trap(replace(setup, trap_guess=(0.0, 0.0, height)), bx1)
    z1 = s1.trap.minimum[2]
    for _ in range(40):
        if abs(z1 - height) < tol:
            return s1
        bx0, z0, bx1 = bx1, z1, bx1 + (height - z1) * (bx1 - bx0) / (z1 - z0)
        s1 = solve_trap(replace(setup, trap_guess=(0.0, 0.0, height)), bx1)
        z1 = s1.trap.minimum[2]
    raise PhysicsError(f"could not place the trap at height {height} m")


def profiles(solved: SolvedTrap, window=100e-6, samples=1001, flux_fraction=None,
             direction=None):
    """Bare and loop-perturbed axial profiles of a solved trap."""
    setup = solved.setup
    current = setup.loop_current(flux_fraction, direction)
    bare = axial_profile(solved.assembly, setup.species, window, samples, reference=solved.trap)
    pert = axial_profile(solved.with_loop(current), setup.species, window, samples,
                         reference=solved.trap)
    return bare, pert


# ---------------------------------------------------------------------------
# calibration


def calibrate_bar_length(setup: ChipSetup, target_axial_hz=10.0, bracket=(3e-3, 8e-3),
                         xtol=1e-7):
    """Central-bar length giving ``target_axial_hz``; returns (length, SolvedTrap)."""
    def err(length):
        s = solve_trap(replace(setup, bar_length=length))
        return s.trap.frequencies_hz[1] - target_axial_hz

    length = brentq(err, *bracket, xtol=xtol)
    solved = solve_trap(replace(setup, bar_length=length))
    return length, solved


def calibrate_wire_radius(setup: ChipSetup, target_mG=5.5, bracket=(0.1e-6, 1.0e-6),
                          solved: Optional[SolvedTrap] = None, window=100e-6, samples=1001):
    """Loop wire radius whose half-quantum current gives ``target_mG``.

    Returns a report dict with the calibrated radius, inductance, current and
    amplitude.
    """
    solved = solve_trap(setup) if solved is None else solved

    def amp(radius):
        s = replace(setup, wire_radius=radius)
        sv = replace(solved, setup=s)
        _, pert = profiles(sv, window, samples)
        return perturbation_amplitude(pert)

    lo, hi = bracket
    if not (amp(lo) - target_mG) * (amp(hi) - target_mG) < 0:
        raise PhysicsError("target amplitude not reachable within the wire-radius bracket")
    radius = brentq(lambda r: amp(r) - target_mG, lo, hi, xtol=1e-12)
    final = replace(setup, wire_radius=radius)
    circuit = LoopCircuit(final.loop_geometry(), radius)
    return {
        "wire_radius_um": radius / UM,
        "inductance_H": circuit.self_inductance,
        "current_A": abs(final.loop_current()),
        "perturbation_amplitude_mG": amp(radius),
    }


# ---------------------------------------------------------------------------
# distance sweep


@dataclass(frozen=True)
class SweepPoint:
    d: float                       # m
    amplitude_mG: float            # loop-induced peak-to-trough (nan on error)
    extremum_amplitude_mG: float   # local max - local min of the full profile (nan if none)
    error: Optional[str] = None


def sweep_distance(setup: ChipSetup, d_values, flux_fraction=None, window=100e-6, samples=1001,
                   threads=1):
    """Perturbation amplitude versus loop-to-trap distance.

    The loop stays where ``setup`` puts it (``loop_distance`` below the
    nominal trap); for each ``d`` the x bias moves the trap so that its
    centre is ``d`` above the loop centre, the bottom field is re-tuned and
    the profiles are recomputed.
    """
    nominal = solve_trap(setup)
    loop_center = nominal.loop_center
    current = setup.loop_current(flux_fraction)

    def one(d):
        try:
            if d <= 1e-6:
                raise ValueError("distance must exceed the exclusion radius")
            solved = solve_trap_at_height(setup, loop_center[2] + d, start=nominal)
            bare = axial_profile(solved.assembly, setup.species, window, samples,
                                 reference=solved.trap)
            pert = axial_profile(solved.with_loop(current, center=loop_center), setup.species,
                                 window, samples, reference=solved.trap)
            amp = perturbation_amplitude(pert, baseline=bare)
            try:
                ext = perturbation_amplitude(pert)
            except FluxBecError:
                ext = float("nan")
            return SweepPoint(float(d), amp, ext)
        except (FluxBecError, ValueError) as exc:
            log.warning("sweep point d=%g m failed: %s", d, exc)
            return SweepPoint(float(d), float("nan"), float("nan"), str(exc))

    d_values = [float(d) for d in d_values]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(one, d_values))
    else:
        points = [one(d) for d in d_values]
    return sorted(points, key=lambda p: p.d)
