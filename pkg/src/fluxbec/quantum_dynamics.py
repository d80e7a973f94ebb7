"""One-dimensional axial dynamics of the condensate.

The condensate is reduced to its axial coordinate ``y``; the tight radial
directions only renormalize the contact interaction (see :func:`g1d`).
Wavefunctions carry unit single-particle norm with the atom number kept
alongside, so the mean-field energy per atom is ``g1d * N * |psi|**2``.

Propagation uses Strang-split spectral stepping on a periodic, cell-centred
grid. Cell centring makes the grid exactly symmetric under ``y -> -y``
(array reversal), which the branch mirror identity relies on.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from scipy import fft as sfft
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import eigh_tridiagonal

from .constants import HBAR, MILLIGAUSS, MS, UM
from .errors import (DegenerateRegimeWarning, FidelityBelowFloor, MeshMismatch, NoConvergence,
                     PhysicsError, StabilityGuardTripped, WindowTooSmall)
from .trap import AtomSpecies, AxialFitParams

STABILITY_LIMIT = 0.1        # max dt |V| / hbar
BOUNDARY_LIMIT = 1e-10       # probability per edge cell
BOUNDARY_CELLS = 8
ADIABATIC_THRESHOLD = 0.1    # "dw/dt << w^2"
FIDELITY_FLOOR = 0.9
SAMPLE_EVERY = 50
NORM_DRIFT = 1e-10          # per 1e5 real-time steps
ENERGY_RISE_TOL = 1e-13     # imaginary-time energy rise allowed per step [hbar w]

Potential = Union[np.ndarray, Callable]


# ---------------------------------------------------------------------------
# grid and wavefunctions


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid of ``n`` cells on ``[y_min, y_max)``; nodes at cell centres."""

    y_min: float
    y_max: float
    n: int

    def __post_init__(self):
        if self.n < 256 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 256, got {self.n}")
        if not self.y_max > self.y_min:
            raise ValueError("y_max must exceed y_min")

    @classmethod
    def centered(cls, half_width, n=1024):
        return cls(-half_width, half_width, n)

    @property
    def length(self):
        return self.y_max - self.y_min

    @property
    def dy(self):
        return self.length / self.n

    @cached_property
    def y(self):
        y = self.y_min + (np.arange(self.n) + 0.5) * self.dy
        y.flags.writeable = False
        return y

    @cached_property
    def k(self):
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dy)

    def is_symmetric(self):
        return abs(self.y_min + self.y_max) <= 1e-15 * self.length

    def check_width(self, cloud_width):
        if self.length < 6 * cloud_width:
            raise WindowTooSmall(
                f"window {self.length:.3g} m is narrower than 6x the cloud width {cloud_width:.3g} m")


@dataclass(frozen=True)
class Wavefunction1D:
    grid: Grid1D
    amplitudes: np.ndarray = field(repr=False)
    N: int = 1

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n,):
            raise ValueError("amplitude array does not match the grid")
        if self.N < 1:
            raise ValueError("atom number must be >= 1")
        object.__setattr__(self, "amplitudes", amps)
        norm = self.norm()
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"wavefunction not normalized (norm = {norm!r})")

    @classmethod
    def from_array(cls, grid, amps, N=1):
        amps = np.asarray(amps, dtype=complex)
        s = np.sqrt(np.sum(np.abs(amps) ** 2) * grid.dy)
        if s == 0:
            raise ValueError("cannot normalize a zero wavefunction")
        return cls(grid, amps / s, N)

    @classmethod
    def gaussian(cls, grid, sigma, center=0.0, N=1, momentum=0.0):
        """``exp(-(y - c)^2 / (2 sigma^2))``, i.e. density rms width ``sigma/sqrt(2)``."""
        y = grid.y
        return cls.from_array(grid, np.exp(-(y - center) ** 2 / (2 * sigma ** 2) + 1j * momentum * y), N)

    def norm(self):
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dy)

    @property
    def density(self):
        """Single-particle density [1/m]."""
        return np.abs(self.amplitudes) ** 2

    def mean(self):
        return float(np.sum(self.grid.y * self.density) * self.grid.dy)

    def width(self):
        """rms width of the density."""
        y = self.grid.y
        m = self.mean()
        return float(np.sqrt(np.sum((y - m) ** 2 * self.density) * self.grid.dy))

    def overlap(self, other: "Wavefunction1D") -> complex:
        if other.grid != self.grid:
            raise MeshMismatch("wavefunctions live on different grids")
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.dy)

    def fidelity(self, other):
        return abs(self.overlap(other)) ** 2

    def mirrored(self):
        if not self.grid.is_symmetric():
            raise ValueError("mirroring needs a grid centred on y = 0")
        return Wavefunction1D(self.grid, self.amplitudes[::-1].copy(), self.N)

    def l2_distance(self, other):
        if other.grid != self.grid:
            raise MeshMismatch("wavefunctions live on different grids")
        return float(np.sqrt(np.sum(np.abs(self.amplitudes - other.amplitudes) ** 2) * self.grid.dy))

    def with_amplitudes(self, amps):
        return Wavefunction1D(self.grid, amps, self.N)

    def boundary_probability(self, cells=BOUNDARY_CELLS):
        p = self.density * self.grid.dy
        return float(max(p[:cells].max(), p[-cells:].max()))

    def to_csv(self, path, fmt="%.9g"):
        """CSV ``y_um,re,im,density`` with amplitudes in 1/sqrt(um)."""
        y = self.grid.y / UM
        a = self.amplitudes * np.sqrt(UM)
        data = np.column_stack([y, a.real, a.imag, np.abs(a) ** 2])
        np.savetxt(path, data, delimiter=",", header="y_um,re,im,density", comments="", fmt=fmt)

    @classmethod
    def from_csv(cls, path, grid, N=1):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] != grid.n or not np.allclose(data[:, 0] * UM, grid.y, rtol=0,
                                                      atol=1e-6 * grid.dy):
            raise MeshMismatch(f"{path} does not match the expected grid")
        return cls.from_array(grid, (data[:, 1] + 1j * data[:, 2]) / np.sqrt(UM), N)


def _check_boundary(psi: Wavefunction1D, what="wavefunction"):
    p = psi.boundary_probability()
    if p > BOUNDARY_LIMIT:
        raise WindowTooSmall(f"{what} reaches the window edge (edge probability {p:.2e})")


def _potential_array(grid, V, t=0.0):
    if callable(V):
        return np.asarray(V(grid.y, t), dtype=float)
    V = np.asarray(V, dtype=float)
    if V.shape == ():
        return np.full(grid.n, float(V))
    if V.shape != (grid.n,):
        raise ValueError("potential array does not match the grid")
    return V


# ---------------------------------------------------------------------------
# interaction constants and closed forms


def g1d(species: AtomSpecies, omega_x, omega_z):
    """Axial contact coupling ``g3d / (2 pi l_x l_z)`` [J m]."""
    g3d = 4 * np.pi * HBAR ** 2 * species.scattering_length / species.mass
    lx = np.sqrt(HBAR / (species.mass * omega_x))
    lz = np.sqrt(HBAR / (species.mass * omega_z))
    return g3d / (2 * np.pi * lx * lz)


class ChemicalPotential(NamedTuple):
    joule: float
    mG: float


def thomas_fermi_mu(species: AtomSpecies, frequencies, N) -> ChemicalPotential:
    """Three-dimensional Thomas-Fermi chemical potential.

    ``mu = (hbar wbar / 2) (15 N a_s / a_ho)**(2/5)`` with ``wbar`` the
    geometric mean of ``frequencies`` (rad/s). Returns joules and the
    equivalent field in mG.
    """
    w = np.asarray(frequencies, dtype=float)
    if np.any(w <= 0):
        raise ValueError("trap frequencies must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    if species.scattering_length == 0:
        warnings.warn("zero scattering length: Thomas-Fermi limit does not apply, returning 0",
                      DegenerateRegimeWarning)
        return ChemicalPotential(0.0, 0.0)
    wbar = float(np.prod(w) ** (1 / len(w)))
    a_ho = np.sqrt(HBAR / (species.mass * wbar))
    mu = 0.5 * HBAR * wbar * (15 * N * species.scattering_length / a_ho) ** 0.4
    return ChemicalPotential(float(mu), float(mu / species.moment / MILLIGAUSS))


def thomas_fermi_mu_1d(species: AtomSpecies, omega, g, N):
    """1D Thomas-Fermi chemical potential ``(9 N^2 g^2 m w^2 / 32)^(1/3)`` [J]."""
    return float((9 * N ** 2 * g ** 2 * species.mass * omega ** 2 / 32) ** (1 / 3))


# ---------------------------------------------------------------------------
# energies


def _kinetic_spectrum(grid, species):
    return HBAR ** 2 * grid.k ** 2 / (2 * species.mass)


def _energy_terms(amps, grid, V, species, gN):
    dy = grid.dy
    phik = np.fft.fft(amps)
    kin = np.sum(_kinetic_spectrum(grid, species) * np.abs(phik) ** 2) * dy / grid.n
    dens = np.abs(amps) ** 2
    pot = np.sum(V * dens) * dy
    inter = np.sum(gN * dens ** 2) * dy
    return float(kin), float(pot), float(inter)


def chemical_potential(psi: Wavefunction1D, potential, g1d_value=0.0, species=None, t=0.0):
    """``<psi| -hbar^2/2m d^2 + V + g1d N |psi|^2 |psi>`` [J].

    The kinetic term is evaluated spectrally. ``species`` supplies the
    mass (defaults to 87Rb).
    """
    species = _default_species(species)
    V = _potential_array(psi.grid, potential, t)
    kin, pot, inter = _energy_terms(psi.amplitudes, psi.grid, V, species, g1d_value * psi.N)
    return kin + pot + inter


def gp_energy(psi: Wavefunction1D, potential, g1d_value=0.0, species=None, t=0.0):
    """Mean-field energy per atom (interaction counted once, ``1/2 g N |psi|^4``)."""
    species = _default_species(species)
    V = _potential_array(psi.grid, potential, t)
    kin, pot, inter = _energy_terms(psi.amplitudes, psi.grid, V, species, g1d_value * psi.N)
    return kin + pot + 0.5 * inter


def _default_species(species):
    if species is None:
        from .trap import RB87_F2_MF2
        return RB87_F2_MF2
    return species


# ---------------------------------------------------------------------------
# finite-difference eigensolver (oracle and instantaneous ground states)


def fd_eigenstates(grid: Grid1D, V, species: AtomSpecies, count=1):
    """Lowest ``count`` eigenpairs of the 3-point finite-difference Hamiltonian.

    Dirichlet boundaries; eigenvectors are returned as unit-norm arrays on
    the grid (``sum |v|^2 dy = 1``) with a positive largest lobe.
    """
    V = _potential_array(grid, V)
    c = HBAR ** 2 / (2 * species.mass * grid.dy ** 2)
    diag = V + 2 * c
    off = np.full(grid.n - 1, -c)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
    v = v / np.sqrt(grid.dy)
    for j in range(v.shape[1]):
        if v[np.argmax(np.abs(v[:, j])), j] < 0:
            v[:, j] *= -1
    return w, v


def fd_ground_state(grid, V, species, N=1) -> Wavefunction1D:
    _, v = fd_eigenstates(grid, V, species, 1)
    return Wavefunction1D.from_array(grid, v[:, 0], N)


# ---------------------------------------------------------------------------
# imaginary time


def _vertex(grid, V):
    # parabolic refinement of argmin V, so an even potential gives an even guess
    i = int(np.clip(np.argmin(V), 1, grid.n - 2))
    v0, v1, v2 = V[i - 1], V[i], V[i + 1]
    den = v0 - 2 * v1 + v2
    shift = 0.5 * (v0 - v2) / den if den > 0 else 0.0
    return grid.y[i] + shift * grid.dy


@dataclass
class GroundStateInfo:
    energies: np.ndarray      # GP energy after every step [J]
    dtau: np.ndarray          # step used for each entry [s]
    omega_ref: float          # energy scale hbar*omega_ref for the tolerance
    steps: int


def ground_state(grid: Grid1D, potential, species: AtomSpecies = None, g1d_value=0.0, N=1,
                 tol=1e-12, omega_ref=None, max_steps=200_000, guess=None, full_output=False):
    """Imaginary-time ground state.

    Strang-split steps with renormalization, in stages of decreasing
    ``dtau`` (0.1, 0.01, 0.001 in units of ``1/omega_ref``). The last stage
    runs until the energy changes by less than ``tol * hbar * omega_ref``
    per step. A step that raises the energy is rejected and retried with
    half the ``dtau``, which then stays in force for the stage.
    ``omega_ref`` defaults to the finite-difference excitation gap.
    """
    species = _default_species(species)
    V = _potential_array(grid, potential)
    if g1d_value < 0:
        raise ValueError("g1d must be non-negative")
    if omega_ref is None:
        w, _ = fd_eigenstates(grid, V, species, 2)
        omega_ref = (w[1] - w[0]) / HBAR
    scale = HBAR * omega_ref
    gN = g1d_value * N

    if guess is None:
        # gaussian at the potential minimum, oscillator width for omega_ref
        l = np.sqrt(HBAR / (species.mass * omega_ref))
        guess = np.exp(-(grid.y - _vertex(grid, V)) ** 2 / (2 * l ** 2))
    elif isinstance(guess, Wavefunction1D):
        guess = guess.amplitudes
    phi = np.asarray(guess, dtype=complex)
    phi = phi / np.sqrt(np.sum(np.abs(phi) ** 2) * grid.dy)

    T = _kinetic_spectrum(grid, species)

    def step(phi, dtau, expK):
        phi = phi * np.exp(-(V + gN * np.abs(phi) ** 2) * dtau / (2 * HBAR))
        phi = np.fft.ifft(expK * np.fft.fft(phi))
        phi = phi * np.exp(-(V + gN * np.abs(phi) ** 2) * dtau / (2 * HBAR))
        return phi / np.sqrt(np.sum(np.abs(phi) ** 2) * grid.dy)

    energies, dtaus = [], []
    E = sum(_energy_terms(phi, grid, V, species, 0.5 * gN))
    steps = 0
    for stage, dtau_w in enumerate((0.1, 0.01, 0.001)):
        dtau = dtau_w / omega_ref
        expK = np.exp(-T * dtau / HBAR)
        stage_tol = tol * scale if stage == 2 else 1e-8 * scale
        while True:
            if steps >= max_steps:
                raise NoConvergence(f"imaginary-time solve did not converge in {max_steps} steps")
            trial = step(phi, dtau, expK)
            E_new = sum(_energy_terms(trial, grid, V, species, 0.5 * gN))
            steps += 1
            if E_new - E > ENERGY_RISE_TOL * scale:
                # large split steps need not lower <H>; halve and keep the smaller step
                dtau *= 0.5
                if dtau * omega_ref < 1e-9:
                    raise NoConvergence("imaginary-time energy keeps rising as dtau -> 0")
                expK = np.exp(-T * dtau / HBAR)
                continue
            phi = trial
            energies.append(E_new)
            dtaus.append(dtau)
            dE = abs(E_new - E)
            E = E_new
            if dE < stage_tol:
                break

    # the ground state is nodeless; fix the real, positive gauge
    psi = Wavefunction1D.from_array(grid, np.abs(phi), N)
    _check_boundary(psi, "ground state")
    if full_output:
        return psi, GroundStateInfo(np.array(energies), np.array(dtaus), float(omega_ref), steps)
    return psi


# ---------------------------------------------------------------------------
# real time


def _guard(V, dt):
    vmax = float(np.max(np.abs(V)))
    if abs(dt) * vmax / HBAR >= STABILITY_LIMIT:
        raise StabilityGuardTripped(
            f"dt*max|V|/hbar = {abs(dt) * vmax / HBAR:.3g} exceeds {STABILITY_LIMIT}")


def propagate(psi: Wavefunction1D, potential: Potential, dt, steps, species=None, g1d_value=0.0,
              t0=0.0, monitor_every=100, callback=None):
    """Real-time Strang-split propagation.

    ``potential`` is an array on the grid, a constant, or a callable
    ``V(y, t)``; time-dependent potentials are evaluated at the step
    midpoint. ``callback(step, t, amps)`` runs after every step if given.
    Negative ``dt`` runs backwards.
    """
    species = _default_species(species)
    grid = psi.grid
    gN = g1d_value * psi.N
    expK = np.exp(-1j * _kinetic_spectrum(grid, species) * dt / HBAR)
    static = not callable(potential)
    if static:
        V = _potential_array(grid, potential)
        _guard(V, dt)
        expV = np.exp(-1j * V * dt / (2 * HBAR))
    phi = psi.amplitudes.copy()
    for s in range(int(steps)):
        t = t0 + s * dt
        if not static:
            V = _potential_array(grid, potential, t + 0.5 * dt)
            _guard(V, dt)
            expV = np.exp(-1j * V * dt / (2 * HBAR))
        if gN:
            phi *= expV * np.exp(-1j * gN * np.abs(phi) ** 2 * dt / (2 * HBAR))
        else:
            phi *= expV
        phi = sfft.ifft(expK * sfft.fft(phi, overwrite_x=True), overwrite_x=True)
        if gN:
            phi *= expV * np.exp(-1j * gN * np.abs(phi) ** 2 * dt / (2 * HBAR))
        else:
            phi *= expV
        if monitor_every and (s + 1) % monitor_every == 0:
            p = np.abs(phi) ** 2 * grid.dy
            if max(p[:BOUNDARY_CELLS].max(), p[-BOUNDARY_CELLS:].max()) > BOUNDARY_LIMIT:
                raise WindowTooSmall(f"wavefunction reached the window edge at t = {t + dt:.3g} s")
        if callback is not None:
            callback(s + 1, t + dt, phi)
    # unitary up to rounding; allow 1e-10 drift per 1e5 steps, then renormalize
    norm = float(np.sum(np.abs(phi) ** 2) * grid.dy)
    if abs(norm - psi.norm()) > NORM_DRIFT * max(1.0, steps / 1e5):
        raise PhysicsError(f"norm drifted to {norm!r} over {steps} steps")
    out = Wavefunction1D(grid, phi / np.sqrt(norm), psi.N)
    _check_boundary(out)
    return out


# ---------------------------------------------------------------------------
# ramp schedule and branch potentials


def smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3 - 2 * s)


@dataclass(frozen=True)
class RampSchedule:
    """Turn-on of the loop perturbation over ``duration``.

    ``a`` goes from 0 to ``a_final`` (mG um). The axial frequency goes from
    ``omega`` to ``omega_final`` (rad/s) with the same shape; by default it
    is held fixed. The trap displacement ``z0`` is assumed compensated by the
    offset field and is identically zero.
    """

    duration: float
    a_final: float
    omega: float
    shape: str = "smoothstep"
    omega_final: Optional[float] = None

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.shape not in ("linear", "smoothstep"):
            raise ValueError(f"unknown ramp shape {self.shape!r}")
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    def ramp(self, t):
        if np.ndim(t) == 0:
            if self.duration == 0:
                return 1.0
            u = min(max(float(t) / self.duration, 0.0), 1.0)
            return u * u * (3 - 2 * u) if self.shape == "smoothstep" else u
        t = np.asarray(t, dtype=float)
        if self.duration == 0:
            return np.ones_like(t)
        s = np.clip(t / self.duration, 0.0, 1.0)
        return smoothstep(s) if self.shape == "smoothstep" else s

    def a_of_t(self, t):
        return self.a_final * self.ramp(t)

    def omega_of_t(self, t):
        wf = self.omega if self.omega_final is None else self.omega_final
        return self.omega + (wf - self.omega) * self.ramp(t)

    def z0_of_t(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


BRANCH_SIGN = {0: 1.0, 1: -1.0, "clockwise": 1.0, "anticlockwise": -1.0}


class BranchPotential:
    """``V(y, t)`` for one loop branch (SI).

    ``1/2 m w(t)^2 y^2 + s mu (2 a(t) y / sigma^2) exp(-y^2/sigma^2)`` with
    ``s = +1`` for |0> (clockwise) and ``-1`` for |1>. ``a`` is taken from the
    clockwise fit, so branch |0> reproduces the fitted profile. The constant
    offset is set to zero. ``extra(y, t)`` is added if given.
    """

    def __init__(self, schedule: RampSchedule, fit: AxialFitParams, branch, species: AtomSpecies,
                 extra: Optional[Callable] = None):
        self.schedule = schedule
        self.fit = fit
        self.branch = branch
        self.sign = BRANCH_SIGN[branch]
        self.species = species
        self.extra = extra
        self._y = None

    def _terms(self, y):
        # spatial shapes are cached for the last grid seen
        if y is not self._y:
            sigma = self.fit.sigma0 * UM
            self._y = y
            self._harm = 0.5 * self.species.mass * y ** 2
            self._pert = (self.sign * self.species.moment * 2 * MILLIGAUSS * UM / sigma ** 2
                          * y * np.exp(-(y / sigma) ** 2))
        return self._harm, self._pert

    def __call__(self, y, t):
        harm, pert = self._terms(y)
        w = float(self.schedule.omega_of_t(t))
        out = w * w * harm + float(self.schedule.a_of_t(t)) * pert
        if self.extra is not None:
            out = out + self.extra(y, t)
        return out


def branch_potential(schedule, fit, branch, species, extra=None) -> BranchPotential:
    return BranchPotential(schedule, fit, branch, species, extra)


# ---------------------------------------------------------------------------
# branch evolution


@dataclass
class BranchResult:
    branch: object
    final: Wavefunction1D
    mu_samples: np.ndarray          # (k, 2): t [s], mu [J]
    fidelity_samples: np.ndarray    # (k, 2): t [s], |<psi|gs(t)>|^2
    geometric_phase: float = 0.0
    dt: float = 0.0
    snapshots: dict = field(default_factory=dict, repr=False)

    @property
    def times(self):
        return self.mu_samples[:, 0]

    @property
    def mu(self):
        return self.mu_samples[:, 1]

    @property
    def fidelity(self):
        return self.fidelity_samples[:, 1]

    @property
    def min_fidelity(self):
        return float(self.fidelity.min())

    @property
    def final_fidelity(self):
        return float(self.fidelity[-1])


def default_dt(grid, V, duration, safety=0.8):
    """Largest step honouring the stability guard (times ``safety``)."""
    vmax = max(float(np.max(np.abs(V))), 1e-300)
    return min(safety * STABILITY_LIMIT * HBAR / vmax, duration) if duration > 0 else 0.0


def branch_evolution(psi_init: Wavefunction1D, schedule: RampSchedule, fit: AxialFitParams,
                     branch, species: AtomSpecies = None, dt=None, g1d_value=0.0,
                     sample_every=SAMPLE_EVERY, extra_potential=None, snapshot_times=()):
    """Evolve one branch through the ramp, sampling mu(t) and the fidelity.

    Every ``sample_every`` steps (and at both ends) the chemical potential
    and the overlap with the instantaneous ground state are recorded. The
    instantaneous ground state comes from the finite-difference eigensolver.
    """
    species = _default_species(species)
    grid = psi_init.grid
    V = branch_potential(schedule, fit, branch, species, extra_potential)
    T = schedule.duration
    if dt is None:
        dt = default_dt(grid, V(grid.y, T), T)
    steps = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
    dt = T / steps if steps else 0.0

    snap_steps = {int(round(ts / dt)) if dt else 0: ts for ts in snapshot_times}
    mu_s, fid_s, snaps = [], [], {}

    def sample(t, amps):
        psi = Wavefunction1D.from_array(grid, amps, psi_init.N)
        Vt = V(grid.y, t)
        mu_s.append((t, chemical_potential(psi, Vt, g1d_value, species)))
        if g1d_value:
            gs = ground_state(grid, Vt, species, g1d_value, psi_init.N, tol=1e-10)
        else:
            gs = fd_ground_state(grid, Vt, species)
        fid_s.append((t, min(psi.fidelity(gs), 1.0)))

    def callback(step, t, amps):
        if step % sample_every == 0 or step == steps:
            sample(t, amps)
        if step in snap_steps:
            snaps[snap_steps[step]] = Wavefunction1D.from_array(grid, amps, psi_init.N)

    sample(0.0, psi_init.amplitudes)
    if 0 in snap_steps:
        snaps[snap_steps[0]] = psi_init
    final = propagate(psi_init, V, dt, steps, species, g1d_value, callback=callback) if steps else psi_init
    res = BranchResult(branch, final, np.array(mu_s), np.array(fid_s), 0.0, dt, snaps)
    if res.min_fidelity < FIDELITY_FLOOR:
        warnings.warn(f"branch {branch}: minimum fidelity {res.min_fidelity:.3f} is below "
                      f"{FIDELITY_FLOOR}; evolution is not adiabatic", FidelityBelowFloor)
    return res


def evolve_branches(psi_init, schedule, fit, species=None, threads=2, **kwargs):
    """Both branches; they are independent and may run in parallel.

    Without an explicit ``dt`` both use the smaller of the two default
    steps, so their samples share one time mesh.
    """
    species = _default_species(species)
    if kwargs.get("dt") is None and schedule.duration > 0:
        grid = psi_init.grid
        extra = kwargs.get("extra_potential")
        T = schedule.duration
        kwargs["dt"] = min(default_dt(grid, branch_potential(schedule, fit, b, species, extra)(grid.y, T), T)
                           for b in (0, 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            futs = [pool.submit(branch_evolution, psi_init, schedule, fit, b, species, **kwargs)
                    for b in (0, 1)]
            return tuple(f.result() for f in futs)
    return tuple(branch_evolution(psi_init, schedule, fit, b, species, **kwargs) for b in (0, 1))


# ---------------------------------------------------------------------------
# relative phase and adiabaticity


@dataclass(frozen=True)
class PhaseSeries:
    t: np.ndarray
    unwrapped: np.ndarray     # rad
    geometric: float = 0.0

    @property
    def wrapped(self):
        """Phase folded into [0, 2 pi)."""
        return np.mod(self.unwrapped, 2 * np.pi)

    @property
    def final(self):
        return float(self.unwrapped[-1])


def relative_phase(result0: BranchResult, result1: BranchResult, N) -> PhaseSeries:
    """``N * integral (mu0 - mu1) / hbar dt`` plus the geometric-phase difference (zero)."""
    t0, t1 = result0.times, result1.times
    if t0.shape != t1.shape or not np.allclose(t0, t1, rtol=0, atol=1e-15 + 1e-12 * np.max(np.abs(t0))):
        raise MeshMismatch("branch results are sampled on different time meshes")
    integrand = N * (result0.mu - result1.mu) / HBAR
    phi = cumulative_trapezoid(integrand, t0, initial=0.0)
    geo = result1.geometric_phase - result0.geometric_phase
    return PhaseSeries(t0.copy(), phi + geo, geo)


@dataclass(frozen=True)
class AdiabaticReport:
    margin: float          # max |dw/dt| / w^2
    t_at_max: float
    threshold: float = ADIABATIC_THRESHOLD

    @property
    def passed(self):
        return self.margin < self.threshold

    def to_dict(self):
        return {"margin": self.margin, "t_at_max_s": self.t_at_max, "threshold": self.threshold,
                "verdict": "PASS" if self.passed else "FAIL"}


def adiabatic_criterion(schedule: RampSchedule, samples=10_001) -> AdiabaticReport:
    """``max |dw/dt| / w^2`` over the schedule (finite differences on a mesh)."""
    if schedule.duration == 0:
        same = schedule.omega_final in (None, schedule.omega)
        return AdiabaticReport(0.0 if same else np.inf, 0.0)
    t = np.linspace(0.0, schedule.duration, samples)
    w = schedule.omega_of_t(t)
    dw = np.gradient(w, t[1] - t[0])     # uniform spacing: constant w gives exactly 0
    r = np.abs(dw) / w ** 2
    i = int(np.argmax(r))
    return AdiabaticReport(float(r[i]), float(t[i]))


def export_timeseries(path, result0: BranchResult, result1: BranchResult, phase: PhaseSeries,
                      species: AtomSpecies):
    """CSV ``t_ms,mu0_mG,mu1_mG,Phi_rad,fidelity0,fidelity1``."""
    to_mG = 1.0 / (species.moment * MILLIGAUSS)
    data = np.column_stack([phase.t / MS, result0.mu * to_mG, result1.mu * to_mG, phase.unwrapped,
                            result0.fidelity, result1.fidelity])
    np.savetxt(path, data, delimiter=",", header="t_ms,mu0_mG,mu1_mG,Phi_rad,fidelity0,fidelity1",
               comments="", fmt="%.12g")
