"""Loop-condensate composite state and its time-of-flight signatures.

The joint state is

    c0 |0>|N, phi0> + c1 exp(i Phi) |1>|N, phi1>

with ``|N, phi>`` the N-fold product of a single orbital. Every many-body
quantity then follows from single-orbital overlaps: the one-body cross term
between the branches carries ``<phi0|phi1>**(N - 1)`` and the loop coherence
carries ``<phi0|phi1>**N``.

Notation: ``|+->`` always means the *loop* states ``(|0> +- |1>)/sqrt 2``.
The symmetric condensate superposition produced by :func:`apply_cnot` is
tracked through the ``disentangled`` flag instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .constants import HBAR, UM
from .errors import MeshMismatch, WindowTooSmall, ZeroProbabilityBranch
from .quantum_dynamics import (BOUNDARY_LIMIT, Grid1D, Wavefunction1D, _kinetic_spectrum,
                               thomas_fermi_mu)
from .trap import AtomSpecies, AxialFitParams, RB87_F2_MF2

CONDITIONINGS = ("none", "loop0", "loop1", "plus", "minus")
P_MIN = 1e-15
MAX_GRID = 2 ** 22


@dataclass(frozen=True)
class CompositeState:
    c0: complex
    c1: complex
    phi0: Wavefunction1D
    phi1: Wavefunction1D
    N: int = 1
    Phi: float = 0.0
    global_phase: float = 0.0
    disentangled: bool = False   # loop factored out in |0>; (c0, c1) now weight the condensate

    def __post_init__(self):
        norm = abs(self.c0) ** 2 + abs(self.c1) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"loop amplitudes not normalized (|c0|^2 + |c1|^2 = {norm})")
        if self.phi0.grid != self.phi1.grid:
            raise MeshMismatch("branch wavefunctions live on different grids")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @classmethod
    def symmetric(cls, phi0, phi1, N=1, Phi=0.0):
        return cls(2 ** -0.5, 2 ** -0.5, phi0, phi1, N, Phi)

    @property
    def grid(self) -> Grid1D:
        return self.phi0.grid

    @property
    def weight1(self) -> complex:
        """Coefficient of the |1> branch including the relative phase."""
        return self.c1 * np.exp(1j * self.Phi)


class BranchOverlap(NamedTuple):
    overlap: complex       # <phi0|phi1>
    contrast_N: float      # |<phi0|phi1>|^N


def branch_overlap(state: CompositeState) -> BranchOverlap:
    s = state.phi0.overlap(state.phi1)
    return BranchOverlap(s, float(abs(s) ** state.N))


def _n_overlap(state, power):
    s = state.phi0.overlap(state.phi1)
    return s ** power if power else 1.0 + 0j


# ---------------------------------------------------------------------------
# free expansion


def _padded_grid(grid: Grid1D, n_new):
    pad = (n_new - grid.n) // 2
    return Grid1D(grid.y_min - pad * grid.dy, grid.y_max + pad * grid.dy, n_new), pad


def _required_cells(psi: Wavefunction1D, t, species):
    # ballistic reach from the momentum distribution (mean + 10 rms)
    g = psi.grid
    pk = np.abs(np.fft.fft(psi.amplitudes)) ** 2
    pk /= pk.sum()
    k = g.k
    kmean = np.sum(k * pk)
    krms = np.sqrt(np.sum((k - kmean) ** 2 * pk))
    reach = HBAR * t * (abs(kmean) + 10 * krms) / species.mass
    return int(np.ceil(2 * reach / g.dy))


def expand_wavefunction(psi: Wavefunction1D, t, species: AtomSpecies = RB87_F2_MF2,
                        n_new=None) -> Wavefunction1D:
    """Exact free evolution for time ``t`` on a zero-padded grid (same spacing)."""
    if t < 0:
        raise ValueError("expansion time must be non-negative")
    g = psi.grid
    if n_new is None:
        n_new = 1 << int(np.ceil(np.log2(g.n + _required_cells(psi, t, species))))
    if n_new > MAX_GRID:
        raise WindowTooSmall(f"expanded cloud needs {n_new} grid points (cap {MAX_GRID})")
    new, pad = _padded_grid(g, n_new)
    amps = np.zeros(n_new, dtype=complex)
    amps[pad:pad + g.n] = psi.amplitudes
    if t:
        amps = np.fft.ifft(np.exp(-1j * _kinetic_spectrum(new, species) * t / HBAR) * np.fft.fft(amps))
    out = Wavefunction1D.from_array(new, amps, psi.N)
    if out.boundary_probability() > BOUNDARY_LIMIT:
        raise WindowTooSmall("expanded cloud reaches the window edge")
    return out


def free_expand(state: CompositeState, t, species: AtomSpecies = RB87_F2_MF2) -> CompositeState:
    """Release the trap: both branches expand freely (no interactions) for ``t``.

    Loop amplitudes and ``Phi`` are unchanged. Both branches end on the same
    enlarged grid.
    """
    if t < 0:
        raise ValueError("expansion time must be non-negative")
    if t == 0:
        return state
    g = state.grid
    need = max(_required_cells(state.phi0, t, species), _required_cells(state.phi1, t, species))
    n_new = 1 << int(np.ceil(np.log2(g.n + need)))
    p0 = expand_wavefunction(state.phi0, t, species, n_new)
    p1 = expand_wavefunction(state.phi1, t, species, n_new)
    return replace(state, phi0=p0, phi1=p1)


# ---------------------------------------------------------------------------
# time-of-flight densities


@dataclass(frozen=True)
class TofDensity:
    grid: Grid1D
    density: np.ndarray = field(repr=False)   # atoms / m
    expansion_time: float = 0.0
    conditioning: str = "none"
    p_outcome: float = 1.0

    def atom_number(self):
        return float(np.sum(self.density) * self.grid.dy)

    def first_moment(self):
        return float(np.sum(self.grid.y * self.density) / np.sum(self.density))

    def to_rows(self):
        y = self.grid.y / UM
        return np.column_stack([y, self.density * UM])

    def to_csv(self, path, append=False):
        """``y_um,density_per_um,conditioning,p_outcome`` rows."""
        mode = "a" if append else "w"
        with open(path, mode) as fh:
            if not append:
                fh.write("y_um,density_per_um,conditioning,p_outcome\n")
            for y, n in self.to_rows():
                fh.write(f"{y:.9g},{n:.9g},{self.conditioning},{self.p_outcome:.12g}\n")


def outcome_probabilities(state: CompositeState, basis="plus_minus"):
    """Loop measurement probabilities in ``computational`` or ``plus_minus``."""
    if state.disentangled:
        return (1.0, 0.0) if basis == "computational" else (0.5, 0.5)
    if basis == "computational":
        return abs(state.c0) ** 2, abs(state.c1) ** 2
    if basis != "plus_minus":
        raise ValueError(f"unknown basis {basis!r}")
    coh = np.real(np.conj(state.c0) * state.weight1 * _n_overlap(state, state.N))
    p_plus = 0.5 * (1 + 2 * coh)
    return float(p_plus), float(1 - p_plus)


def _branch_densities(state):
    a0, a1 = state.phi0.amplitudes, state.phi1.amplitudes
    cross = np.conj(a0) * a1 * _n_overlap(state, state.N - 1)
    return np.abs(a0) ** 2, np.abs(a1) ** 2, cross


def tof_density(state: CompositeState, conditioning="none", expansion_time=0.0) -> TofDensity:
    """Atomic density of ``state`` (already expanded), optionally post-selected.

    * ``none``: ``N (|c0|^2 |phi0|^2 + |c1|^2 |phi1|^2)``; the loop carries
      which-path information so there is no cross term.
    * ``loop0`` / ``loop1``: ``N |phi0|^2`` / ``N |phi1|^2``.
    * ``plus`` / ``minus``: loop projected on ``|+->``; the branch cross term
      reappears with sign ``+-``.

    Post-selected densities are renormalized to ``N`` atoms and the outcome
    probability is stored in ``p_outcome``.
    """
    if conditioning not in CONDITIONINGS:
        raise ValueError(f"unknown conditioning {conditioning!r}")
    N = state.N
    d0, d1, cross = _branch_densities(state)
    w0, w1 = state.c0, state.weight1

    if state.disentangled:
        # pure condensate superposition; the loop sits in |0>
        coh = np.real(np.conj(w0) * w1 * _n_overlap(state, N))
        norm = abs(w0) ** 2 + abs(w1) ** 2 + 2 * coh
        dens = N * (abs(w0) ** 2 * d0 + abs(w1) ** 2 * d1 + 2 * np.real(np.conj(w0) * w1 * cross)) / norm
        p = {"none": 1.0, "loop0": 1.0, "loop1": 0.0, "plus": 0.5, "minus": 0.5}[conditioning]
        if p < P_MIN:
            raise ZeroProbabilityBranch(f"outcome {conditioning} has probability {p:.3g}")
        return TofDensity(state.grid, dens, expansion_time, conditioning, p)

    if conditioning == "none":
        dens = N * (abs(w0) ** 2 * d0 + abs(w1) ** 2 * d1)
        p = 1.0
    elif conditioning in ("loop0", "loop1"):
        p = abs(w0) ** 2 if conditioning == "loop0" else abs(w1) ** 2
        if p < P_MIN:
            raise ZeroProbabilityBranch(f"outcome {conditioning} has probability {p:.3g}")
        dens = N * (d0 if conditioning == "loop0" else d1)
    else:
        sign = 1.0 if conditioning == "plus" else -1.0
        p_plus, p_minus = outcome_probabilities(state)
        p = p_plus if sign > 0 else p_minus
        if p < P_MIN:
            raise ZeroProbabilityBranch(f"outcome {conditioning} has probability {p:.3g}")
        dens = 0.5 * N * (abs(w0) ** 2 * d0 + abs(w1) ** 2 * d1
                          + sign * 2 * np.real(np.conj(w0) * w1 * cross)) / p
    return TofDensity(state.grid, np.asarray(dens, dtype=float), expansion_time, conditioning, float(p))


def cross_term_coefficients(tof: TofDensity, state: CompositeState):
    """Least-squares split of a density into branch and interference parts.

    Fits ``alpha |phi0|^2 + beta |phi1|^2 + gamma Re(X) + delta Im(X)`` with
    ``X = phi0* phi1`` and returns ``(gamma, delta)`` (atoms). Zero means the
    density carries no interference term.
    """
    a0, a1 = state.phi0.amplitudes, state.phi1.amplitudes
    X = np.conj(a0) * a1
    A = np.column_stack([np.abs(a0) ** 2, np.abs(a1) ** 2, X.real, X.imag])
    coef, *_ = np.linalg.lstsq(A, tof.density, rcond=None)
    return float(coef[2]), float(coef[3])


def density_shift(state: CompositeState, conditioning="plus"):
    """First-moment difference between a conditioned density and ``N |phi0|^2`` [um]."""
    n = tof_density(state, conditioning)
    ref = tof_density(state, "loop0") if not state.disentangled else None
    ref_mean = ref.first_moment() if ref is not None else state.phi0.mean()
    return (n.first_moment() - ref_mean) / UM


# ---------------------------------------------------------------------------
# fringe spacing


def fringe_spacing(sigma0, d, species: AtomSpecies = RB87_F2_MF2, t=10e-3):
    """Fringe period of two gaussians (width ``sigma0``, at ``+-d/2``) after ``t``.

    ``Lambda = 2 pi hbar (t^2 + (m sigma0^2 / hbar)^2) / (t m d)``; the
    gaussians are ``exp(-y^2 / (2 sigma0^2))``.
    """
    if not (t > 0 and d > 0):
        raise ValueError("t and d must be positive")
    m = species.mass
    return 2 * np.pi * HBAR * (t ** 2 + (m * sigma0 ** 2 / HBAR) ** 2) / (t * m * d)


def measured_fringe_period(plus: TofDensity, minus: TofDensity, rel_floor=1e-3):
    """Fringe period from zero crossings of the interference term.

    ``p+ n+ - p- n-`` is exactly the cross term, so its sign changes are
    half a period apart. Crossings are taken where the cloud envelope
    exceeds ``rel_floor`` of its peak and a straight line is fitted to their
    positions.
    """
    if plus.grid != minus.grid:
        raise MeshMismatch("densities live on different grids")
    y = plus.grid.y
    diff = plus.p_outcome * plus.density - minus.p_outcome * minus.density
    env = plus.p_outcome * plus.density + minus.p_outcome * minus.density
    mask = env > rel_floor * env.max()
    idx = np.nonzero(mask[:-1] & mask[1:] & (np.sign(diff[:-1]) * np.sign(diff[1:]) < 0))[0]
    if len(idx) < 3:
        raise ValueError("fewer than three fringe zero crossings in the cloud")
    y0, y1, f0, f1 = y[idx], y[idx + 1], diff[idx], diff[idx + 1]
    zc = y0 - f0 * (y1 - y0) / (f1 - f0)
    slope = np.polyfit(np.arange(len(zc)), zc, 1)[0]
    return float(2 * slope), len(zc)


def noon_fringe_spacing(spacing, N):
    """``Lambda / N`` for an N-atom path superposition.

    Seeing it needs ``Phi`` stable to better than :func:`phase_budget`
    from shot to shot.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    return spacing / N


def phase_budget(N):
    """Allowed shot-to-shot phase jitter ``pi / (2 N)`` [rad]."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return np.pi / (2 * N)


# ---------------------------------------------------------------------------
# disentangling and entanglement measures


def apply_cnot(state: CompositeState) -> CompositeState:
    """Map the |1> branch's loop state to |0>, leaving the condensate superposed.

    Afterwards the loop is in |0> and the condensate in
    ``c0 |N,phi0> + c1 e^{i Phi} |N,phi1>`` (renormalized). Applying it to an
    already-disentangled state does nothing.
    """
    if state.disentangled:
        return state
    if abs(state.c1) == 0 or abs(state.c0) == 0:
        return state
    return replace(state, disentangled=True)


def loop_density_matrix(state: CompositeState):
    if state.disentangled:
        return np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    w0, w1 = state.c0, state.weight1
    # <N,phi1|N,phi0> = conj(<phi0|phi1>)^N
    coh = w0 * np.conj(w1) * np.conj(_n_overlap(state, state.N))
    return np.array([[abs(w0) ** 2, coh], [np.conj(coh), abs(w1) ** 2]], dtype=complex)


def von_neumann_entropy(rho):
    lam = np.linalg.eigvalsh(rho)
    lam = lam[lam > 1e-300]
    return max(float(-np.sum(lam * np.log2(lam))), 0.0) + 0.0


def entanglement_entropy(state: CompositeState) -> float:
    """Entropy of the loop's reduced density matrix [bits]."""
    return von_neumann_entropy(loop_density_matrix(state))


@dataclass(frozen=True)
class DistinguishabilityReport:
    amplitude_mG: float
    coefficient_mG: float            # mu = coefficient * N^(2/5)
    max_N: int
    verdicts: dict                   # N -> "PASS" / "FAIL"

    def to_dict(self):
        return {"amplitude_mG": self.amplitude_mG, "mu_coefficient_mG": self.coefficient_mG,
                "max_distinguishable_N": self.max_N,
                "verdicts": {str(k): v for k, v in self.verdicts.items()}}


def perturbation_distinguishability_check(fit, species: AtomSpecies = RB87_F2_MF2,
                                          frequencies=None, N=(1,), coefficient=None):
    """Compare the perturbation amplitude with the Thomas-Fermi chemical potential.

    ``fit`` is an :class:`AxialFitParams` or an amplitude in mG. The
    chemical potential is ``coefficient * N^(2/5)`` mG, with the coefficient
    from :func:`thomas_fermi_mu` at ``frequencies`` (rad/s) unless given.
    """
    amp = fit.amplitude() if isinstance(fit, AxialFitParams) else float(fit)
    if coefficient is None:
        if frequencies is None:
            raise ValueError("need trap frequencies or an explicit coefficient")
        coefficient = thomas_fermi_mu(species, frequencies, 1).mG
    if coefficient <= 0:
        max_n = np.iinfo(np.int64).max if amp > 0 else 0
    else:
        max_n = int(np.floor((amp / coefficient) ** 2.5)) if amp > 0 else 0
    Ns = [N] if np.ndim(N) == 0 else list(N)
    verdicts = {int(n): ("PASS" if amp > coefficient * n ** 0.4 else "FAIL") for n in Ns}
    return DistinguishabilityReport(float(amp), float(coefficient), max_n, verdicts)


def entanglement_report(state: CompositeState, max_distinguishable_N=None, config_hash=None):
    """Summary dict ``{overlap_abs, contrast_N, entropy_bits, phi_rad, max_distinguishable_N}``."""
    ov = branch_overlap(state)
    out = {"overlap_abs": abs(ov.overlap), "contrast_N": ov.contrast_N,
           "entropy_bits": entanglement_entropy(state), "phi_rad": float(state.Phi),
           "max_distinguishable_N": max_distinguishable_N}
    if config_hash is not None:
        out["config_hash"] = config_hash
    return out


def write_report(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# repeated measurements


def sample_outcomes(state: CompositeState, trials, basis="plus_minus", seed=0):
    """Simulated loop readouts; trial ``i`` uses its own child seed of ``seed``.

    Returns an int array of 0 (``0`` or ``+``) and 1 (``1`` or ``-``).
    """
    p0, _ = outcome_probabilities(state, basis)
    children = np.random.SeedSequence(seed).spawn(int(trials))
    u = np.array([np.random.default_rng(c).random() for c in children])
    return (u >= p0).astype(int)
