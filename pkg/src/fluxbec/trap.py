"""Magnetic trap characterization.

Trap minimum, trap frequencies from a Richardson-extrapolated finite
difference Hessian, axial intensity profiles, the loop-induced perturbation
amplitude, and the least-squares fit of the axial model

    B(y) = B0 + k0 y**2 + (2 a y / sigma0**2) exp(-y**2 / sigma0**2)

Lab units for profiles and fits: um and mG.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares, minimize

from .constants import A_SCATTER_RB87, MASS_RB87, MILLIGAUSS, MU_B, UM, to_mG, to_um
from .errors import (DegenerateProfile, FitDidNotConverge, MinimizationDidNotConverge,
                     NegativeCurvature, NoLocalExtrema, SaddleDetected)
from .magnetostatics import CircularLoop, SourceAssembly, field_magnitude, vec3

GRAD_TOL = 1e-8          # |grad B| at the minimum [T/m] (1e-4 G/m)
MAX_ITER = 10_000
AMPLITUDE_FACTOR = 2 * np.sqrt(2) * np.exp(-0.5)


@dataclass(frozen=True)
class AtomSpecies:
    mass: float
    mF_gF: float
    scattering_length: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if self.scattering_length < 0:
            raise ValueError("scattering length must be non-negative")

    @property
    def moment(self):
        """Magnetic moment ``mF gF muB`` coupling |B| to potential energy [J/T]."""
        return self.mF_gF * MU_B


RB87_F2_MF2 = AtomSpecies(MASS_RB87, 1.0, A_SCATTER_RB87)


@dataclass(frozen=True)
class TrapCharacterization:
    minimum: np.ndarray
    bottom_field: float
    frequencies: Optional[tuple] = None      # (wx, wy, wz) [rad/s]
    axes: Optional[np.ndarray] = None        # columns: eigen-axes matched to x, y, z
    hessian_condition: Optional[float] = None

    @property
    def axial_axis(self):
        """Weak (axial) eigen-axis projected onto the horizontal plane, +y oriented."""
        if self.axes is None:
            return np.array([0.0, 1.0, 0.0])
        v = self.axes[:, 1].copy()
        v[2] = 0.0
        v /= np.linalg.norm(v)
        return v if v[1] >= 0 else -v

    @property
    def frequencies_hz(self):
        return tuple(w / (2 * np.pi) for w in self.frequencies)


def potential(assembly, species: AtomSpecies, p):
    """Zeeman potential ``mF gF muB |B(p)|`` in joule."""
    return species.moment * field_magnitude(assembly, p)


# ---------------------------------------------------------------------------
# minimum and curvature


def _fd_gradient(f, x, h):
    g = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _fd_hessian(f, x, h):
    H = np.empty((3, 3))
    f0 = f(x)
    E = np.eye(3) * h
    for i in range(3):
        H[i, i] = (f(x + E[i]) - 2 * f0 + f(x - E[i])) / h ** 2
        for j in range(i + 1, 3):
            H[i, j] = H[j, i] = (f(x + E[i] + E[j]) - f(x + E[i] - E[j])
                                 - f(x - E[i] + E[j]) + f(x - E[i] - E[j])) / (4 * h * h)
    return H


def _richardson_hessian(f, x, h):
    return (4 * _fd_hessian(f, x, h / 2) - _fd_hessian(f, x, h)) / 3


def find_minimum(assembly, species: AtomSpecies, guess, grad_tol=GRAD_TOL,
                 max_iter=MAX_ITER, simplex_step=5.0) -> TrapCharacterization:
    """Locate the local minimum of |B| near ``guess``.

    Nelder-Mead (in um, restarted once from its own result) followed by a
    Newton polish on finite-difference derivatives. ``simplex_step`` is the
    initial simplex size in um; shrink it for warm starts.
    """
    if species.mF_gF <= 0:
        raise ValueError("only weak-field seekers (mF gF > 0) are trapped at field minima")
    guess = vec3(guess)

    def bmag(x):
        return float(field_magnitude(assembly, x))

    def scaled(u):
        return bmag(guess + u * UM) / MILLIGAUSS

    u = np.zeros(3)
    nit = 0
    for _ in range(2):
        res = minimize(scaled, u, method="Nelder-Mead",
                       options=dict(xatol=1e-3, fatol=1e-9, maxiter=max_iter,
                                    maxfev=2 * max_iter, initial_simplex=u + simplex_step * np.vstack(
                                        [np.zeros(3), np.eye(3)])))
        nit += res.nit
        u = res.x
        if nit > max_iter:
            raise MinimizationDidNotConverge(f"simplex search exceeded {max_iter} iterations")
    x = guess + u * UM

    for _ in range(50):
        g = _fd_gradient(bmag, x, 1e-9)
        if np.linalg.norm(g) < grad_tol:
            break
        H = _fd_hessian(bmag, x, 1e-7)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise MinimizationDidNotConverge("singular Hessian during Newton polish") from exc
        if np.linalg.norm(step) > 1e-6:
            step *= 1e-6 / np.linalg.norm(step)
        x = x - step
    else:
        raise MinimizationDidNotConverge(
            f"gradient {np.linalg.norm(g):.3g} T/m above tolerance {grad_tol}")
    if np.linalg.norm(x - guess) > 1e-3:
        raise MinimizationDidNotConverge("minimum wandered more than 1 mm from the guess")

    H = _fd_hessian(bmag, x, 1e-6)
    if np.min(np.linalg.eigvalsh(H)) < 0:
        raise SaddleDetected(f"stationary point at {x} is not a minimum")
    return TrapCharacterization(minimum=x, bottom_field=bmag(x))


def trap_frequencies(assembly, species: AtomSpecies, minimum, step=1e-6):
    """Harmonic frequencies at ``minimum`` from the Hessian of the potential.

    Returns ``(omegas, axes, condition)`` where ``omegas`` are ordered as
    (x, y, z) by matching each eigen-axis to the lab axis it is closest to.
    """
    x0 = vec3(minimum)

    def V(x):
        return float(potential(assembly, species, x))

    H = _richardson_hessian(V, x0, step)
    H = 0.5 * (H + H.T)
    evals, evecs = np.linalg.eigh(H)
    if np.any(evals < 0):
        raise NegativeCurvature(f"negative potential curvature {evals.min():.3g} J/m^2")
    order = [None, None, None]
    remaining = list(range(3))
    # greedy assignment: most aligned eigenvector first
    for _ in range(3):
        best = max(((abs(evecs[lab, k]), lab, k) for k in remaining for lab in range(3)
                    if order[lab] is None))
        _, lab, k = best
        order[lab] = k
        remaining.remove(k)
    evals = evals[order]
    axes = evecs[:, order]
    omegas = tuple(float(np.sqrt(ev / species.mass)) for ev in evals)
    cond = float(evals.max() / evals.min()) if evals.min() > 0 else np.inf
    return omegas, axes, cond


def characterize(assembly, species: AtomSpecies, guess) -> TrapCharacterization:
    """Minimum, bottom field and frequencies in one call."""
    tc = find_minimum(assembly, species, guess)
    omegas, axes, cond = trap_frequencies(assembly, species, tc.minimum)
    return TrapCharacterization(tc.minimum, tc.bottom_field, omegas, axes, cond)


# ---------------------------------------------------------------------------
# axial profiles


@dataclass(frozen=True)
class AxialProfile:
    y: np.ndarray           # [m], along the axial axis through the reference minimum
    intensity: np.ndarray   # [T]
    branch: str = "none"

    def __post_init__(self):
        if self.y.shape != self.intensity.shape or self.y.ndim != 1:
            raise ValueError("y and intensity must be 1-D arrays of equal length")
        if self.y.size < 101:
            raise ValueError("profile needs at least 101 samples")
        if np.any(np.diff(self.y) <= 0):
            raise ValueError("profile y must be strictly increasing")

    @property
    def y_um(self):
        return to_um(self.y)

    @property
    def intensity_mG(self):
        return to_mG(self.intensity)

    def minus(self, baseline: "AxialProfile") -> "AxialProfile":
        if not np.array_equal(self.y, baseline.y):
            raise ValueError("profiles sampled on different y")
        return AxialProfile(self.y, self.intensity - baseline.intensity, self.branch)

    def mirrored(self) -> "AxialProfile":
        return AxialProfile(-self.y[::-1], self.intensity[::-1], self.branch)


def loop_branch(assembly) -> str:
    loops = [s for s in assembly if isinstance(s, CircularLoop) and s.current != 0]
    if not loops:
        return "none"
    circulation = sum(s.current * s.normal[2] for s in loops)
    if circulation == 0:
        return "none"
    # clockwise when viewed from above (+z)
    return "clockwise" if circulation < 0 else "anticlockwise"


def refine_minimum(bare, minimum, axis, half_width=50e-6, samples=1001):
    """Minimum moved along ``axis`` to the vertex of the sampled profile."""
    y = np.linspace(-half_width, half_width, int(samples))
    return _refine_center(bare, np.asarray(minimum, float), np.asarray(axis, float), y)


def _refine_center(bare, minimum, axis, y):
    # vertex of a quartic fitted to the bare profile; far less noisy than
    # locating the minimum from a finite-difference gradient
    b = field_magnitude(bare, minimum + np.outer(y, axis))
    half = y[-1]
    c = np.polynomial.polynomial.polyfit(y / half, b, 4)
    d1 = np.polynomial.polynomial.polyder(c)
    d2 = np.polynomial.polynomial.polyder(d1)
    u = 0.0
    for _ in range(5):
        u -= np.polynomial.polynomial.polyval(u, d1) / np.polynomial.polynomial.polyval(u, d2)
    return minimum + u * half * axis


def axial_profile(assembly, species: AtomSpecies, window=100e-6, samples=1001,
                  reference: Optional[TrapCharacterization] = None, guess=None,
                  refine=True) -> AxialProfile:
    """|B| along the axial axis through the unperturbed trap minimum.

    ``reference`` is the characterization of the trap without loop currents;
    it is computed from ``guess`` when not supplied. ``window`` is the full
    sampled length, centred on the minimum. With ``refine`` the centre is
    moved along the axis to the vertex of the bare profile, which makes the
    profile of the bare trap even in ``y`` to rounding level.
    """
    bare = SourceAssembly(tuple(s for s in assembly if not isinstance(s, CircularLoop)))
    if reference is None or reference.axes is None:
        if guess is None and reference is None:
            raise ValueError("axial_profile needs a reference trap or a guess")
        reference = characterize(bare, species, guess if guess is not None else reference.minimum)
    loops = assembly.loops() if hasattr(assembly, "loops") else []
    if loops and window < 2 * max(lp.radius for lp in loops):
        raise ValueError("window must cover at least the loop diameter")
    y = np.linspace(-window / 2, window / 2, int(samples))
    axis = reference.axial_axis
    center = _refine_center(bare, reference.minimum, axis, y) if refine else reference.minimum
    pts = center + np.outer(y, axis)
    return AxialProfile(y, field_magnitude(assembly, pts), loop_branch(assembly))


def _local_extrema(y, b):
    """Interior local maxima and minima, refined by a parabola through 3 samples."""
    d = np.diff(b)
    s = np.sign(d)
    # carry signs across exact plateaus
    for i in range(1, s.size):
        if s[i] == 0:
            s[i] = s[i - 1]
    maxima, minima = [], []
    for i in np.nonzero(s[1:] * s[:-1] < 0)[0] + 1:
        y0, y1, y2 = y[i - 1:i + 2]
        b0, b1, b2 = b[i - 1:i + 2]
        h = y1 - y0
        denom = b0 - 2 * b1 + b2
        shift = 0.5 * h * (b0 - b2) / denom if denom != 0 else 0.0
        bv = b1 - 0.25 * (b0 - b2) * shift / h if denom != 0 else b1
        (maxima if s[i - 1] > 0 else minima).append((y1 + shift, bv))
    return maxima, minima


def perturbation_amplitude(profile: AxialProfile, baseline: Optional[AxialProfile] = None) -> float:
    """Largest local maximum minus smallest local minimum, in mG.

    With ``baseline`` the amplitude is taken of the loop-induced part
    ``profile - baseline`` instead; that difference is defined at any loop
    distance, also where the full profile has lost its local maximum.
    """
    if baseline is not None:
        diff = profile.minus(baseline).intensity_mG
        return float(diff.max() - diff.min())
    maxima, minima = _local_extrema(profile.y_um, profile.intensity_mG)
    if not maxima or not minima:
        raise NoLocalExtrema("profile has no interior local maximum/minimum pair")
    return float(max(b for _, b in maxima) - min(b for _, b in minima))


# ---------------------------------------------------------------------------
# axial model fit


@dataclass(frozen=True)
class AxialFitParams:
    B0: float       # mG
    k0: float       # mG / um^2
    sigma0: float   # um
    a: float        # mG um
    residual_rms: float = 0.0   # mG

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be non-negative")

    def values(self):
        return np.array([self.B0, self.k0, self.sigma0, self.a])

    def amplitude(self) -> float:
        """Peak-to-trough of the perturbation term alone, ``2 sqrt(2) e^-1/2 |a| / sigma0``."""
        return AMPLITUDE_FACTOR * abs(self.a) / self.sigma0

    def evaluate(self, y_um):
        return axial_model(np.asarray(y_um, dtype=float), self.B0, self.k0, self.sigma0, self.a)

    def to_dict(self):
        return {"B0_mG": self.B0, "k0_mG_per_um2": self.k0, "sigma0_um": self.sigma0,
                "a_mG_um": self.a, "residual_rms_mG": self.residual_rms}

    def axial_frequency(self, species: AtomSpecies) -> float:
        """Angular frequency of the ``k0 y^2`` term [rad/s]."""
        k_si = self.k0 * MILLIGAUSS / UM ** 2
        return float(np.sqrt(2 * k_si * species.moment / species.mass))


PAPER_FIT = AxialFitParams(B0=999.85, k0=0.00031, sigma0=10.13, a=-32.0)


def axial_model(y, B0, k0, sigma0, a):
    return B0 + k0 * y ** 2 + 2 * a * y / sigma0 ** 2 * np.exp(-(y / sigma0) ** 2)


def profile_from_params(params: AxialFitParams, y_um, branch="none") -> AxialProfile:
    y_um = np.asarray(y_um, dtype=float)
    return AxialProfile(y_um * UM, params.evaluate(y_um) * MILLIGAUSS, branch)


def _initial_guess(y, b, sigma_guess):
    B0 = b.min()
    ymax = max(abs(y[0]), abs(y[-1]))
    k0 = max((0.5 * (b[0] + b[-1]) - B0) / ymax ** 2, 0.0)
    detr = b - B0 - k0 * y ** 2
    pt = detr.max() - detr.min()
    sign = 1.0 if y[np.argmax(detr)] > y[np.argmin(detr)] else -1.0
    a = sign * pt * sigma_guess / AMPLITUDE_FACTOR
    return np.array([B0, k0, sigma_guess, a])


def fit_axial_model(profile: AxialProfile, sigma_guess=10.0, noise_floor=1e-9) -> AxialFitParams:
    """Levenberg-Marquardt fit of the axial model to a profile (um / mG units).

    ``sigma_guess`` (um) seeds the width; the default is twice the 5 um loop
    radius.
    """
    y = profile.y_um
    b = profile.intensity_mG
    if np.std(b) < noise_floor:
        raise DegenerateProfile("profile variance below the noise floor")

    p0 = _initial_guess(y, b, sigma_guess)

    def resid(p):
        return axial_model(y, *p) - b

    def jac(p):
        B0, k0, s, a = p
        e = np.exp(-(y / s) ** 2)
        d_a = 2 * y / s ** 2 * e
        d_s = 2 * a * y * e * (-2 / s ** 3 + 2 * y ** 2 / s ** 5)
        return np.column_stack([np.ones_like(y), y ** 2, d_s, d_a])

    res = least_squares(resid, p0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, x_scale="jac", max_nfev=20000)
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitDidNotConverge(res.message)
    B0, k0, s, a = res.x
    s = abs(s)
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    return AxialFitParams(float(B0), float(k0), float(s), float(a), rms)


def mu_equivalent_field(energy, species: AtomSpecies):
    """Field (T) whose Zeeman energy equals ``energy``."""
    if species.moment == 0:
        warnings.warn("species has no magnetic moment", RuntimeWarning)
        return np.inf
    return energy / species.moment
