from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxbec.chip import ChipSetup, calibrate_wire_radius, profiles, solve_trap, sweep_distance
from fluxbec.constants import GAUSS, MILLIGAUSS, MU0, MU_B, UM
from fluxbec.errors import DegenerateProfile, NoLocalExtrema, SaddleDetected
from fluxbec.magnetostatics import SourceAssembly, UniformBias, total_field
from fluxbec.trap import (AMPLITUDE_FACTOR, PAPER_FIT, RB87_F2_MF2, AtomSpecies, AxialFitParams,
                          AxialProfile, axial_profile, find_minimum, fit_axial_model,
                          perturbation_amplitude, potential, profile_from_params,
                          trap_frequencies)


class QuadraticField:
    """|B| = B_t + sum c_i (x_i - r0_i)^2, pointing along z (synthetic source)."""

    current = 0.0

    def __init__(self, r0, curv, bt=1e-4):
        self.r0 = np.asarray(r0, float)
        self.curv = np.asarray(curv, float)
        self.bt = bt

    def field(self, p):
        p = np.asarray(p, float)
        out = np.zeros_like(p)
        out[..., 2] = self.bt + np.sum(self.curv * (p - self.r0) ** 2, axis=-1)
        return out


def test_potential_values():
    asm = SourceAssembly((UniformBias([0, GAUSS, 0]),))
    assert potential(asm, RB87_F2_MF2, [0, 0, 0]) == pytest.approx(9.274e-28, rel=1e-4)
    assert potential(asm, RB87_F2_MF2, [0, 0, 0]) == pytest.approx(MU_B * GAUSS, rel=1e-15)
    zero = SourceAssembly((UniformBias([0, 0, 0]),))
    assert potential(zero, RB87_F2_MF2, [1, 2, 3]) == 0.0
    assert potential(asm.scaled(1.0) + (UniformBias([0, GAUSS, 0]),), RB87_F2_MF2, [0, 0, 0]) == \
        pytest.approx(2 * MU_B * GAUSS, rel=1e-15)


def test_species_validation():
    with pytest.raises(ValueError):
        AtomSpecies(-1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        AtomSpecies(1e-25, 1.0, -1e-9)
    assert RB87_F2_MF2.moment == MU_B


# --- minimum and frequencies ------------------------------------------------------

R0 = np.array([12e-6, -7e-6, 480e-6])
CURV = np.array([180.0, 30.0, 175.0])      # T/m^2


def test_synthetic_minimum_exact():
    asm = SourceAssembly((QuadraticField(R0, CURV),))
    tc = find_minimum(asm, RB87_F2_MF2, R0 + [3e-6, -2e-6, 4e-6])
    assert np.linalg.norm(tc.minimum - R0) < 1e-9
    assert tc.bottom_field == pytest.approx(1e-4, rel=1e-12)


def test_displaced_guess_converges_to_grid_scan_minimum():
    asm = SourceAssembly((QuadraticField(R0, CURV),))
    guess = R0 + np.array([50e-6, 0, 0])
    tc = find_minimum(asm, RB87_F2_MF2, guess)
    # dense scan oracle at 0.5 um pitch
    ax = [np.linspace(c - 60e-6, c + 60e-6, 241) for c in R0]
    X, Y, Z = np.meshgrid(*ax, indexing="ij")
    B = np.linalg.norm(total_field(asm, np.stack([X, Y, Z], -1)), axis=-1)
    i = np.unravel_index(np.argmin(B), B.shape)
    scan = np.array([X[i], Y[i], Z[i]])
    assert np.linalg.norm(tc.minimum - scan) < 0.5e-6
    assert np.linalg.norm(tc.minimum - R0) < 1e-9


def test_saddle_detected():
    class Saddle(QuadraticField):
        def field(self, p):
            p = np.asarray(p, float)
            out = np.zeros_like(p)
            d = p - self.r0
            out[..., 2] = self.bt + 100 * d[..., 0] ** 2 + 100 * d[..., 1] ** 2 - 1e6 * d[..., 2] ** 4
            return out
    # |B| has only a saddle-like flat direction; the minimizer must not report success silently
    asm = SourceAssembly((Saddle(R0, CURV),))
    with pytest.raises(Exception):
        find_minimum(asm, RB87_F2_MF2, R0, max_iter=200)


def test_synthetic_frequencies_exact():
    asm = SourceAssembly((QuadraticField(R0, CURV),))
    omegas, axes, cond = trap_frequencies(asm, RB87_F2_MF2, R0)
    expected = np.sqrt(2 * RB87_F2_MF2.moment * CURV / RB87_F2_MF2.mass)
    assert np.allclose(omegas, expected, rtol=1e-6)
    assert np.allclose(np.abs(axes), np.eye(3), atol=1e-6)
    assert cond == pytest.approx(180 / 30, rel=1e-6)
    # a constant offset in V (uniform |B| shift) leaves the curvatures alone,
    # up to the rounding floor of the second difference
    shifted = SourceAssembly((QuadraticField(R0, CURV, bt=3e-4),))
    assert np.allclose(trap_frequencies(shifted, RB87_F2_MF2, R0)[0], omegas, rtol=1e-7)


def test_chip_trap_bottom_height_and_frequencies(solved):
    tc = solved.trap
    assert tc.bottom_field == pytest.approx(GAUSS, rel=1e-10)
    wire_oracle = MU0 * 5.0 / (2 * np.pi * 20 * GAUSS)      # 500 um
    assert tc.minimum[2] == pytest.approx(wire_oracle, rel=0.05)
    fx, fy, fz = tc.frequencies_hz
    assert fy == pytest.approx(10.0, rel=1e-3)
    assert fx == pytest.approx(540.0, rel=0.15) and fz == pytest.approx(540.0, rel=0.15)
    # axial axis lies in the horizontal plane, close to y
    ax = tc.axial_axis
    assert ax[2] == 0.0 and ax[1] > 0.99


def test_frequencies_richardson_stable(solved):
    w1, _, _ = trap_frequencies(solved.assembly, RB87_F2_MF2, solved.trap.minimum, step=1e-6)
    w2, _, _ = trap_frequencies(solved.assembly, RB87_F2_MF2, solved.trap.minimum, step=0.5e-6)
    assert np.allclose(w1, w2, rtol=1e-2)


def test_minimum_gradient_tolerance(solved):
    # |grad B| at the minimum below 1e-4 G/m
    f = lambda x: np.linalg.norm(total_field(solved.assembly, x))
    x = solved.trap.minimum

    def cd(h):
        return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(3)])
    # Richardson: the cubic term of |B| near the quadrupole is large
    g = (4 * cd(2e-9) - cd(4e-9)) / 3
    assert np.linalg.norm(g) < 1e-8


# --- axial profiles -------------------------------------------------------------------

def test_bare_profile_symmetric(half_profiles):
    bare, _, _ = half_profiles
    b = bare.intensity
    assert np.max(np.abs(b - b[::-1])) / b.max() < 1e-12


def test_branch_mirror_identity(half_profiles):
    _, cw, acw = half_profiles
    assert cw.branch == "clockwise" and acw.branch == "anticlockwise"
    diff = np.abs(acw.intensity - cw.mirrored().intensity)
    assert diff.max() / acw.intensity.max() < 1e-12


def test_perturbation_part_is_odd(half_profiles):
    bare, cw, _ = half_profiles
    pert = cw.minus(bare).intensity_mG
    amp = pert.max() - pert.min()
    assert np.max(np.abs(pert + pert[::-1])) < 0.01 * amp


def test_quarter_quantum_half_perturbation(solved, half_profiles):
    bare, cw, _ = half_profiles
    _, quarter = profiles(solved, 100e-6, 1001, 0.25, "clockwise")
    p_half = cw.minus(bare).intensity_mG
    p_quarter = quarter.minus(bare).intensity_mG
    amp = p_half.max() - p_half.min()
    assert np.max(np.abs(p_quarter - 0.5 * p_half)) < 0.05 * amp


def test_amplitude_half_quantum(half_profiles):
    _, cw, acw = half_profiles
    a = perturbation_amplitude(cw)
    assert a == pytest.approx(5.5, rel=0.10)
    assert perturbation_amplitude(acw) == pytest.approx(a, rel=1e-9)


def test_zero_current_has_no_extrema(solved):
    _, flat = profiles(solved, 100e-6, 1001, 0.0, "clockwise")
    with pytest.raises(NoLocalExtrema):
        perturbation_amplitude(flat)


def test_profile_needs_window_and_samples(solved, setup):
    asm = solved.with_loop(setup.loop_current())
    with pytest.raises(ValueError):
        axial_profile(asm, RB87_F2_MF2, 8e-6, 1001, reference=solved.trap)
    with pytest.raises(ValueError):
        axial_profile(asm, RB87_F2_MF2, 100e-6, 50, reference=solved.trap)


def test_offset_invariance(solved, setup, cw_fit):
    # extra bias along the bottom field shifts B0, the loop term barely moves
    bhat = total_field(solved.assembly, solved.trap.minimum)
    bhat = bhat / np.linalg.norm(bhat)
    extra = UniformBias(0.1 * GAUSS * bhat)
    asm = solved.with_loop(setup.loop_current()) + (extra,)
    prof = axial_profile(asm, RB87_F2_MF2, 100e-6, 1001, reference=solved.trap)
    fit = fit_axial_model(prof)
    assert fit.B0 == pytest.approx(cw_fit.B0 + 100.0, rel=1e-3)
    assert fit.a == pytest.approx(cw_fit.a, rel=0.01)
    assert fit.sigma0 == pytest.approx(cw_fit.sigma0, rel=0.01)


# --- fit -------------------------------------------------------------------------------

def test_fit_against_quoted_parameters(cw_fit, acw_fit):
    for name in ("B0", "k0", "sigma0", "a"):
        assert getattr(cw_fit, name) == pytest.approx(getattr(PAPER_FIT, name), rel=0.10), name
    assert cw_fit.a < 0 < acw_fit.a
    assert acw_fit.a == pytest.approx(-cw_fit.a, rel=1e-6)
    for name in ("B0", "k0", "sigma0"):
        assert getattr(acw_fit, name) == pytest.approx(getattr(cw_fit, name), rel=1e-6)


def test_fit_round_trip_synthetic():
    truth = AxialFitParams(999.85, 0.00031, 10.13, -32.0)
    prof = profile_from_params(truth, np.linspace(-50, 50, 1001))
    fit = fit_axial_model(prof)
    assert np.allclose(fit.values(), truth.values(), rtol=1e-8)
    assert fit.residual_rms < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(500, 1500), st.floats(1e-4, 1e-3), st.floats(6, 14),
       st.floats(10, 60), st.booleans())
def test_fit_round_trip_property(B0, k0, sigma0, a, flip):
    truth = AxialFitParams(B0, k0, sigma0, -a if flip else a)
    fit = fit_axial_model(profile_from_params(truth, np.linspace(-50, 50, 801)))
    assert np.allclose(fit.values(), truth.values(), rtol=1e-8)


def test_fit_degenerate_profile():
    flat = AxialProfile(np.linspace(-50e-6, 50e-6, 201), np.full(201, 1e-4))
    with pytest.raises(DegenerateProfile):
        fit_axial_model(flat)


def test_amplitude_closed_form_vs_model_extrema():
    # perturbation term alone: analytic extremum at y = +-sigma0/sqrt(2)
    for p in (PAPER_FIT, AxialFitParams(1000, 0.0, 7.3, 55.0)):
        pure = replace(p, k0=0.0)
        prof = profile_from_params(pure, np.linspace(-40, 40, 8001))
        y = np.linspace(-40, 40, 8001)
        b = pure.evaluate(y)
        i, j = np.argmax(b), np.argmin(b)
        from scipy.optimize import minimize_scalar
        top = -minimize_scalar(lambda u: -pure.evaluate(u), bracket=(y[i] - 0.1, y[i], y[i] + 0.1),
                               tol=1e-12).fun
        bot = minimize_scalar(pure.evaluate, bracket=(y[j] - 0.1, y[j], y[j] + 0.1), tol=1e-12).fun
        assert top - bot == pytest.approx(pure.amplitude(), rel=1e-9)
        assert perturbation_amplitude(prof) == pytest.approx(pure.amplitude(), rel=1e-6)
    # with the harmonic term the local extrema move by well under 0.5 %
    full = profile_from_params(PAPER_FIT, np.linspace(-50, 50, 8001))
    assert perturbation_amplitude(full) == pytest.approx(PAPER_FIT.amplitude(), rel=5e-3)
    assert PAPER_FIT.amplitude() == pytest.approx(5.42, rel=5e-3)
    assert AMPLITUDE_FACTOR == pytest.approx(2 * np.sqrt(2) * np.exp(-0.5), rel=1e-15)


def test_axial_frequency_from_fit(cw_fit, solved):
    # k0 y^2 reproduces the axial trap frequency of the bare trap to a few percent
    w = cw_fit.axial_frequency(RB87_F2_MF2)
    assert w / (2 * np.pi) == pytest.approx(solved.trap.frequencies_hz[1], rel=0.05)


# --- distance sweep ---------------------------------------------------------------

def test_sweep_monotone_and_decay(sweep_run):
    pts, _ = sweep_run
    amps = np.array([p.amplitude_mG for p in pts])
    assert all(p.error is None for p in pts)
    assert np.all(np.diff(amps) < 0)
    by_d = {round(p.d / UM): p.amplitude_mG for p in pts}
    assert by_d[20] / by_d[10] < 0.2


def test_sweep_d10_matches_trap_amplitude(sweep_run, half_profiles):
    pts, _ = sweep_run
    p10 = next(p for p in pts if round(p.d / UM) == 10)
    assert p10.extremum_amplitude_mG == pytest.approx(perturbation_amplitude(half_profiles[1]),
                                                      rel=1e-6)


def test_sweep_far_field(setup):
    (p,) = sweep_distance(setup, [100 * UM])
    assert p.error is None and p.amplitude_mG < 0.05


def test_sweep_records_errors(setup):
    (p,) = sweep_distance(setup, [0.5 * UM])
    assert p.error is not None and np.isnan(p.amplitude_mG)


@pytest.mark.slow
def test_wire_radius_calibration(setup, solved):
    rep = calibrate_wire_radius(setup, solved=solved)
    assert rep["perturbation_amplitude_mG"] == pytest.approx(5.5, abs=1e-6)
    assert rep["wire_radius_um"] == pytest.approx(0.26089, rel=1e-4)
    assert set(rep) == {"wire_radius_um", "inductance_H", "current_A", "perturbation_amplitude_mG"}
