import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxbec.constants import HBAR, MASS_RB87, UM
from fluxbec.errors import MeshMismatch, ZeroProbabilityBranch
from fluxbec.entanglement import (CompositeState, apply_cnot, branch_overlap,
                                  cross_term_coefficients, density_shift, entanglement_entropy,
                                  entanglement_report, expand_wavefunction, free_expand,
                                  fringe_spacing, loop_density_matrix, measured_fringe_period,
                                  noon_fringe_spacing, outcome_probabilities,
                                  perturbation_distinguishability_check, phase_budget,
                                  sample_outcomes, tof_density, von_neumann_entropy, write_report)
from fluxbec.quantum_dynamics import Grid1D, Wavefunction1D
from fluxbec.trap import PAPER_FIT, RB87_F2_MF2

SP = RB87_F2_MF2


@pytest.fixture(scope="module")
def grid():
    return Grid1D.centered(32 * UM, 512)


def pair(grid, sigma=1 * UM, d=10 * UM):
    return (Wavefunction1D.gaussian(grid, sigma, -d / 2), Wavefunction1D.gaussian(grid, sigma, d / 2))


def binary_entropy(p):
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


# --- state ------------------------------------------------------------------------

def test_state_validation(grid):
    a, b = pair(grid)
    with pytest.raises(ValueError):
        CompositeState(1.0, 1.0, a, b)
    with pytest.raises(MeshMismatch):
        CompositeState(1.0, 0.0, a, Wavefunction1D.gaussian(Grid1D.centered(30 * UM, 512), UM))
    with pytest.raises(ValueError):
        CompositeState.symmetric(a, b, N=0)


def test_branch_overlap_examples(grid):
    a, b = pair(grid, 1 * UM, 2 * UM)
    assert branch_overlap(CompositeState.symmetric(a, b)).overlap == pytest.approx(np.exp(-1), rel=1e-12)
    assert branch_overlap(CompositeState.symmetric(a, a)).overlap == pytest.approx(1.0, abs=1e-14)
    y = grid.y
    left = Wavefunction1D.from_array(grid, (y < 0).astype(float))
    right = Wavefunction1D.from_array(grid, (y > 0).astype(float))
    assert branch_overlap(CompositeState.symmetric(left, right)).overlap == 0.0
    st_ = CompositeState.symmetric(a, b, N=10)
    assert branch_overlap(st_).contrast_N == pytest.approx(np.exp(-10), rel=1e-11)


# --- free expansion -----------------------------------------------------------------

def test_expansion_identity_at_zero(grid):
    a, b = pair(grid)
    s = CompositeState.symmetric(a, b, N=3, Phi=0.4)
    assert free_expand(s, 0.0) is s
    e = expand_wavefunction(a, 0.0, SP, n_new=512)
    assert np.array_equal(e.amplitudes, a.amplitudes)
    with pytest.raises(ValueError):
        free_expand(s, -1e-3)


@pytest.mark.parametrize("t", [1e-3, 5e-3, 10e-3])
def test_expansion_width_law(grid, t):
    s0 = 1 * UM
    psi = Wavefunction1D.gaussian(grid, s0, 3 * UM)
    out = expand_wavefunction(psi, t, SP)
    ratio = np.sqrt(1 + (HBAR * t / (MASS_RB87 * s0 ** 2)) ** 2)
    assert out.width() / psi.width() == pytest.approx(ratio, rel=1e-6)
    assert out.mean() == pytest.approx(3 * UM, abs=1e-12)
    assert out.grid.dy == pytest.approx(grid.dy, rel=1e-14)


def test_two_source_fringes_match_formula(grid):
    a, b = pair(grid)
    s = free_expand(CompositeState.symmetric(a, b), 10e-3)
    # the coherent sum of the two sources carries the full fringe pattern
    tot = np.abs(s.phi0.amplitudes + s.phi1.amplitudes) ** 2
    y = s.grid.y
    env = np.abs(s.phi0.amplitudes) ** 2 + np.abs(s.phi1.amplitudes) ** 2
    osc = tot - env
    mask = env > 1e-3 * env.max()
    i = np.nonzero(mask[:-1] & mask[1:] & (np.sign(osc[:-1]) != np.sign(osc[1:])))[0]
    zc = y[i] - osc[i] * (y[i + 1] - y[i]) / (osc[i + 1] - osc[i])
    period = 2 * np.polyfit(np.arange(len(zc)), zc, 1)[0]
    assert period == pytest.approx(fringe_spacing(1 * UM, 10 * UM, SP, 10e-3), rel=0.01)


# --- fringe spacing ---------------------------------------------------------------

def test_fringe_spacing_example():
    lam = fringe_spacing(1 * UM, 10 * UM, SP, 10e-3)
    assert lam == pytest.approx(4.68 * UM, rel=1e-3)
    tau = MASS_RB87 * UM ** 2 / HBAR
    assert lam == pytest.approx(2 * np.pi * HBAR * (1e-4 + tau ** 2) / (1e-2 * MASS_RB87 * 10 * UM), rel=1e-14)


def test_fringe_spacing_far_field():
    for t in (1.0, 10.0, 100.0):
        far = 2 * np.pi * HBAR * t / (MASS_RB87 * 10 * UM)
        assert fringe_spacing(1 * UM, 10 * UM, SP, t) / far == pytest.approx(1.0, abs=2e-6 / t ** 2)
    with pytest.raises(ValueError):
        fringe_spacing(1 * UM, 0.0, SP, 1e-3)


def test_noon_and_phase_budget():
    assert noon_fringe_spacing(4.68 * UM, 1) == 4.68 * UM
    assert noon_fringe_spacing(4.68 * UM, 10) == pytest.approx(0.468 * UM, rel=1e-14)
    assert phase_budget(10) == pytest.approx(np.pi / 20, rel=1e-15)
    with pytest.raises(ValueError):
        noon_fringe_spacing(1.0, 0)


# --- time-of-flight densities ------------------------------------------------------

def test_unconditioned_density_has_no_fringes(grid):
    a, b = pair(grid)
    s = free_expand(CompositeState.symmetric(a, b, N=7, Phi=0.3), 10e-3)
    tof = tof_density(s, "none", 10e-3)
    ref = 0.5 * 7 * (np.abs(s.phi0.amplitudes) ** 2 + np.abs(s.phi1.amplitudes) ** 2)
    assert np.allclose(tof.density, ref, rtol=0, atol=1e-14 * ref.max())
    gamma, delta = cross_term_coefficients(tof, s)
    assert abs(gamma) < 1e-10 and abs(delta) < 1e-10
    assert tof.atom_number() == pytest.approx(7.0, rel=1e-9)


@pytest.mark.parametrize("N,Phi", [(1, 0.0), (1, 1.1), (3, 0.0), (3, 2.5)])
def test_plus_minus_complementary(grid, N, Phi):
    a, b = pair(grid, 1.5 * UM, 2 * UM)
    s = free_expand(CompositeState(0.6, 0.8j, a, b, N, Phi), 5e-3)
    none = tof_density(s, "none")
    plus, minus = tof_density(s, "plus"), tof_density(s, "minus")
    assert plus.p_outcome + minus.p_outcome == pytest.approx(1.0, abs=1e-15)
    combined = plus.p_outcome * plus.density + minus.p_outcome * minus.density
    assert np.max(np.abs(combined - none.density)) < 1e-12 * none.density.max()
    assert plus.atom_number() == pytest.approx(N, rel=1e-9)
    # the cross term flips sign between the two outcomes
    cp = np.array(cross_term_coefficients(plus, s))
    cm = np.array(cross_term_coefficients(minus, s))
    assert np.dot(cp, cm) < 0


def test_plus_probability_closed_form(grid):
    a, b = pair(grid, 1 * UM, 2 * UM)
    for N in (1, 2, 5):
        s = CompositeState.symmetric(a, b, N=N, Phi=0.7)
        p_plus, _ = outcome_probabilities(s)
        assert p_plus == pytest.approx(0.5 * (1 + np.exp(-N) * np.cos(0.7)), rel=1e-12)


def test_identical_branches_plus_is_certain(grid):
    a, _ = pair(grid)
    s = CompositeState.symmetric(a, a, N=5)
    p_plus, p_minus = outcome_probabilities(s)
    assert p_plus == pytest.approx(1.0, abs=1e-14) and abs(p_minus) < 1e-14
    tof = tof_density(s, "plus")
    assert np.allclose(tof.density, 5 * a.density, rtol=1e-12)
    with pytest.raises(ZeroProbabilityBranch):
        tof_density(s, "minus")


def test_loop_conditioning(grid):
    a, b = pair(grid)
    s = CompositeState(1.0, 0.0, a, b, 4)
    assert np.allclose(tof_density(s, "loop0").density, 4 * a.density)
    with pytest.raises(ZeroProbabilityBranch):
        tof_density(s, "loop1")
    with pytest.raises(ValueError):
        tof_density(s, "sideways")


def test_measured_fringe_period(grid):
    a, b = pair(grid)
    s = free_expand(CompositeState.symmetric(a, b), 10e-3)
    lam, n = measured_fringe_period(tof_density(s, "plus"), tof_density(s, "minus"))
    assert n >= 5
    assert lam == pytest.approx(fringe_spacing(1 * UM, 10 * UM, SP, 10e-3), rel=0.01)


def test_density_shift_symmetric(grid):
    a, b = pair(grid, 1 * UM, 4 * UM)
    s = CompositeState.symmetric(a, b)
    # the unconditioned cloud is centred between the two branches
    assert density_shift(s, "none") == pytest.approx(2.0, rel=1e-9)


def test_tof_csv(tmp_path, grid):
    a, b = pair(grid)
    s = CompositeState.symmetric(a, b, N=2)
    tof_density(s, "none").to_csv(tmp_path / "t.csv")
    tof_density(s, "plus").to_csv(tmp_path / "t.csv", append=True)
    lines = open(tmp_path / "t.csv").read().splitlines()
    assert lines[0] == "y_um,density_per_um,conditioning,p_outcome"
    assert len(lines) == 1 + 2 * grid.n
    assert lines[-1].split(",")[2] == "plus"


# --- CNOT and entropy ---------------------------------------------------------------

def test_cnot_disentangles(grid):
    a, b = pair(grid)
    s = CompositeState.symmetric(a, b, N=3)
    assert entanglement_entropy(s) == pytest.approx(1.0, abs=1e-12)
    c = apply_cnot(s)
    assert entanglement_entropy(c) == 0.0
    assert apply_cnot(c) is c
    assert outcome_probabilities(c, "computational") == (1.0, 0.0)
    product = CompositeState(1.0, 0.0, a, b)
    assert apply_cnot(product) is product


def test_cnot_condensate_superposition_density(grid):
    a, b = pair(grid, 1 * UM, 2 * UM)
    c = apply_cnot(CompositeState.symmetric(a, b, N=1, Phi=0.0))
    tof = tof_density(c, "none")
    coherent = np.abs(a.amplitudes + b.amplitudes) ** 2
    coherent /= np.sum(coherent) * grid.dy
    assert np.allclose(tof.density, coherent, rtol=1e-10, atol=1e-14 * coherent.max())


def test_entropy_examples(grid):
    a, b = pair(grid, 1 * UM, 2 * UM)
    assert entanglement_entropy(CompositeState.symmetric(a, a)) == pytest.approx(0.0, abs=1e-12)
    far_a, far_b = pair(grid, 1 * UM, 30 * UM)
    assert entanglement_entropy(CompositeState.symmetric(far_a, far_b)) == pytest.approx(1.0, abs=1e-12)
    s = CompositeState.symmetric(a, b)
    lam = (1 + np.exp(-1)) / 2
    assert np.allclose(np.linalg.eigvalsh(loop_density_matrix(s)), [1 - lam, lam], atol=1e-12)
    assert entanglement_entropy(s) == pytest.approx(binary_entropy(lam), rel=1e-12)
    assert entanglement_entropy(s) == pytest.approx(0.9000, abs=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 6.0), st.integers(1, 20), st.floats(0.05, 0.95), st.floats(0, 6.3))
def test_entropy_bounds_and_closed_form(dist, N, p0, Phi):
    g = Grid1D.centered(32 * UM, 256)
    a, b = pair(g, 1 * UM, dist * UM)
    s = CompositeState(np.sqrt(p0), np.sqrt(1 - p0), a, b, N, Phi)
    S = entanglement_entropy(s)
    assert 0.0 <= S <= 1.0 + 1e-12
    ov = abs(branch_overlap(s).overlap) ** N
    r = np.sqrt(0.25 - p0 * (1 - p0) * (1 - ov ** 2))
    lam = min(max(0.5 + r, 1e-300), 1.0)
    expected = 0.0 if lam >= 1 - 1e-15 else binary_entropy(lam)
    assert S == pytest.approx(expected, abs=1e-9)


def test_entropy_decreases_with_overlap(grid):
    vals = []
    for d in (0.0, 0.5, 1.0, 2.0, 3.0, 5.0):
        a, b = pair(grid, 1 * UM, d * UM)
        vals.append(entanglement_entropy(CompositeState.symmetric(a, b)))
    assert np.all(np.diff(vals) > 0)
    assert von_neumann_entropy(np.eye(2) / 2) == pytest.approx(1.0, rel=1e-15)


# --- distinguishability ---------------------------------------------------------------

def test_distinguishability_examples():
    rep = perturbation_distinguishability_check(5.5, coefficient=0.01959, N=(1, 10 ** 6, 2 * 10 ** 6))
    assert rep.max_N == int(np.floor((5.5 / 0.01959) ** 2.5))
    assert rep.max_N == pytest.approx(1.3e6, rel=0.05)
    assert rep.verdicts == {1: "PASS", 10 ** 6: "PASS", 2 * 10 ** 6: "FAIL"}
    zero = perturbation_distinguishability_check(0.0, coefficient=0.01959, N=(1, 100))
    assert zero.max_N == 0 and set(zero.verdicts.values()) == {"FAIL"}
    w = 2 * np.pi * np.array([540.0, 10.0, 540.0])
    fit_rep = perturbation_distinguishability_check(PAPER_FIT, SP, w, N=1)
    assert fit_rep.amplitude_mG == pytest.approx(5.42, rel=5e-3)
    assert fit_rep.coefficient_mG == pytest.approx(0.01959, rel=0.03)
    with pytest.raises(ValueError):
        perturbation_distinguishability_check(5.5)
    assert json.loads(json.dumps(rep.to_dict()))["verdicts"]["1"] == "PASS"


def test_report_round_trip(tmp_path, grid):
    a, b = pair(grid, 1 * UM, 2 * UM)
    rep = entanglement_report(CompositeState.symmetric(a, b, Phi=0.2), 1320000, "abc")
    write_report(tmp_path / "r.json", rep)
    back = json.loads((tmp_path / "r.json").read_text())
    assert set(back) == {"overlap_abs", "contrast_N", "entropy_bits", "phi_rad",
                         "max_distinguishable_N", "config_hash"}
    assert back["overlap_abs"] == pytest.approx(np.exp(-1), rel=1e-12)


# --- sampling -------------------------------------------------------------------------

def test_sample_outcomes(grid):
    a, b = pair(grid, 1 * UM, 2 * UM)
    s = CompositeState.symmetric(a, b, Phi=0.0)
    x = sample_outcomes(s, 20_000, seed=7)
    assert np.array_equal(x, sample_outcomes(s, 20_000, seed=7))
    assert not np.array_equal(x, sample_outcomes(s, 20_000, seed=8))
    # prefix stability: trial i does not depend on the number of trials
    assert np.array_equal(sample_outcomes(s, 100, seed=7), x[:100])
    p_minus = outcome_probabilities(s)[1]
    assert x.mean() == pytest.approx(p_minus, abs=4 * np.sqrt(p_minus * (1 - p_minus) / 20_000))
    assert set(np.unique(sample_outcomes(CompositeState(1.0, 0.0, a, b), 50, "computational"))) == {0}
