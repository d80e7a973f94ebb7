import numpy as np
import pytest

from fluxbec.chip import ChipSetup, profiles, solve_trap
from fluxbec.constants import UM
from fluxbec.quantum_dynamics import Grid1D
from fluxbec.trap import fit_axial_model

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def setup():
    return ChipSetup()


@pytest.fixture(scope="session")
def solved(setup):
    return solve_trap(setup)


@pytest.fixture(scope="session")
def half_profiles(solved):
    """(bare, clockwise, anticlockwise) half-quantum profiles over 100 um."""
    bare, cw = profiles(solved, 100e-6, 1001, 0.5, "clockwise")
    _, acw = profiles(solved, 100e-6, 1001, 0.5, "anticlockwise")
    return bare, cw, acw


@pytest.fixture(scope="session")
def cw_fit(half_profiles):
    return fit_axial_model(half_profiles[1])


@pytest.fixture(scope="session")
def acw_fit(half_profiles):
    return fit_axial_model(half_profiles[2])


@pytest.fixture(scope="session")
def grid1024():
    return Grid1D.centered(64 * UM, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


SWEEP_D_UM = (8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30)


@pytest.fixture(scope="session")
def sweep_run(setup):
    """Distance sweep over [8, 30] um with its wall time."""
    import time
    from fluxbec.chip import sweep_distance
    t0 = time.perf_counter()
    pts = sweep_distance(setup, [d * UM for d in SWEEP_D_UM])
    return pts, time.perf_counter() - t0
