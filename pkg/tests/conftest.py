import numpy as np
import pytest

from stqfc.experiment import Setup
from stqfc.gridfields import make_grid
from stqfc.propagation import (CrystalParams, Detector, SolverParams, focused_waist,
                               matched_detector_waist)

TAU0 = 0.3e-12
W_S = focused_waist(1558e-9, 0.2, 2.6e-3)
W_P = focused_waist(1545e-9, 0.2, 2.8e-3)

# Criterion lines collected by the acceptance module, echoed in the summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def crystal():
    return CrystalParams.from_wavelengths()


@pytest.fixture(scope="session")
def small_grid():
    """32 x 32 x 16 grid, 14 signal waists wide, one pulse slot."""
    return make_grid(32, 32, 16, 14 * W_S, 14 * W_S, 12 * TAU0)


@pytest.fixture(scope="session")
def thin_grid():
    """64 x 64 transverse, 8 time samples; for purely spatial questions."""
    return make_grid(64, 64, 8, 14 * W_S, 14 * W_S, 12 * TAU0)


def make_setup(grid, crystal, pump_peak=1e5, kind="fiber", tol=1e-3, **kw):
    det = Detector(kind, matched_detector_waist(W_S, W_P) if kind == "fiber" else None,
                   crystal.length / 2)
    solver = SolverParams(h0=2.5e-3, tol=tol)
    return Setup(grid, crystal, solver, det, kw.pop("signal_amplitude", 1e3), pump_peak, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
