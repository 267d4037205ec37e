import numpy as np
import pytest

from parasep import Fem1DProblem, Mesh1D, build_interpolant

MU_TRIAL = np.linspace(1.0, 3.0, 401)

# acceptance outcomes, printed in the terminal summary
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def mu_trial():
    return MU_TRIAL.copy()


@pytest.fixture(scope="session")
def fem_problem():
    return Fem1DProblem(Mesh1D(-3.0, 3.0, 0.015))


@pytest.fixture(scope="session")
def fem_grid(fem_problem):
    return fem_problem.eim_grid(MU_TRIAL)


@pytest.fixture(scope="session")
def fem_eim16(fem_grid):
    return build_interpolant(fem_grid, 16, tol=0.0)


@pytest.fixture(scope="session")
def coarse_problem():
    return Fem1DProblem(Mesh1D(-3.0, 3.0, 0.1))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {line}")
