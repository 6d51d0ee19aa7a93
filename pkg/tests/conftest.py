import pytest

from nodalab.field import closed_form_solution
from nodalab.lifted import lift


@pytest.fixture(scope="session")
def harmonic():
    """Lifted Re (x1 + i x2)^k for k = 0..3 (exact evaluators, coarse mesh)."""
    return {k: lift(closed_form_solution("harmonic_poly", k, mesh_h=0.5)) for k in range(4)}


@pytest.fixture(scope="session")
def square11():
    return lift(closed_form_solution("square_mode", 1, 1))


@pytest.fixture(scope="session")
def disk10():
    return lift(closed_form_solution("disk_mode", 1, 0, mesh_h=1 / 32))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
