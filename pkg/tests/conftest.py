import pytest

from colombeau.calculus import Grid

# verdict lines printed at the end of the run, keyed by acceptance criterion number
CRITERIA: dict[int, tuple[str, bool, str]] = {}

# coarse grid for unit tests: dx = 2^-8 resolves eps down to 2^-6
SMALL_GRID = Grid(((-4.0, 4.0),), 2 ** 12)
SMALL_EPS = tuple(2.0 ** -k for k in range(2, 7))


def record(number: int, title: str, ok: bool, detail: str = "") -> None:
    CRITERIA[number] = (title, bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}  {detail}")


@pytest.fixture(scope="session")
def dist_cfg():
    from colombeau.quotient import default_config
    return default_config("distribution")


@pytest.fixture(scope="session")
def small_grid():
    return SMALL_GRID
