import pytest

from radial_aggregation import make_potential


@pytest.fixture(autouse=True, scope="session")
def _kernel_cache(tmp_path_factory):
    mp = pytest.MonkeyPatch()
    mp.setenv("AGGR_CACHE_DIR", str(tmp_path_factory.mktemp("kernels")))
    yield
    mp.undo()


@pytest.fixture(scope="session")
def gauss():
    """Unit-width Gaussian potentials keyed by dimension."""
    return {N: make_potential("gaussian", {"sigma": 1.0}, N) for N in (1, 2, 3)}


ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
