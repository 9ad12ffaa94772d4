import numpy as np
import pytest

from sweepmorse.laplace import compute_weights, solve_sweep
from sweepmorse.morse import classify_all
from sweepmorse.sweepgen import generate_box, generate_counterexample


def _solved(scheme):
    mesh, bc = generate_counterexample()
    f = solve_sweep(mesh, compute_weights(mesh, scheme), bc)
    return mesh, bc, f, classify_all(mesh, f)


@pytest.fixture(scope="session")
def ce_uniform():
    """Default counterexample solved with uniform weights: (mesh, bc, field, report)."""
    return _solved("uniform")


@pytest.fixture(scope="session")
def ce_cotangent():
    return _solved("cotangent")


@pytest.fixture(scope="session")
def box4():
    return generate_box(4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_tet():
    return np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float), np.array([[0, 1, 2, 3]])


def regular_tet():
    return (np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float),
            np.array([[0, 1, 2, 3]]))



ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def record(request):
    """Log one PASS/FAIL line for an acceptance criterion and return the verdict."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def _record(n: int, ok: bool, detail: str):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[n] = line
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
