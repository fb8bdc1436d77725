import functools

import numpy as np
import pytest

from fracpq.energies import make_bundle
from fracpq.mesh import Domain1D, Potential, build_mesh

SYM = Domain1D(((-1.0, 1.0),))
SPLIT = Domain1D(((-1.0, -0.2), (0.2, 1.0)))


@functools.lru_cache(maxsize=None)
def cached_mesh(intervals, n_per_unit):
    return build_mesh(Domain1D(intervals), n_per_unit)


@functools.lru_cache(maxsize=None)
def cached_bundle(intervals, n_per_unit, s, p, q=None, mu=0.0):
    m = cached_mesh(intervals, n_per_unit)
    return make_bundle(m, s, p, Potential.constant(m), q=q, mu=mu)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sym_mesh():
    return cached_mesh(SYM.intervals, 32)


@pytest.fixture(scope="session")
def split_mesh():
    return cached_mesh(SPLIT.intervals, 32)


# -- acceptance reporting ---------------------------------------------------

CRITERIA_LINES: list[str] = []


@pytest.fixture
def report_criterion(capsys):
    """Print (and remember) one PASS/FAIL line; returns the verdict for asserting."""

    def _report(number, title, ok, detail=""):
        line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}: {title}" + (f" | {detail}" if detail else "")
        CRITERIA_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
