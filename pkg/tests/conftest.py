import numpy as np
import pytest

from aivlearn.dgp.oracle import LongitudinalOracle, LongitudinalOracleSpec, PointOracle, aiv_oracle, miv_oracle


@pytest.fixture(scope="session")
def aiv():
    return PointOracle(aiv_oracle())


@pytest.fixture(scope="session")
def aiv_homosk():
    return PointOracle(aiv_oracle(homoskedastic=True))


@pytest.fixture(scope="session")
def miv():
    return PointOracle(miv_oracle())


@pytest.fixture(scope="session")
def long_oracle():
    return LongitudinalOracle(LongitudinalOracleSpec())


def cell_function(rng, *keys, scale=0.1):
    """A random function of the given cell coordinates (one value per
    distinct key combination), used as a nuisance perturbation."""
    stacked = np.column_stack([np.asarray(k, dtype=float) for k in keys])
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    inv = inv.ravel()
    return scale * rng.standard_normal(inv.max() + 1)[inv]


# acceptance verdicts, printed after the run so they survive output capture
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
