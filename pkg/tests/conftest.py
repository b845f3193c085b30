import sys
from dataclasses import replace

import pytest

from aidac_sim import default_aidac


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("tests.test_acceptance")
                    or sys.modules.get("test_acceptance"), "REPORT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def defaults():
    return default_aidac()


@pytest.fixture(scope="session")
def arch(defaults):
    return defaults[0]


@pytest.fixture(scope="session")
def vp(defaults):
    return defaults[1]


@pytest.fixture(scope="session")
def cost(defaults):
    return defaults[2]


@pytest.fixture(scope="session")
def toy(arch):
    """2-bit, 4-row, single-CB macro; small enough for exhaustive checks."""
    return replace(
        arch,
        n_in=2,
        n_w=2,
        rows_per_macro=4,
        cols_per_macro=4,
        cb_width=2,
        cbs_per_macro=1,
        macros_v=1,
        macros_h=1,
    )


@pytest.fixture(scope="session")
def toy_m2(toy):
    return replace(toy, rows_per_macro=2)


@pytest.fixture(scope="session")
def digit_model():
    from aidac_sim.mlp import train_digits_mlp

    return train_digits_mlp()
