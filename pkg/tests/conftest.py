import csv
from pathlib import Path

import numpy as np
import pytest

from equikin.model import default_chain

FIXTURES = Path(__file__).parent / "fixtures"


def read_fixture(name):
    with open(FIXTURES / name, newline="") as fh:
        return list(csv.DictReader(fh))


def reference_energy_table():
    """``{joint: {phase: (generated, absorbed)}}`` from the joint energy fixture."""
    table = {}
    for row in read_fixture("joint_energy_reference.csv"):
        table[row["joint"]] = {
            phase: (float(row[f"{phase}_generated"]), float(row[f"{phase}_absorbed"]))
            for phase in ("stance", "swing")
        }
    return table


@pytest.fixture(scope="session")
def chain4():
    return default_chain(4)


@pytest.fixture(scope="session")
def chain5():
    return default_chain(5)


@pytest.fixture(scope="session")
def trot_bundle():
    from equikin.oracle import synth_trot

    return synth_trot()


@pytest.fixture(scope="session")
def trot_result(trot_bundle):
    from equikin.pipeline import analyze_trial

    b = trot_bundle
    return analyze_trial(b.markers, b.grf, b.chain, trial_id=b.trial_id)


@pytest.fixture(scope="session")
def double_pendulum_roundtrip():
    from equikin.oracle import builtin_scenario, roundtrip_check

    return roundtrip_check(builtin_scenario("double_pendulum"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# Acceptance report: one line per criterion, repeated in the terminal summary
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {title} | {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
