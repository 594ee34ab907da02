import os

import numpy as np
import pytest

from hubbard_cd import fermion, lattice


def pytest_collection_modifyitems(config, items):
    gates = {
        "extended": ("HUBBARD_CD_EXTENDED", "set HUBBARD_CD_EXTENDED=1 to run"),
        "large": ("HUBBARD_CD_LARGE", "set HUBBARD_CD_LARGE=1 to run"),
    }
    for item in items:
        for mark, (env, reason) in gates.items():
            if mark in item.keywords and os.environ.get(env) != "1":
                item.add_marker(pytest.mark.skip(reason=reason))


@pytest.fixture(scope="session")
def lat11():
    return lattice.build(1, 1)


@pytest.fixture(scope="session")
def hams11(lat11):
    return fermion.build_hamiltonians(lat11, 1.0, 1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(n, rng):
    v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return v / np.linalg.norm(v)


CRITERIA: dict[str, str] = {}


def record_criterion(tag: str, ok: bool, detail: str, seconds: float | None = None, budget: float | None = None) -> bool:
    """Store and print one acceptance line; returns the overall verdict."""
    timing = ""
    if seconds is not None:
        ok = ok and (budget is None or seconds < budget)
        timing = f" [{seconds:.1f} s" + (f" / budget {budget:g} s]" if budget else "]")
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}{timing}"
    CRITERIA[tag] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(CRITERIA, key=lambda t: int(t[1:])):
        terminalreporter.write_line(CRITERIA[tag])
