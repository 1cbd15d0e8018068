import numpy as np
import pytest

from globaldrive.ion_crystal import TrapConfig, compute_modes

# criterion id -> (passed, detail), filled by the acceptance tests
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def acceptance():
    def record(key, passed, detail=""):
        ACCEPTANCE_RESULTS[key] = (bool(passed), detail)
        line = f"[acceptance] {key}: {'PASS' if passed else 'FAIL'} {detail}"
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0].lstrip("C"))):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def modes4():
    return compute_modes(TrapConfig(4, 2 * np.pi * 1e6))


@pytest.fixture(scope="session")
def modes3():
    return compute_modes(TrapConfig(3, 2 * np.pi * 1e6))
