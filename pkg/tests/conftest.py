import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from rankport import VarmaSpec

ACCEPTANCE_RESULTS = []


def record_criterion(number: int, description: str, passed: bool, detail: str = ""):
    ACCEPTANCE_RESULTS.append((number, description, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for number, desc, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        line = f"CRITERION {number}: {status} - {desc}"
        if detail:
            line += f" [{detail}]"
        tr.write_line(line)


def test_width() -> int:
    try:
        return max(1, int(os.environ.get("RANKPORT_TEST_WORKERS",
                                         os.environ.get("RANKPORT_WORKERS", "2"))))
    except ValueError:
        return 2


def parallel_map(fn, args_list):
    """Order-preserving parallel map for heavy seeded loops (fork start)."""
    width = test_width()
    if width <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=width) as ex:
        return list(ex.map(fn, args_list))


@pytest.fixture(scope="session")
def null_spec() -> VarmaSpec:
    return VarmaSpec(d=2, p=1, q=1,
                     A=[[[0.5, 0.2], [-0.1, 0.4]]],
                     B=[[[0.3, 0.0], [0.0, 0.4]]])


@pytest.fixture(scope="session")
def alt_spec() -> VarmaSpec:
    return VarmaSpec(d=2, p=1, q=2,
                     A=[[[0.5, 0.2], [-0.1, 0.4]]],
                     B=[[[0.3, 0.0], [0.0, 0.4]],
                        [[0.07, 0.03], [-0.02, 0.1]]])


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
