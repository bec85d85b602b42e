import numpy as np
import pytest

from tensor_rlct import CpParams


def random_params(rng, dims, rank, scale=1.0):
    I, J, K = dims
    return CpParams(
        scale * rng.standard_normal((I, rank)),
        scale * rng.standard_normal((J, rank)),
        scale * rng.standard_normal((K, rank)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion.

    Call ``info = criterion(3, "KL oracle equivalence")`` at the start of
    the test and set ``info["detail"]`` as numbers become known; the outcome
    comes from the test result itself.
    """
    info = {}

    def record(number, title):
        info.update(number=number, title=title, detail="")
        return info

    yield record
    if info:
        _ACCEPTANCE[request.node.nodeid] = info


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.stash_outcome = rep.passed
    elif rep.when == "teardown" and item.nodeid in _ACCEPTANCE:
        _ACCEPTANCE[item.nodeid]["passed"] = getattr(item, "stash_outcome", False) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for info in sorted(_ACCEPTANCE.values(), key=lambda i: i["number"]):
        status = "PASS" if info.get("passed") else "FAIL"
        line = f"[{status}] {info['number']}. {info['title']}"
        if info["detail"]:
            line += f" -- {info['detail']}"
        terminalreporter.write_line(line)
