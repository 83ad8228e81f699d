import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def lognormal_sample(rng):
    return np.exp(rng.normal(5.0, 1.0, size=800))


_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def report():
    """Record one acceptance line: report(criterion, passed, detail)."""

    def _add(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"{name}: {'PASS' if passed else 'FAIL'} {detail}")

    return _add


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{name}: {'PASS' if passed else 'FAIL'}  {detail}")
