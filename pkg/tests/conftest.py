import numpy as np
import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def record(cid: str, ok: bool, detail: str) -> None:
        line = f"{cid} {'PASS' if ok else 'FAIL'}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
