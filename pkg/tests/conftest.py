import os

import numpy as np
import pytest

from cnpullback.kernels import HAS_NUMBA

requires_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba backend disabled")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"


def pytest_report_header(config):
    return f"cnpullback backend: {'numba' if HAS_NUMBA else 'numpy'} (CNPULLBACK_DISABLE_NUMBA={os.environ.get('CNPULLBACK_DISABLE_NUMBA', '')})"


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one pass/fail line: ``criterion(number, title, passed, detail)``."""

    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA, key=lambda x: x[0]):
        terminalreporter.write_line(line)
