import os

import numpy as np
import pytest

from paperecg import _backend

BACKENDS = sorted(_backend.available())

# lines printed by the acceptance suite, echoed again at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per importable kernel backend."""
    before = _backend.kernels
    _backend.use(request.param)
    yield request.param
    _backend.kernels = before


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tmpdir_path(tmp_path):
    return str(tmp_path)


def pytest_report_header(config):
    return f"paperecg kernels: active={_backend.kernels.NAME}, available={','.join(BACKENDS)}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
