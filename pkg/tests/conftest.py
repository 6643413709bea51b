from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import BACKENDS, Backends  # noqa: E402


@pytest.fixture(params=BACKENDS)
def backends(request, tmp_path):
    b = Backends(request.param, tmp_path)
    yield b
    b.close()


@pytest.fixture
def cat(backends):
    return backends.open()


@pytest.fixture
def explicit_cat(backends):
    return backends.open(autocommit=False)
