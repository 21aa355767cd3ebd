import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sepris._drbg import Drbg  # noqa: E402
from sepris.codec import DabKeyset, FrameBuffer  # noqa: E402


@pytest.fixture
def keys():
    return DabKeyset.generate(quality=50, rng=Drbg("test-keys"))


@pytest.fixture
def rng():
    return np.random.default_rng(20211)


@pytest.fixture
def random_frame(rng):
    def make(w, h, c=1):
        return FrameBuffer(rng.integers(0, 256, (c, h, w), dtype=np.uint8))
    return make


_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    The criterion number comes from the test name (``test_criterion_<n>_...``).
    A test that raises before recording is reported as FAIL.
    """
    n = int(request.node.name.split("_")[2])
    table = request.config.stash.setdefault(_VERDICTS, {})

    def record(ok: bool, detail: str) -> bool:
        table[n] = (bool(ok), detail)
        return bool(ok)

    yield record
    table.setdefault(n, (False, "aborted before a verdict was reached"))


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_VERDICTS, None)
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(table):
        ok, detail = table[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
