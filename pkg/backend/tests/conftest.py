import os
import sys
import tempfile

import numpy as np
import pytest

# Allow a bare `pytest` from the repository root or from backend/
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

# Keep the run-history database out of the working tree during tests
os.environ.setdefault("CBI_DATABASE_URL", f"sqlite:///{tempfile.gettempdir()}/cbi_test_runs.db")

from backend.app.solvers.partition import canonicalize  # noqa: E402


@pytest.fixture
def base_partitions():
    """Two bases on n=100 items: halves (K=2) and residues mod 4 (K=4), about 3 bits apart."""
    items = np.arange(100)
    return canonicalize(items // 50), canonicalize(items % 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
