import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make tests/oracles.py importable


def assert_close_rel(actual, expected, rel):
    """Vector agreement within `rel`, measured against the expected vector's
    magnitude: |a - e| <= rel * max(|e|, ||e||_inf).

    The norm floor keeps near-zero entries (cancellation in a sum of large
    terms) from demanding more precision than the arithmetic carries.
    """
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    assert actual.shape == expected.shape
    floor = np.abs(expected).max() if expected.size else 0.0
    tol = rel * np.maximum(np.abs(expected), floor)
    diff = np.abs(actual - expected)
    worst = np.argmax(diff - tol)
    assert (diff <= tol).all(), (
        f"mismatch at flat index {worst}: actual={actual.reshape(-1)[worst]!r} "
        f"expected={expected.reshape(-1)[worst]!r} diff={diff.reshape(-1)[worst]:.3g} "
        f"tol={tol.reshape(-1)[worst]:.3g}"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
