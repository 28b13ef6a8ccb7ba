import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make nested_oracle importable

from bdsde.condexp import gauss_hermite


@pytest.fixture(scope="session")
def rule8():
    return gauss_hermite(8)
