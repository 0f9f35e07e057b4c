import os
from pathlib import Path

import numpy as np
import pytest


@pytest.fixture(autouse=True, scope="session")
def _basis_cache():
    # eigenbases are deterministic, so a persistent cache only saves time
    if "NFLOW_CACHE" not in os.environ:
        os.environ["NFLOW_CACHE"] = str(Path(__file__).resolve().parent.parent / ".nflow-cache")
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
