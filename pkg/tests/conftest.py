import warnings

import pytest

from lmgdpt.errors import DegenerateSpectrum


@pytest.fixture(autouse=True)
def _quiet_degeneracy():
    # symmetric points legitimately produce near-degenerate doublets
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSpectrum)
        yield
