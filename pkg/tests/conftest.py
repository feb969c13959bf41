import numpy as np
import pytest

from riskscreen import lasso


@pytest.fixture(autouse=True)
def _certify_lasso_fits(monkeypatch):
    # every lasso fit made by any test is checked against the KKT conditions
    monkeypatch.setattr(lasso, "CHECK_KKT", True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
