"""Shared fixtures; Monte Carlo acceptance cells only run with --runslow."""

import os
import sys

import numpy as np
import pytest

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.core.basis import MonomialBasis  # noqa: E402
from src.core.factor import PanelMatrix  # noqa: E402
from src.core.second_stage import UnitData  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte Carlo acceptance cells")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo cells that take minutes")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def planted_factor_panel(rng, T=60, L=40, R=2, noise=0.0):
    factors = rng.normal(size=(T, R))
    loadings = rng.normal(size=(L, R))
    x = factors @ loadings.T + noise * rng.normal(size=(T, L))
    return PanelMatrix(x), factors, loadings


def noiseless_panel(rng, T=80, L=30, N=3, J=1, d_c=1):
    """Exact-rank panel and units whose outcomes are exact functions of the estimated factors."""
    from src.core.factor import extract_factors
    from src.core.second_stage import build_design

    x, _, _ = planted_factor_panel(rng, T=T, L=L, R=2)
    fit = extract_factors(x, 2)
    basis = MonomialBasis(J)
    units, gammas = [], []
    for i in range(N):
        d = rng.normal(size=T)
        c = rng.normal(size=(T, d_c))
        unit = UnitData(y=np.zeros(T), d=d, c=c, unit_id=f"u{i}")
        w = build_design(fit, unit, basis)
        gamma = rng.normal(size=w.shape[1])
        units.append(UnitData(y=w @ gamma, d=d, c=c, unit_id=f"u{i}"))
        gammas.append(gamma)
    return x, fit, basis, units, gammas


@pytest.fixture
def planted_panel(rng):
    return planted_factor_panel(rng)


@pytest.fixture
def noiseless(rng):
    return noiseless_panel(rng)
