"""Shared fixtures: a small hand-checkable model plus simulated batches.

The small grid has q = 3 marks per side at 0.5, 1, 2 so every bin weight
has a short closed form; cutoff 0.7 splits it into one inner no-signal
pair and two outer signal pairs under HideSmall.
"""

import numpy as np
import pytest

from jumpsignal import (
    DriverContext,
    HideLarge,
    HideSmall,
    LevyMarketSpec,
    NoSignal,
    TimeGrid,
    build_grid,
    payoff_put,
    simulate_batch,
)


@pytest.fixture(scope="session")
def spec_small():
    # kappa = 0 keeps the risk-premium constant C at zero
    return LevyMarketSpec(rho=0.1, alpha=1.5, epsilon=0.01, kappa=0.0,
                          sigma=0.2, s0=1.0, T=0.5)


@pytest.fixture(scope="session")
def spec_drift():
    # kappa = 0.3 -> C = 0.3 / (0.4 * 0.2) = 3.75
    return LevyMarketSpec(rho=0.1, alpha=1.5, epsilon=0.01, kappa=0.3,
                          sigma=0.2, s0=1.0, T=0.5)


@pytest.fixture(scope="session")
def grid_small(spec_small):
    return build_grid(3, spec_small, e_min=0.5, e_max=2.0)


@pytest.fixture(scope="session")
def grid_drift(spec_drift):
    return build_grid(3, spec_drift, e_min=0.5, e_max=2.0)


@pytest.fixture(scope="session")
def ctx_nosignal(spec_small, grid_small):
    return DriverContext.build(spec_small, grid_small, NoSignal(), lam=0.4)


@pytest.fixture(scope="session")
def ctx_hidesmall(spec_small, grid_small):
    return DriverContext.build(spec_small, grid_small, HideSmall(c=0.7), lam=0.4)


@pytest.fixture(scope="session")
def ctx_hidelarge(spec_small, grid_small):
    return DriverContext.build(spec_small, grid_small, HideLarge(c=0.7), lam=0.4)


@pytest.fixture(scope="session")
def ctx_drift(spec_drift, grid_drift):
    return DriverContext.build(spec_drift, grid_drift, HideSmall(c=0.7), lam=0.4)


@pytest.fixture(scope="session")
def tg_small(spec_small):
    return TimeGrid.uniform(4, spec_small.T)


@pytest.fixture(scope="session")
def batch_small(spec_small, grid_small, tg_small):
    return simulate_batch(spec_small, grid_small, tg_small, 4096, seed=101)


@pytest.fixture(scope="session")
def batch_small_b(spec_small, grid_small, tg_small):
    return simulate_batch(spec_small, grid_small, tg_small, 4096, seed=202)


@pytest.fixture(scope="session")
def payoff_small(batch_small):
    return payoff_put(batch_small.S[-1], 1.0)


@pytest.fixture(scope="session")
def payoff_small_b(batch_small_b):
    return payoff_put(batch_small_b.S[-1], 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
