"""Simulation oracles: counter-based reproducibility under chunking,
inverse-CDF correctness against scipy, exact price recomputation, and a
hand-checked wealth decomposition."""

import math

import numpy as np
import pytest
from scipy.stats import poisson

from jumpsignal import (
    HideSmall,
    NoSignal,
    PathBatch,
    StrategyTable,
    TimeGrid,
    mc_expected_utility,
    payoff_call,
    payoff_digital,
    payoff_put,
    payoff_terminal,
    simulate_batch,
    wealth_forward,
)
from jumpsignal.simulate import _poisson_invcdf

NEG_EXP_01 = -1.105170918075647624811707826490  # -exp(0.1), frozen


def test_time_grid_uniform():
    tg = TimeGrid.uniform(4, 0.5)
    assert tg.n_steps == 4 and tg.T == 0.5
    assert np.allclose(tg.dt, 0.125, rtol=0, atol=1e-16)
    assert tg.times[0] == 0.0
    with pytest.raises(ValueError):
        TimeGrid.uniform(0, 1.0)
    with pytest.raises(ValueError):
        TimeGrid.uniform(4, 0.0)
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.1, 0.5]))


def test_batch_shapes_and_determinism(spec_small, grid_small, tg_small):
    b = simulate_batch(spec_small, grid_small, tg_small, 64, seed=9)
    assert b.dW.shape == (4, 64)
    assert b.dN.shape == (4, 6, 64) and b.dN.dtype == np.int16
    assert b.S.shape == (5, 64)
    assert np.all(b.S[0] == 1.0) and np.all(b.S > 0)
    again = simulate_batch(spec_small, grid_small, tg_small, 64, seed=9)
    assert np.array_equal(b.dW, again.dW)
    assert np.array_equal(b.dN, again.dN)
    assert np.array_equal(b.S, again.S)
    other = simulate_batch(spec_small, grid_small, tg_small, 64, seed=10)
    assert not np.array_equal(b.dW, other.dW)
    with pytest.raises(ValueError):
        simulate_batch(spec_small, grid_small, tg_small, 0, seed=9)


def test_chunked_paths_reproduce_full_run(spec_small, grid_small, tg_small):
    full = simulate_batch(spec_small, grid_small, tg_small, 40, seed=55)
    # offsets off the 4-wide Philox block boundary exercise the remainder
    head = simulate_batch(spec_small, grid_small, tg_small, 23, seed=55)
    tail = simulate_batch(spec_small, grid_small, tg_small, 17, seed=55,
                          path_offset=23)
    assert np.array_equal(full.dW[:, :23], head.dW)
    assert np.array_equal(full.dW[:, 23:], tail.dW)
    assert np.array_equal(full.dN[:, :, :23], head.dN)
    assert np.array_equal(full.dN[:, :, 23:], tail.dN)
    assert np.array_equal(full.S[:, 23:], tail.S)


def test_brownian_increment_moments(spec_small, grid_small):
    tg = TimeGrid.uniform(1, 0.5)
    b = simulate_batch(spec_small, grid_small, tg, 20000, seed=3)
    w = b.dW[0] / math.sqrt(0.5)
    assert abs(np.mean(w)) < 4.0 / math.sqrt(20000)
    assert abs(np.std(w) - 1.0) < 4.0 / math.sqrt(20000)


def test_poisson_invcdf_matches_scipy():
    rng = np.random.default_rng(77)
    u = rng.random(20000)
    for mu in (0.01, 0.5, 3.0, 50.0):
        mine = _poisson_invcdf(u, mu)
        ref = poisson.ppf(u, mu).astype(np.int64)
        assert np.array_equal(mine, ref)
    assert np.array_equal(_poisson_invcdf(u, 0.0), np.zeros(u.size, np.int64))
    # near-1 uniforms stay finite through the saturation guard
    assert _poisson_invcdf(np.array([1.0 - 1e-16]), 2.0)[0] < 100
    with pytest.raises(ValueError):
        _poisson_invcdf(u, -1.0)


def test_jump_count_moments(spec_small, grid_small):
    tg = TimeGrid.uniform(1, 0.5)
    b = simulate_batch(spec_small, grid_small, tg, 16384, seed=21)
    for j in range(6):
        mu = grid_small.weights[j] * 0.5
        got = float(np.mean(b.dN[0, j]))
        assert abs(got - mu) < 4.0 * math.sqrt(mu / 16384)


def test_price_path_hand_recomputation(spec_small, grid_small, batch_small):
    eta = grid_small.eta_values()
    comp = sum(float(eta[i] * grid_small.weights[i]) for i in range(6))
    dt = batch_small.time_grid.dt
    for p in range(30):
        s = 1.0
        for k in range(4):
            drift = (spec_small.kappa - 0.5 * spec_small.sigma ** 2 - comp) * dt[k]
            s *= math.exp(drift + spec_small.sigma * batch_small.dW[k, p])
            for j in range(6):
                s *= (1.0 + eta[j]) ** int(batch_small.dN[k, j, p])
            assert batch_small.S[k + 1, p] == pytest.approx(s, rel=1e-12)


def test_price_mean_is_martingale(spec_small, grid_small, tg_small):
    # kappa = 0 and compensated jumps: E[S_T] = s0
    b = simulate_batch(spec_small, grid_small, tg_small, 32768, seed=13)
    se = float(np.std(b.S[-1], ddof=1)) / math.sqrt(32768)
    assert abs(float(np.mean(b.S[-1])) - 1.0) < 4.0 * se


def test_compensated_increments(batch_small, grid_small):
    comp = batch_small.dN_compensated(0)
    assert comp.shape == (6, batch_small.n_paths)
    manual = batch_small.dN[0].astype(float) \
        - grid_small.weights[:, None] * batch_small.time_grid.dt[0]
    assert np.array_equal(comp, manual)
    se = float(np.std(comp.sum(axis=0), ddof=1)) / math.sqrt(batch_small.n_paths)
    assert abs(float(np.mean(comp.sum(axis=0)))) < 4.0 * se


def test_payoffs():
    s = np.array([0.5, 1.0, 1.5])
    assert np.array_equal(payoff_put(s, 1.0), [0.5, 0.0, 0.0])
    assert np.array_equal(payoff_call(s, 1.0), [0.0, 0.0, 0.5])
    assert np.array_equal(payoff_digital(s, 1.0), [1.0, 1.0, 0.0])
    assert payoff_put(0.25, 1.0) == 0.75
    assert np.array_equal(payoff_terminal(s, "put", 1.0), payoff_put(s, 1.0))
    with pytest.raises(ValueError):
        payoff_put(s, 0.0)
    with pytest.raises(ValueError):
        payoff_terminal(s, "lookback", 1.0)


def _hand_batch(spec, grid, dW, dN_sparse, n_paths):
    """One-step batch with prescribed increments; prices are only used
    as regressors so any positive values do."""
    tg = TimeGrid.uniform(1, 0.5)
    dN = np.zeros((1, 6, n_paths), dtype=np.int16)
    for (j, p), n in dN_sparse.items():
        dN[0, j, p] = n
    S = np.ones((2, n_paths))
    return PathBatch(spec=spec, grid=grid, time_grid=tg, seed=0,
                     path_offset=0, dW=np.asarray(dW, float).reshape(1, -1),
                     dN=dN, S=S)


def test_wealth_hand_case(spec_small, grid_small):
    batch = _hand_batch(spec_small, grid_small, [0.1, 0.0, -0.2],
                        {(5, 1): 1, (2, 2): 1}, 3)
    eta = grid_small.eta_values()
    comp = sum(float(eta[i] * grid_small.weights[i]) for i in range(6))
    p_sig = np.array([-1.0, -1.0, 0.25, 0.25, 1.0, 1.0])
    table = StrategyTable.constant(HideSmall(c=0.7), 0.5, p_sig=p_sig)
    X = wealth_forward(batch, table, 0.0)
    drift = -0.5 * comp * 0.5  # p0 * comp * dt charged on every path
    # path 0: Brownian only; path 1: signal jump at +2 trades p_sig = 1;
    # path 2: no-signal jump at -0.5 trades p0 despite p_sig = 0.25
    assert X[0] == pytest.approx(0.5 * 0.2 * 0.1 + drift, abs=1e-14)
    assert X[1] == pytest.approx(1.0 * 0.99 + drift, abs=1e-14)
    assert X[2] == pytest.approx(0.5 * 0.2 * -0.2 + 0.5 * -0.5 + drift, abs=1e-14)


def test_wealth_nosignal_ignores_psig(spec_small, grid_small):
    batch = _hand_batch(spec_small, grid_small, [0.05, -0.1], {(4, 0): 2}, 2)
    base = StrategyTable.constant(NoSignal(), 0.7)
    wild = StrategyTable.constant(NoSignal(), 0.7,
                                  p_sig=np.full(6, 77.0))  # never applied
    assert np.array_equal(wealth_forward(batch, base, 0.0),
                          wealth_forward(batch, wild, 0.0))


def test_wealth_bounds_enforced(spec_small, grid_small):
    batch = _hand_batch(spec_small, grid_small, [0.0], {}, 1)
    bad = StrategyTable.constant(NoSignal(), 1.5)
    with pytest.raises(ValueError):
        wealth_forward(batch, bad, 0.0)
    bad_sig = StrategyTable.constant(HideSmall(c=0.7), 0.5,
                                     p_sig=np.full(6, -1.2))
    with pytest.raises(ValueError):
        wealth_forward(batch, bad_sig, 0.0)


def test_mc_expected_utility_frozen():
    X = np.zeros(100)
    F = np.full(100, 0.25)
    mean, se = mc_expected_utility(X, F, 0.4)
    assert mean == pytest.approx(NEG_EXP_01, rel=1e-14)
    assert se < 1e-15  # identical samples up to the rounding of the mean
    with pytest.raises(ValueError):
        mc_expected_utility(np.array([-2000.0]), np.array([0.0]), 0.4)
    with pytest.raises(ValueError):
        mc_expected_utility(X, F, 0.0)
    single, se1 = mc_expected_utility(np.array([0.0]), np.array([0.0]), 0.4)
    assert single == -1.0 and se1 == 0.0
