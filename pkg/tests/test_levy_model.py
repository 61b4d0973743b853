"""Measure-level oracles: closed forms frozen from a 40-digit computation
plus independent quadrature cross-checks."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from jumpsignal import (
    DiscreteJumpGrid,
    HideLarge,
    HideSmall,
    LevyMarketSpec,
    NoSignal,
    build_grid,
    c_kappa_eta,
    eta_hat,
    mu_measure,
    v_eta,
)

# frozen oracles, rho=0.1 alpha=1.5 eps=0.01 unless stated
W1_SMALL = 0.169059892324149694196340487799       # nu(0.25, 0.75]
W2_SMALL = 0.067640791490305099257173907220       # nu(0.75, 1.5]
W3_SMALL = 0.163299316185545206546485604980       # nu(1.5, inf)
ETA_ABS_INT = 0.795989949685295963787583856801    # integral |eta| d nu
HS_ATOM_C2 = 0.141421356237309504880168872421     # HideSmall c=2 atom
HS_ATOM_C03 = 0.201007563051842415097874711313    # HideSmall c=0.3 atom
HL_ATOM_C2 = 0.059586206814532910217705838892     # HideLarge c=2 atom
Q20_W_FIRST = 0.426149532588869543000601245635   # q=20 grid, |e|=0.05 bin
Q20_W_LAST = 0.094682579882039078848272130938    # q=20 grid, |e|=5 tail bin
Q20_TOTAL = 2.529822128134703465599114835546     # q=20 grid intensity


def test_nu_density_closed_form(spec_small):
    # 0.1 * 0.25^(-1.5) = 0.8 exactly
    assert spec_small.nu_density(0.25) == pytest.approx(0.8, rel=1e-15)
    assert spec_small.nu_density(-0.25) == pytest.approx(0.8, rel=1e-15)
    vals = spec_small.nu_density(np.array([0.25, -0.25, 1.0]))
    assert vals == pytest.approx([0.8, 0.8, 0.1], rel=1e-15)
    with pytest.raises(ValueError):
        spec_small.nu_density(0.0)


def test_eta_cap(spec_small):
    assert spec_small.eta(0.5) == 0.5
    assert spec_small.eta(2.0) == 0.99
    assert spec_small.eta(-3.0) == -0.99
    out = spec_small.eta(np.array([-2.0, 0.1, 1.5]))
    assert np.array_equal(out, [-0.99, 0.1, 0.99])


def test_nu_interval_frozen(spec_small):
    assert spec_small.nu_interval(0.25, 0.75) == pytest.approx(W1_SMALL, rel=1e-14)
    assert spec_small.nu_interval(0.75, 1.5) == pytest.approx(W2_SMALL, rel=1e-14)
    assert spec_small.nu_interval(1.5, math.inf) == pytest.approx(W3_SMALL, rel=1e-14)


def test_nu_interval_against_quadrature(spec_small):
    val, err = quad(spec_small.nu_density, 0.3, 1.7)
    assert spec_small.nu_interval(0.3, 1.7) == pytest.approx(val, rel=1e-10)
    tail, err = quad(spec_small.nu_density, 0.5, np.inf)
    assert spec_small.nu_interval(0.5, math.inf) == pytest.approx(tail, rel=1e-9)


def test_nu_interval_validation(spec_small):
    with pytest.raises(ValueError):
        spec_small.nu_interval(0.0, 1.0)
    with pytest.raises(ValueError):
        spec_small.nu_interval(1.0, 0.5)


def test_eta_integrals(spec_small):
    assert spec_small.eta_integral() == 0.0
    assert spec_small.eta_abs_integral() == pytest.approx(ETA_ABS_INT, rel=1e-14)
    # independent quadrature split at the cap (and at the singular origin)
    inner, _ = quad(lambda e: e * spec_small.nu_density(e), 0.0, 0.99)
    outer, _ = quad(lambda e: 0.99 * spec_small.nu_density(e), 0.99, np.inf)
    assert spec_small.eta_abs_integral() == pytest.approx(
        2.0 * (inner + outer), rel=1e-8)


def test_c_kappa_eta(spec_small, spec_drift):
    assert c_kappa_eta(spec_small, 0.4) == 0.0
    # 0.3 / (0.4 * 0.2) = 3.75
    assert c_kappa_eta(spec_drift, 0.4) == pytest.approx(3.75, rel=1e-15)
    with pytest.raises(ValueError):
        c_kappa_eta(spec_small, 0.0)


def test_spec_validation():
    for kw in ({"rho": 0.0}, {"alpha": 1.0}, {"alpha": 2.0}, {"epsilon": 0.0},
               {"epsilon": 1.0}, {"sigma": 0.0}, {"s0": 0.0}, {"T": 0.0}):
        with pytest.raises(ValueError):
            LevyMarketSpec(**kw)


def test_gamma_by_scenario(spec_small):
    e = np.array([-2.0, -0.6, 0.5, 0.7, 1.0])
    assert np.array_equal(NoSignal().gamma(e, spec_small), np.zeros(5))
    hs = HideSmall(c=0.7).gamma(e, spec_small)
    assert np.array_equal(hs, [-0.99, 0.0, 0.0, 0.7, 0.99])
    hl = HideLarge(c=0.7).gamma(e, spec_small)
    assert np.array_equal(hl, [0.0, -0.6, 0.5, 0.7, 0.0])
    with pytest.raises(ValueError):
        HideSmall(c=0.0)
    with pytest.raises(ValueError):
        HideLarge(c=-1.0)


def test_mu_hidesmall(spec_small):
    mu = mu_measure(HideSmall(c=2.0), spec_small)
    assert mu.atom_value == 0.99
    assert mu.atom_mass == pytest.approx(HS_ATOM_C2, rel=1e-14)
    assert not mu.has_density
    # large-cutoff mass equals the nu tail beyond c
    assert mu.total_mass() == pytest.approx(
        2.0 * spec_small.nu_interval(2.0, math.inf), rel=1e-13)

    mu = mu_measure(HideSmall(c=0.3), spec_small)
    assert mu.atom_mass == pytest.approx(HS_ATOM_C03, rel=1e-14)
    assert mu.has_density and (mu.density_lo, mu.density_hi) == (0.3, 0.99)
    assert mu.total_mass() == pytest.approx(
        2.0 * spec_small.nu_interval(0.3, math.inf), rel=1e-13)


def test_mu_hidelarge(spec_small):
    mu = mu_measure(HideLarge(c=2.0), spec_small)
    assert mu.atom_mass == pytest.approx(HL_ATOM_C2, rel=1e-14)
    # revealed small jumps reach the origin: infinite activity survives
    assert mu.density_lo == 0.0 and mu.density_hi == 0.99
    assert math.isinf(mu.density_mass()) and math.isinf(mu.total_mass())

    # cutoff below the cap leaves no capped mark revealed
    mu = mu_measure(HideLarge(c=0.5), spec_small)
    assert mu.atom_mass == 0.0
    assert mu.density_hi == 0.5


def test_mu_nosignal_raises(spec_small):
    with pytest.raises(ValueError):
        mu_measure(NoSignal(), spec_small)


def test_eta_hat_and_v_eta(spec_small):
    hs = HideSmall(c=0.7)
    assert eta_hat(0.8, hs, spec_small) == 0.8
    assert eta_hat(-0.99, hs, spec_small) == -0.99
    assert v_eta(0.8, hs, spec_small) == 0.0
    for bad in (0.0, 0.3, 1.5):
        with pytest.raises(ValueError):
            eta_hat(bad, hs, spec_small)
    hl = HideLarge(c=0.7)
    assert eta_hat(0.5, hl, spec_small) == 0.5
    with pytest.raises(ValueError):
        v_eta(0.9, hl, spec_small)


def test_grid_small_points_and_weights(grid_small):
    assert np.array_equal(grid_small.points, [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    assert grid_small.q == 3
    assert np.array_equal(grid_small.signed_indices, [-3, -2, -1, 1, 2, 3])
    w = grid_small.weights
    assert w[3:] == pytest.approx([W1_SMALL, W2_SMALL, W3_SMALL], rel=1e-13)
    assert np.array_equal(w[:3], w[3:][::-1])
    # mass conservation: bins tile (e_1/2, inf) on each side
    assert grid_small.total_intensity == pytest.approx(
        2.0 * grid_small.spec.nu_interval(0.25, math.inf), rel=1e-13)
    assert np.array_equal(grid_small.eta_values(),
                          [-0.99, -0.99, -0.5, 0.5, 0.99, 0.99])


def test_grid_default_profile(spec_small):
    grid = build_grid(20, spec_small)
    assert grid.points[0] == -5.0 and grid.points[-1] == 5.0
    assert grid.weights[0] == pytest.approx(Q20_W_LAST, rel=1e-13)
    assert grid.weights[19] == pytest.approx(Q20_W_FIRST, rel=1e-13)
    assert grid.total_intensity == pytest.approx(Q20_TOTAL, rel=1e-13)


def test_grid_linear_layout(spec_small):
    grid = build_grid(3, spec_small, e_min=0.5, e_max=2.0, layout="linear")
    assert np.array_equal(grid.points[3:], [0.5, 1.25, 2.0])
    with pytest.raises(ValueError):
        build_grid(3, spec_small, layout="chebyshev")


def test_first_midpoint_and_split_index(grid_small):
    assert grid_small.first_midpoint() == 0.25
    # largest l with e_l < c on marks 0.5, 1, 2
    assert grid_small.split_index(0.5) == 0
    assert grid_small.split_index(0.500001) == 1
    assert grid_small.split_index(0.7) == 1
    assert grid_small.split_index(2.0) == 2
    assert grid_small.split_index(2.5) == 3
    with pytest.raises(ValueError):
        grid_small.split_index(0.0)


def test_signal_masks(grid_small):
    assert not grid_small.signal_mask(NoSignal()).any()
    hs = grid_small.signal_mask(HideSmall(c=0.7))
    assert np.array_equal(hs, [True, True, False, False, True, True])
    hl = grid_small.signal_mask(HideLarge(c=0.7))
    assert np.array_equal(hl, ~hs)
    g = grid_small.gamma_values(HideSmall(c=0.7))
    assert np.array_equal(g, [-0.99, -0.99, 0.0, 0.0, 0.99, 0.99])
    assert np.array_equal(grid_small.gamma_values(NoSignal()), np.zeros(6))


def test_grid_validation(spec_small):
    with pytest.raises(ValueError):
        build_grid(1, spec_small)
    with pytest.raises(ValueError):
        build_grid(3, spec_small, e_min=0.0, e_max=1.0)
    with pytest.raises(ValueError):
        build_grid(3, spec_small, e_min=2.0, e_max=1.0)
    pts = np.array([-2.0, -1.0, 0.5, 2.0])
    with pytest.raises(ValueError):
        DiscreteJumpGrid(points=pts, weights=np.ones(4), spec=spec_small)
    sym = np.array([-2.0, -0.5, 0.5, 2.0])
    with pytest.raises(ValueError):
        DiscreteJumpGrid(points=sym, weights=np.array([1.0, 1.0, 0.0, 1.0]),
                         spec=spec_small)
    with pytest.raises(ValueError):
        DiscreteJumpGrid(points=sym[1:], weights=np.ones(3), spec=spec_small)
