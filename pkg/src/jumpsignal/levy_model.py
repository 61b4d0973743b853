"""Levy market model, jump signals, and the jump-space discretization.

The risky asset carries a Brownian part and a pure-jump part with Levy
measure nu(de) = rho |e|^(-alpha) de, alpha in (1, 2). The relative jump
size is the capped map eta (so prices stay positive), and the investor
receives a signal gamma(e) about each incoming jump mark e:

* ``NoSignal``      gamma = 0, nothing is revealed,
* ``HideSmall(c)``  gamma(e) = eta(e) for |e| >= c, small jumps hidden,
* ``HideLarge(c)``  gamma(e) = eta(e) for |e| <= c, large jumps hidden.

The image measure mu = nu o gamma^(-1) and the disintegration kernel are
available in closed form for both scenarios; the conditional mean of eta
given a signal value g is g itself and its conditional variance is zero,
because eta is constant on every conditioning set.

``build_grid`` produces the finite-activity surrogate of nu used by the
simulation and the backward solver: symmetric marks e_{-q}..e_q (0
excluded) with midpoint-bin weights integrating the exact density, the
outermost bins absorbing the tails up to infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "LevyMarketSpec",
    "NoSignal",
    "HideSmall",
    "HideLarge",
    "SignalScenario",
    "MuMeasure",
    "DiscreteJumpGrid",
    "build_grid",
    "mu_measure",
    "eta_hat",
    "v_eta",
    "c_kappa_eta",
]


@dataclass(frozen=True)
class LevyMarketSpec:
    """Continuous market model parameters.

    Parameters
    ----------
    rho : float
        Scale of the jump density, rho > 0.
    alpha : float
        Tail exponent, must lie in (1, 2) so that eta is nu-integrable.
    epsilon : float
        Jump cap in (0, 1); relative jumps are clipped to +-(1 - epsilon).
    kappa : float
        Drift of the risky asset per unit time.
    sigma : float
        Volatility, sigma > 0.
    s0 : float
        Initial price, s0 > 0.
    T : float
        Horizon in years.
    """

    rho: float = 0.1
    alpha: float = 1.5
    epsilon: float = 0.01
    kappa: float = 0.0
    sigma: float = 0.2
    s0: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must be in (1, 2), got {self.alpha}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.s0 > 0:
            raise ValueError(f"s0 must be > 0, got {self.s0}")
        if not self.T > 0:
            raise ValueError(f"T must be > 0, got {self.T}")

    def nu_density(self, e):
        """Density rho |e|^(-alpha) of the Levy measure. Undefined at e = 0."""
        e = np.asarray(e, dtype=float)
        if np.any(e == 0.0):
            raise ValueError("nu has no density value at e = 0")
        out = self.rho * np.abs(e) ** (-self.alpha)
        return out if out.ndim else float(out)

    def eta(self, e):
        """Capped relative jump size: identity on [-(1-eps), 1-eps], clipped outside."""
        cap = 1.0 - self.epsilon
        out = np.clip(np.asarray(e, dtype=float), -cap, cap)
        return out if out.ndim else float(out)

    def nu_interval(self, a, b):
        """Mass of nu on the one-sided interval (a, b], 0 < a < b <= inf.

        Uses the antiderivative rho e^(1-alpha) / (1 - alpha); b may be inf.
        """
        if not 0.0 < a < b:
            raise ValueError(f"need 0 < a < b, got ({a}, {b})")
        am1 = self.alpha - 1.0
        upper = 0.0 if math.isinf(b) else b ** (-am1)
        return self.rho * (a ** (-am1) - upper) / am1

    def eta_integral(self) -> float:
        """Integral of eta against nu; zero since eta is odd and nu symmetric."""
        return 0.0

    def eta_abs_integral(self) -> float:
        """Integral of |eta| against nu, in closed form."""
        cap = 1.0 - self.epsilon
        # split at the cap: |e| below, constant cap above
        inner = self.rho * cap ** (2.0 - self.alpha) / (2.0 - self.alpha)
        outer = cap * self.nu_interval(cap, math.inf)
        return 2.0 * (inner + outer)


@dataclass(frozen=True)
class NoSignal:
    """No information scenario: gamma is identically zero."""

    def gamma(self, e, spec: LevyMarketSpec):
        out = np.zeros_like(np.asarray(e, dtype=float))
        return out if out.ndim else 0.0

    def label(self) -> str:
        return "no-signal"


@dataclass(frozen=True)
class HideSmall:
    """Signal reveals eta(e) only for jumps with |e| >= c."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"cutoff c must be > 0, got {self.c}")

    def gamma(self, e, spec: LevyMarketSpec):
        e = np.asarray(e, dtype=float)
        out = np.where(np.abs(e) >= self.c, spec.eta(e), 0.0)
        return out if out.ndim else float(out)

    def label(self) -> str:
        return "hide-small"


@dataclass(frozen=True)
class HideLarge:
    """Signal reveals eta(e) only for jumps with |e| <= c."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"cutoff c must be > 0, got {self.c}")

    def gamma(self, e, spec: LevyMarketSpec):
        e = np.asarray(e, dtype=float)
        out = np.where(np.abs(e) <= self.c, spec.eta(e), 0.0)
        return out if out.ndim else float(out)

    def label(self) -> str:
        return "hide-large"


SignalScenario = Union[NoSignal, HideSmall, HideLarge]


@dataclass(frozen=True)
class MuMeasure:
    """Closed-form description of the image measure mu = nu o gamma^(-1).

    mu consists of two symmetric atoms at +-(1 - epsilon) plus, possibly,
    the nu-density restricted to a symmetric pair of intervals
    +-(density_lo, density_hi].
    """

    atom_value: float
    atom_mass: float
    density_lo: float  # 0 means the density part reaches down to the origin
    density_hi: float  # <= density_lo means no density part
    spec: LevyMarketSpec

    @property
    def has_density(self) -> bool:
        return self.density_hi > self.density_lo

    def density_mass(self) -> float:
        """nu-mass of one density interval; inf if it touches the origin."""
        if not self.has_density:
            return 0.0
        if self.density_lo == 0.0:
            return math.inf
        return self.spec.nu_interval(self.density_lo, self.density_hi)

    def total_mass(self) -> float:
        return 2.0 * self.atom_mass + 2.0 * self.density_mass()


def mu_measure(scenario: SignalScenario, spec: LevyMarketSpec) -> MuMeasure:
    """Closed-form mu for a signal scenario.

    Raises
    ------
    ValueError
        For ``NoSignal``: mu lives on gamma(R) minus {0}, which is empty.
    """
    cap = 1.0 - spec.epsilon
    am1 = spec.alpha - 1.0
    if isinstance(scenario, HideSmall):
        c = scenario.c
        atom = spec.rho * max(c, cap) ** (-am1) / am1
        if c < cap:
            return MuMeasure(cap, atom, c, cap, spec)
        return MuMeasure(cap, atom, 0.0, 0.0, spec)
    if isinstance(scenario, HideLarge):
        c = scenario.c
        atom = spec.rho * (cap ** (-am1) - max(c, cap) ** (-am1)) / am1
        return MuMeasure(cap, atom, 0.0, min(c, cap), spec)
    raise ValueError("mu is undefined for the no-signal scenario")


def _check_signal_value(g: float, scenario: SignalScenario, spec: LevyMarketSpec) -> None:
    cap = 1.0 - spec.epsilon
    tol = 1e-12
    if isinstance(scenario, HideSmall):
        lo = min(scenario.c, cap)
        ok = lo - tol <= abs(g) <= cap + tol and g != 0.0
    elif isinstance(scenario, HideLarge):
        ok = 0.0 < abs(g) <= min(scenario.c, cap) + tol
    else:
        ok = False
    if not ok:
        raise ValueError(f"signal value {g} is outside gamma's range for {scenario}")


def eta_hat(g: float, scenario: SignalScenario, spec: LevyMarketSpec) -> float:
    """Conditional mean of eta given signal value g.

    In both scenarios eta is constant (equal to g) on each conditioning
    set {gamma = g}: the atoms at +-(1 - epsilon) collect exactly the
    capped marks, and every other signal value is a Dirac point.
    """
    _check_signal_value(g, scenario, spec)
    return float(g)


def v_eta(g: float, scenario: SignalScenario, spec: LevyMarketSpec) -> float:
    """Conditional variance of eta given signal value g; always zero here."""
    _check_signal_value(g, scenario, spec)
    return 0.0


def c_kappa_eta(spec: LevyMarketSpec, lam: float) -> float:
    """Risk-premium constant (kappa - integral of eta d nu) / (lam * sigma)."""
    if lam == 0.0:
        raise ValueError("lam must be nonzero")
    if spec.sigma == 0.0:
        raise ValueError("sigma must be nonzero")
    return (spec.kappa - spec.eta_integral()) / (lam * spec.sigma)


@dataclass(frozen=True)
class DiscreteJumpGrid:
    """Finite-activity surrogate of nu on symmetric marks.

    ``points`` holds the 2q marks in increasing order
    (-e_q, .., -e_1, e_1, .., e_q); ``weights`` the matching bin masses
    nu_i. Bin i covers ((e_{i-1}+e_i)/2, (e_i+e_{i+1})/2] with e_0 = 0
    and e_{q+1} = inf, so the innermost bins start at e_1 / 2 and the
    outermost integrate the exact tails.
    """

    points: np.ndarray
    weights: np.ndarray
    spec: LevyMarketSpec

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.ndim != 1 or pts.size % 2 or pts.size < 4:
            raise ValueError("points must be a flat symmetric array, >= 2 per side")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        q = pts.size // 2
        if not np.allclose(pts[:q][::-1], -pts[q:], rtol=0, atol=0):
            raise ValueError("grid points must be symmetric: e_{-i} = -e_i")
        if np.any(pts[q:] <= 0):
            raise ValueError("positive-side points must be > 0 (e_0 = 0 excluded)")
        if w.shape != pts.shape or np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be positive, finite, aligned with points")

    @property
    def q(self) -> int:
        return self.points.size // 2

    @property
    def signed_indices(self) -> np.ndarray:
        q = self.q
        return np.concatenate([np.arange(-q, 0), np.arange(1, q + 1)])

    @property
    def total_intensity(self) -> float:
        return float(np.sum(self.weights))

    def eta_values(self) -> np.ndarray:
        return self.spec.eta(self.points)

    def first_midpoint(self) -> float:
        """Smallest positive bin edge e_1 / 2."""
        return float(self.points[self.q]) / 2.0

    def split_index(self, c: float) -> int:
        """Largest index l with e_l < c (0 if c <= e_1, q if c > e_q)."""
        if not c > 0:
            raise ValueError(f"cutoff must be > 0, got {c}")
        pos = self.points[self.q:]
        return int(np.searchsorted(pos, c, side="left"))

    def signal_mask(self, scenario: SignalScenario) -> np.ndarray:
        """Boolean mask of the bins whose jumps emit a nonzero signal."""
        q = self.q
        absi = np.abs(self.signed_indices)
        if isinstance(scenario, NoSignal):
            return np.zeros(2 * q, dtype=bool)
        ell = self.split_index(scenario.c)
        if isinstance(scenario, HideSmall):
            return absi > ell
        return absi <= ell

    def gamma_values(self, scenario: SignalScenario) -> np.ndarray:
        """Signal value attached to each bin: eta(e_i) on signal bins, else 0."""
        return np.where(self.signal_mask(scenario), self.eta_values(), 0.0)


def build_grid(
    q: int,
    spec: LevyMarketSpec,
    e_min: float = 0.05,
    e_max: float = 5.0,
    layout: str = "geometric",
) -> DiscreteJumpGrid:
    """Build the symmetric jump grid with midpoint-bin weights.

    Parameters
    ----------
    q : int
        Marks per side, q >= 2.
    e_min, e_max : float
        First and last positive marks e_1 and e_q.
    layout : str
        "geometric" (default; resolves the |e|^(-alpha) singularity) or
        "linear".
    """
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    if not 0 < e_min < e_max:
        raise ValueError(f"need 0 < e_min < e_max, got ({e_min}, {e_max})")
    if layout == "geometric":
        pos = np.geomspace(e_min, e_max, q)
    elif layout == "linear":
        pos = np.linspace(e_min, e_max, q)
    else:
        raise ValueError(f"unknown grid layout {layout!r}")
    if np.any(np.diff(pos) <= 0):
        raise ValueError("grid layout produced non-increasing points")

    # midpoint edges: m_1 = e_1/2 (e_0 = 0), m_{q+1} = inf
    edges = np.empty(q + 1)
    edges[0] = pos[0] / 2.0
    edges[1:-1] = 0.5 * (pos[:-1] + pos[1:])
    edges[-1] = math.inf
    w_pos = np.array([spec.nu_interval(a, b) for a, b in zip(edges[:-1], edges[1:])])

    points = np.concatenate([-pos[::-1], pos])
    weights = np.concatenate([w_pos[::-1], w_pos])
    return DiscreteJumpGrid(points=points, weights=weights, spec=spec)
