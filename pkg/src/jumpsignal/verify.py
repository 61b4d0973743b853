"""Executable checks tying the driver and scheme to their proved properties.

Each check samples its domain, counts violations, and emits a
CheckReport; a report passes iff no violation occurred. Statistical
checks (optimality, regression noise) always run on freshly seeded
batches, never on the batch the solution was trained on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .bsde_solver import BackwardSolution, make_driver_fn, solve, value_and_strategy
from .drivers import (
    DriverContext,
    driver_bounds,
    driver_f_batch,
    fm_exact_threshold,
    local_lipschitz_constant,
    penalized_driver_fm_batch,
)
from .levy_model import HideLarge, HideSmall, NoSignal
from .simulate import PathBatch, StrategyTable, mc_expected_utility, wealth_forward

__all__ = [
    "CheckReport",
    "check_driver_sandwich",
    "check_fm_monotone",
    "check_lipschitz_z",
    "check_scenario_limits",
    "check_comparison",
    "check_penalization",
    "check_martingale_optimality",
    "check_scheme_oracles",
    "check_y_bound",
    "calibrate_eps_reg",
    "format_reports",
]

_Z_RANGE = (-5.0, 5.0)
_U_RANGE = (-2.0, 2.0)
_M_RANGE = (1, 20)


@dataclass(frozen=True)
class CheckReport:
    name: str
    samples: int
    violations: int
    worst_margin: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: {status} ({self.samples} samples, "
                f"{self.violations} violations, worst margin {self.worst_margin:.3e}, "
                f"tol {self.tolerance:.3e})")


def _report(name, samples, margins, tol) -> CheckReport:
    margins = np.asarray(margins, dtype=float)
    violations = int(np.count_nonzero(margins < -tol))
    worst = float(np.min(margins)) if margins.size else 0.0
    return CheckReport(name=name, samples=samples, violations=violations,
                       worst_margin=worst, tolerance=tol, passed=violations == 0)


def _sample_zu(rng, n, nb):
    z = rng.uniform(*_Z_RANGE, size=n)
    u = rng.uniform(*_U_RANGE, size=(n, nb))
    return z, u


def check_driver_sandwich(n_samples: int, ctx: DriverContext, seed: int = 7,
                          fm_fn: Callable = penalized_driver_fm_batch,
                          tol: float = 1e-10) -> CheckReport:
    """Penalized driver stays between the affine lower and quadratic upper bound.

    ``fm_fn`` is swappable so the suite can prove it detects a corrupted
    driver (see the mutation self-test).
    """
    rng = np.random.default_rng(seed)
    nb = ctx.grid.points.size
    z, u = _sample_zu(rng, n_samples, nb)
    ms = rng.integers(_M_RANGE[0], _M_RANGE[1] + 1, size=n_samples)
    margins = np.empty(2 * n_samples)
    for j in range(n_samples):
        vals, _ = fm_fn(z[j:j + 1], u[j:j + 1], int(ms[j]), ctx)
        lo, hi = driver_bounds(z[j], u[j], ctx)
        margins[2 * j] = vals[0] - lo
        margins[2 * j + 1] = hi - vals[0]
    return _report("driver_sandwich", n_samples, margins, tol)


def check_fm_monotone(n_samples: int, ctx: DriverContext, seed: int = 11) -> CheckReport:
    """f_m is nondecreasing in the penalization level m."""
    rng = np.random.default_rng(seed)
    nb = ctx.grid.points.size
    z, u = _sample_zu(rng, n_samples, nb)
    ms = rng.integers(_M_RANGE[0], _M_RANGE[1], size=n_samples)
    margins = np.empty(n_samples)
    tol_scale = np.empty(n_samples)
    for j in range(n_samples):
        lo_val, _ = penalized_driver_fm_batch(z[j:j + 1], u[j:j + 1], int(ms[j]), ctx)
        hi_val, _ = penalized_driver_fm_batch(z[j:j + 1], u[j:j + 1], int(ms[j]) + 1, ctx)
        tol_scale[j] = max(1.0, abs(lo_val[0]), abs(hi_val[0]))
        margins[j] = (hi_val[0] - lo_val[0]) / tol_scale[j]
    return _report("fm_monotone", n_samples, margins, 1e-12)


def check_lipschitz_z(n_samples: int, ctx: DriverContext, seed: int = 13,
                      constant: Optional[float] = None, tol: float = 1e-10) -> CheckReport:
    """|f(z,u) - f(z',u)| <= K (1 + |z| + |z'|) |z - z'| with the stated K."""
    rng = np.random.default_rng(seed)
    nb = ctx.grid.points.size
    z1, u = _sample_zu(rng, n_samples, nb)
    z2 = rng.uniform(*_Z_RANGE, size=n_samples)
    K = local_lipschitz_constant(ctx) if constant is None else constant
    f1, _ = driver_f_batch(z1, u, ctx)
    f2, _ = driver_f_batch(z2, u, ctx)
    rhs = K * (1.0 + np.abs(z1) + np.abs(z2)) * np.abs(z1 - z2)
    margins = rhs - np.abs(f1 - f2)
    return _report("lipschitz_z", n_samples, margins, tol)


def check_scenario_limits(ctx_nosignal: DriverContext, n_samples: int = 1000,
                          seed: int = 17) -> CheckReport:
    """Degenerate cutoffs reproduce the no-signal driver exactly.

    Hiding everything below a cutoff beyond the last grid point, or
    everything above a cutoff below the first midpoint, leaves no signal
    bin; both drivers must then equal the no-signal driver bit for bit.
    """
    grid = ctx_nosignal.grid
    spec = grid.spec
    c_hi = float(grid.points[-1]) * 2.0
    c_lo = float(grid.first_midpoint()) * 0.5
    ctx_hs = DriverContext.build(spec, grid, HideSmall(c=c_hi), ctx_nosignal.lam,
                                 pi_lower=ctx_nosignal.pi_lower,
                                 pi_upper=ctx_nosignal.pi_upper,
                                 sigma_in_square=ctx_nosignal.sigma_in_square)
    ctx_hl = DriverContext.build(spec, grid, HideLarge(c=c_lo), ctx_nosignal.lam,
                                 pi_lower=ctx_nosignal.pi_lower,
                                 pi_upper=ctx_nosignal.pi_upper,
                                 sigma_in_square=ctx_nosignal.sigma_in_square)
    rng = np.random.default_rng(seed)
    z, u = _sample_zu(rng, n_samples, grid.points.size)
    f0, p0 = driver_f_batch(z, u, ctx_nosignal)
    margins = []
    for ctx in (ctx_hs, ctx_hl):
        f, p = driver_f_batch(z, u, ctx)
        # exact equality: margin 0 on agreement, negative otherwise
        agree = (f == f0) & (p == p0)
        margins.append(np.where(agree, 0.0, -1.0))
    return _report("scenario_limits", 2 * n_samples, np.concatenate(margins), 0.0)


def check_comparison(batch: PathBatch, f1_values, f2_values, driver1, driver2,
                     eps_reg: float, n_cells: int = 64, min_count: int = 50,
                     design: str = "const") -> CheckReport:
    """Ordered terminals and ordered drivers give ordered Y_0 within eps_reg.

    Caller guarantees f2 >= f1 pathwise and driver2 >= driver1 pointwise;
    this is validated for the terminals.
    """
    F1 = np.asarray(f1_values, dtype=float)
    F2 = np.asarray(f2_values, dtype=float)
    if np.any(F2 < F1):
        raise ValueError("terminal ordering violated: need F2 >= F1 pathwise")
    y1 = solve(batch, F1, driver1, n_cells=n_cells, min_count=min_count, design=design).y0
    y2 = solve(batch, F2, driver2, n_cells=n_cells, min_count=min_count, design=design).y0
    margin = (y2 - y1) + eps_reg
    return _report("comparison", 1, [margin], 0.0)


def check_penalization(batch: PathBatch, f_values, ctx: DriverContext,
                       eps_reg: float, m_values: Sequence[int] = tuple(range(1, 21)),
                       n_cells: int = 64, min_count: int = 50) -> CheckReport:
    """Y_0 under f_m is nondecreasing in m and hits Y_0 under f exactly
    once every truncation is inactive along the solved fields."""
    F = np.asarray(f_values, dtype=float)
    sol_f = solve(batch, F, ctx, n_cells=n_cells, min_count=min_count)
    y0s = [solve(batch, F, ctx, n_cells=n_cells, min_count=min_count, m=int(m)).y0
           for m in m_values]
    margins = [y0s[j + 1] - y0s[j] + eps_reg for j in range(len(y0s) - 1)]

    thresh = 0.0
    for rec in sol_f.steps:
        z = rec.z_coef[0]
        u = rec.u_coef[:, 0, :].T
        for j in range(z.size):
            thresh = max(thresh, fm_exact_threshold(z[j], u[j], ctx))
    m_star = int(math.floor(thresh)) + 1
    y0_exact = solve(batch, F, ctx, n_cells=n_cells, min_count=min_count, m=m_star).y0
    margins.append(1e-12 - abs(y0_exact - sol_f.y0))
    return _report("penalization", len(margins), margins, 0.0)


def _perturbed_tables(base: StrategyTable, ctx: DriverContext,
                      deltas: Sequence[float]) -> List[StrategyTable]:
    """Optimal table shifted by each delta (clamped), plus box constants."""
    tables = []
    lo, hi = -ctx.pi_lower, ctx.pi_upper

    def shifted(d):
        def fn(k, s):
            p0, p_sig = base.fn(k, s)
            return np.clip(p0 + d, lo, hi), np.clip(p_sig + d, lo, hi)
        return StrategyTable(scenario=base.scenario, pi_lower=ctx.pi_lower,
                             pi_upper=ctx.pi_upper, fn=fn)

    for d in deltas:
        tables.append(shifted(d))
    for const in (0.0, hi, lo):
        tables.append(StrategyTable.constant(base.scenario, const,
                                             pi_lower=ctx.pi_lower,
                                             pi_upper=ctx.pi_upper))
    return tables


def check_martingale_optimality(fresh_batch: PathBatch, sol: BackwardSolution,
                                ctx: DriverContext, payoff_fn: Callable,
                                x: float, eps_reg: float,
                                deltas: Sequence[float] = (0.05, -0.05, 0.2, -0.2),
                                ) -> CheckReport:
    """Extracted strategy beats perturbations on a fresh batch, MC-wise.

    Also ties the simulated utility of the extracted strategy back to
    -exp(-lam (x - Y_0)) within 3 (stderr + eps_reg).
    """
    if fresh_batch.seed == sol.batch.seed:
        raise ValueError("optimality must be checked on a fresh seed")
    value, table = value_and_strategy(sol, x, ctx)
    F = payoff_fn(fresh_batch.S[-1])
    lam = ctx.lam

    X_star = wealth_forward(fresh_batch, table, x)
    util_star = -np.exp(-lam * (X_star - F))
    mean_star = float(np.mean(util_star))

    margins = []
    for pert in _perturbed_tables(table, ctx, deltas):
        X_p = wealth_forward(fresh_batch, pert, x)
        util_p = -np.exp(-lam * (X_p - F))
        diff = util_star - util_p
        se = float(np.std(diff, ddof=1) / math.sqrt(diff.size))
        margins.append(float(np.mean(diff)) + 3.0 * se)

    _, se_star = mc_expected_utility(X_star, F, lam)
    margins.append(3.0 * (se_star + eps_reg) - abs(mean_star - value))
    return _report("martingale_optimality", len(margins), margins, 0.0)


def check_scheme_oracles(batch: PathBatch, f_values, c0: float = 0.05,
                         n_cells: int = 64, min_count: int = 50) -> CheckReport:
    """Exactly solvable drivers: zero gives mean(F), a constant telescopes.

    Both must hold to 1e-12 relative to the payoff scale; the constant
    case adds c0 T through the time sum.
    """
    from .bsde_solver import constant_driver

    F = np.asarray(f_values, dtype=float)
    mean_f = float(np.mean(F))
    scale = max(1.0, abs(mean_f))
    T = batch.time_grid.T
    zero = constant_driver(0.0)
    y0_zero = solve(batch, F, zero, n_cells=n_cells, min_count=min_count).y0
    y0_const = solve(batch, F, constant_driver(c0), n_cells=n_cells,
                     min_count=min_count).y0
    margins = [1e-12 * scale - abs(y0_zero - mean_f),
               1e-12 * scale - abs(y0_const - (mean_f + c0 * T))]
    return _report("scheme_oracles", 2, margins, 0.0)


def check_y_bound(sol: BackwardSolution, f_sup: float, ctx: DriverContext,
                  eps_reg: float) -> CheckReport:
    """Backward values respect the a priori bound.

    |Ybar_k| <= (1/lam) log(e^{lam ||F||_inf} + 1) + slack (T - t_k)
    + eps_reg, with slack the magnitude of the driver's value at the
    origin taken from the affine lower bound.
    """
    lam = ctx.lam
    nb = ctx.grid.points.size
    lo, _ = driver_bounds(0.0, np.zeros(nb), ctx)
    slack = -lo
    base = math.log(math.exp(lam * f_sup) + 1.0) / lam
    times = sol.batch.time_grid.times
    T = sol.batch.time_grid.T
    margins = []
    for k in range(times.size):
        bound = base + slack * (T - times[k]) + eps_reg
        margins.append(bound - float(np.max(np.abs(sol.y_paths[k]))))
    return _report("y_bound", len(margins), margins, 0.0)


def calibrate_eps_reg(batches: Sequence[PathBatch], payoff_values: Sequence[np.ndarray],
                      ctx: DriverContext, n_cells: int = 64, min_count: int = 50,
                      design: str = "const") -> float:
    """Regression-noise tolerance from the exactly solvable zero driver.

    Three times the worst |Y_0 - mean(F)| under the zero driver, plus
    the seed spread of Y_0 under the real driver.
    """
    zero = make_driver_fn(lambda Z, U: (np.zeros(np.shape(Z)[0]),
                                        np.zeros(np.shape(Z)[0])))
    worst = 0.0
    y0s = []
    for b, F in zip(batches, payoff_values):
        y_zero = solve(b, F, zero, n_cells=n_cells, min_count=min_count,
                       design=design).y0
        worst = max(worst, abs(y_zero - float(np.mean(F))))
        y0s.append(solve(b, F, ctx, n_cells=n_cells, min_count=min_count,
                         design=design).y0)
    spread = max(y0s) - min(y0s) if len(y0s) > 1 else 0.0
    return 3.0 * worst + spread


def format_reports(reports: Sequence[CheckReport]) -> str:
    """One line per check, sorted by name so merged output is deterministic."""
    return "\n".join(r.line() for r in sorted(reports, key=lambda r: r.name))
