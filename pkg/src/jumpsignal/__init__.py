"""Exponential-utility portfolio optimization with jump signals.

Solves the investor's problem when the risky asset jumps and a signal
reveals part of each jump before it hits: builds the BSDE-with-jumps
drivers for the three information scenarios, solves the BSDE backward in
time by regression Monte Carlo, extracts the optimal trading strategy,
and measures the economic value of the signal as a function of the
information cutoff.
"""

from .levy_model import (
    LevyMarketSpec,
    NoSignal,
    HideSmall,
    HideLarge,
    SignalScenario,
    MuMeasure,
    DiscreteJumpGrid,
    build_grid,
    mu_measure,
    eta_hat,
    v_eta,
    c_kappa_eta,
)
from .drivers import (
    DriverContext,
    h_lambda,
    u_lambda_norm,
    f1_discrete,
    driver_f,
    driver_f_batch,
    p_star,
    penalized_driver_fm,
    penalized_driver_fm_batch,
    driver_bounds,
    local_lipschitz_constant,
    fm_exact_threshold,
    rho_m,
    phi_m,
    minimize_on_interval,
)
from .simulate import (
    TimeGrid,
    PathBatch,
    StrategyTable,
    simulate_batch,
    payoff_put,
    payoff_call,
    payoff_digital,
    payoff_terminal,
    wealth_forward,
    mc_expected_utility,
)
from .bsde_solver import (
    BasisPartition,
    StepRecord,
    BackwardSolution,
    MultiRunResult,
    fit_conditional_expectation,
    backward_step,
    solve,
    value_and_strategy,
    multi_run,
    make_driver_fn,
    constant_driver,
)

__version__ = "0.1.0"
