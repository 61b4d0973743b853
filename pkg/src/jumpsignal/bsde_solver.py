"""Backward regression scheme for the jump BSDE.

Time-discrete backward iteration on simulated paths: starting from
Ybar_n = F, each step regresses conditional expectations on a local
basis over the current price and applies the driver,

    Zbar_k  = E[Ybar_{k+1} dW_k | S_k] / dt_k,
    Ubar_k(i) = E[Ybar_{k+1} dNtilde_k(i) | S_k] / (nu_i dt_k),
    Ybar_k  = E[Ybar_{k+1} | S_k] + dt_k f(Zbar_k, Ubar_k),

with conditional expectations replaced by least-squares projections on
per-step equiprobable quantile cells of the S sample (constant per cell
by default, optionally constant+linear). The t_0 regressor is constant
so the last projection is a plain mean and Y_0 = mean(Ybar_0).

With the constant design the regressed fields are cell-constant, so the
driver is evaluated once per cell and scattered back, which keeps the
driver cost independent of the path count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .drivers import DriverContext, driver_f_batch, penalized_driver_fm_batch
from .simulate import PathBatch, StrategyTable

__all__ = [
    "BasisPartition",
    "StepRecord",
    "BackwardSolution",
    "MultiRunResult",
    "fit_conditional_expectation",
    "backward_step",
    "solve",
    "value_and_strategy",
    "multi_run",
    "make_driver_fn",
    "constant_driver",
]

_DESIGNS = ("const", "const-linear")


@dataclass(frozen=True, eq=False)
class BasisPartition:
    """Equiprobable quantile cells on one step's price sample.

    edges are the interior cell boundaries (strictly increasing); a
    price lands in cell ``#edges <= s`` so equal prices always share a
    cell. Cells below the minimum path count are merged with their
    smaller neighbor until every cell is populated.
    """

    edges: np.ndarray
    design: str
    counts: np.ndarray

    def __post_init__(self):
        if self.design not in _DESIGNS:
            raise ValueError(f"design must be one of {_DESIGNS}, got {self.design!r}")
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or np.any(np.diff(e) <= 0):
            raise ValueError("edges must be a strictly increasing 1d array")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    @property
    def n_cells(self) -> int:
        return self.edges.size + 1

    def assign(self, s) -> np.ndarray:
        return np.searchsorted(self.edges, np.asarray(s, dtype=float), side="right")

    @classmethod
    def from_sample(cls, s, n_cells: int = 64, min_count: int = 50,
                    design: str = "const") -> "BasisPartition":
        s = np.asarray(s, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("sample must be a nonempty 1d array")
        if n_cells < 1 or min_count < 1:
            raise ValueError(f"bad partition config ({n_cells} cells, min {min_count})")
        edges = np.unique(np.quantile(s, np.arange(1, n_cells) / n_cells))
        while True:
            ids = np.searchsorted(edges, s, side="right")
            counts = np.bincount(ids, minlength=edges.size + 1)
            if edges.size == 0 or counts.min() >= min(min_count, s.size):
                break
            j = int(np.argmin(counts))
            if j == 0:
                drop = 0
            elif j == edges.size:
                drop = edges.size - 1
            else:
                # merge toward the smaller neighbor, ties to the left
                drop = j - 1 if counts[j - 1] <= counts[j + 1] else j
            edges = np.delete(edges, drop)
        return cls(edges=edges, design=design, counts=counts)


def _cell_sums(ids: np.ndarray, n_cells: int, rows: np.ndarray) -> np.ndarray:
    """Per-cell sums of each row; rows (m, n_paths) -> (m, n_cells)."""
    return np.stack([np.bincount(ids, weights=r, minlength=n_cells) for r in rows])


def _fit_cells(ids, partition, s, targets):
    """Least-squares coefficients per cell.

    targets (m, n_paths). Returns (coef, s_centers, n_singular): coef
    (m, 2, n_cells) holds value-at-center and slope in (s - center),
    where center is the in-cell mean of s; the constant design has zero
    slope. Singular in-cell designs fall back to the mean.
    """
    nc = partition.n_cells
    counts = np.maximum(partition.counts, 1)
    means = _cell_sums(ids, nc, targets) / counts
    m = targets.shape[0]
    coef = np.zeros((m, 2, nc))
    coef[:, 0, :] = means
    s_centers = np.bincount(ids, weights=s, minlength=nc) / counts
    n_singular = 0
    if partition.design == "const-linear":
        ds = s - s_centers[ids]
        var = np.bincount(ids, weights=ds * ds, minlength=nc) / counts
        cov = _cell_sums(ids, nc, targets * ds) / counts
        ok = var > 1e-24 * np.maximum(s_centers, 1.0) ** 2
        n_singular = int(np.count_nonzero(~ok))
        coef[:, 1, :] = np.where(ok, cov / np.where(ok, var, 1.0), 0.0)
    return coef, s_centers, n_singular


def _eval_cells(coef, ids, s, s_centers):
    """Evaluate fitted coefficients at query points; (m, n_points).

    The centering comes from the training sample, so fresh queries are
    evaluated with the same affine map that was fitted.
    """
    return coef[:, 0, ids] + coef[:, 1, ids] * (s - s_centers[ids])


def fit_conditional_expectation(targets, regressor, partition: BasisPartition) -> np.ndarray:
    """Projection of targets on the cell design, evaluated on the sample.

    targets may be (n_paths,) or (m, n_paths); the predictor has the
    same shape. The partition must have been built from this sample.
    """
    t = np.asarray(targets, dtype=float)
    s = np.asarray(regressor, dtype=float)
    squeeze = t.ndim == 1
    rows = t[None, :] if squeeze else t
    if rows.shape[-1] != s.size:
        raise ValueError(f"targets {t.shape} not aligned with regressor ({s.size},)")
    ids = partition.assign(s)
    coef, s_centers, _ = _fit_cells(ids, partition, s, rows)
    out = _eval_cells(coef, ids, s, s_centers)
    return out[0] if squeeze else out


DriverFn = Callable[[np.ndarray, np.ndarray], tuple]


def make_driver_fn(driver: Union[DriverContext, DriverFn],
                   m: Optional[int] = None) -> DriverFn:
    """Normalize a driver spec to a callable (Z, U) -> (values, p0)."""
    if isinstance(driver, DriverContext):
        if m is None:
            return lambda Z, U: driver_f_batch(Z, U, driver)
        return lambda Z, U: penalized_driver_fm_batch(Z, U, m, driver)
    if m is not None:
        raise ValueError("penalization level m applies to driver contexts only")
    return driver


def constant_driver(c0: float) -> DriverFn:
    def fn(Z, U):
        n = np.asarray(Z).shape[0]
        return np.full(n, float(c0)), np.zeros(n)
    return fn


@dataclass(eq=False)
class StepRecord:
    """Per-cell regression output at one time step."""

    partition: BasisPartition
    cell_ids: np.ndarray          # (n_paths,) int32
    s_centers: np.ndarray         # (n_cells,) in-cell price means
    y_coef: np.ndarray            # (2, n_cells)
    z_coef: np.ndarray            # (2, n_cells)
    u_coef: np.ndarray            # (n_bins, 2, n_cells)
    f_cells: np.ndarray           # (n_cells,) driver values
    p_cells: np.ndarray           # (n_cells,) no-signal argmin
    n_singular: int


def _step_core(y_next, batch, k, partition, driver_fn):
    dtk = float(batch.time_grid.dt[k])
    s = batch.S[k]
    ids = partition.assign(s).astype(np.int32)
    nu = batch.grid.weights
    nb = nu.size

    targets = np.empty((2 + nb, y_next.size))
    targets[0] = y_next
    targets[1] = y_next * batch.dW[k]
    targets[2:] = y_next[None, :] * batch.dN_compensated(k)
    coef, s_centers, n_singular = _fit_cells(ids, partition, s, targets)
    y_coef = coef[0]
    z_coef = coef[1] / dtk
    u_coef = coef[2:] / (nu[:, None, None] * dtk)

    try:
        if partition.design == "const":
            f_cells, p_cells = driver_fn(z_coef[0], u_coef[:, 0, :].T)
            y_vals = y_coef[0, ids] + dtk * f_cells[ids]
        else:
            fields = _eval_cells(np.concatenate([y_coef[None], z_coef[None], u_coef]),
                                 ids, s, s_centers)
            f_path, p_path = driver_fn(fields[1], fields[2:].T)
            y_vals = fields[0] + dtk * f_path
            f_cells = np.bincount(ids, weights=f_path, minlength=partition.n_cells) \
                / np.maximum(partition.counts, 1)
            p_cells = np.bincount(ids, weights=p_path, minlength=partition.n_cells) \
                / np.maximum(partition.counts, 1)
    except (ValueError, ArithmeticError) as exc:
        raise type(exc)(f"driver failed at step {k}: {exc}") from exc

    rec = StepRecord(partition=partition, cell_ids=ids, s_centers=s_centers,
                     y_coef=y_coef, z_coef=z_coef, u_coef=u_coef,
                     f_cells=np.asarray(f_cells), p_cells=np.asarray(p_cells),
                     n_singular=n_singular)
    return y_vals, rec


def backward_step(y_next, batch: PathBatch, k: int, partition: BasisPartition,
                  driver: Union[DriverContext, DriverFn], m: Optional[int] = None):
    """One scheme step; returns per-path (Ybar_k, Zbar_k, Ubar_k).

    Ubar_k has shape (n_paths, n_bins).
    """
    y_next = np.asarray(y_next, dtype=float)
    if y_next.shape != (batch.n_paths,):
        raise ValueError(f"y_next shape {y_next.shape} != ({batch.n_paths},)")
    driver_fn = make_driver_fn(driver, m)
    y_vals, rec = _step_core(y_next, batch, k, partition, driver_fn)
    zu = _eval_cells(np.concatenate([rec.z_coef[None], rec.u_coef]),
                     rec.cell_ids, batch.S[k], rec.s_centers)
    return y_vals, zu[0], zu[1:].T


@dataclass(eq=False)
class BackwardSolution:
    """Full backward pass: per-step cell tables plus per-path values.

    Per-path Zbar/Ubar arrays are reconstructed on demand from the cell
    tables, which keeps the stored solution small at desk scale.
    """

    batch: PathBatch
    steps: List[StepRecord]
    y_paths: np.ndarray           # (n_steps + 1, n_paths), y_paths[-1] = F
    y0: float
    design: str

    def y_path(self, k: int) -> np.ndarray:
        return self.y_paths[k]

    def z_path(self, k: int) -> np.ndarray:
        rec = self.steps[k]
        out = _eval_cells(rec.z_coef[None], rec.cell_ids, self.batch.S[k], rec.s_centers)
        return out[0]

    def u_path(self, k: int) -> np.ndarray:
        rec = self.steps[k]
        out = _eval_cells(rec.u_coef, rec.cell_ids, self.batch.S[k], rec.s_centers)
        return out.T

    @property
    def n_singular(self) -> int:
        return sum(rec.n_singular for rec in self.steps)

    def abs_y_max(self) -> float:
        return float(np.max(np.abs(self.y_paths)))


def solve(batch: PathBatch, f_values, driver: Union[DriverContext, DriverFn],
          n_cells: int = 64, min_count: int = 50, design: str = "const",
          m: Optional[int] = None, clip_bound: Optional[float] = None) -> BackwardSolution:
    """Run the scheme from Ybar_n = F down to Y_0.

    ``driver`` is a driver context (optionally penalized at level m) or
    any callable (Z, U) -> (values, argmin). ``clip_bound`` optionally
    clips Ybar between steps at a known a priori bound; off by default
    so bound violations stay visible.
    """
    F = np.asarray(f_values, dtype=float)
    if F.shape != (batch.n_paths,):
        raise ValueError(f"terminal values shape {F.shape} != ({batch.n_paths},)")
    driver_fn = make_driver_fn(driver, m)
    n_steps = batch.time_grid.n_steps

    y_paths = np.empty((n_steps + 1, batch.n_paths))
    y_paths[n_steps] = F
    steps: List[Optional[StepRecord]] = [None] * n_steps
    y = F
    for k in range(n_steps - 1, -1, -1):
        partition = BasisPartition.from_sample(batch.S[k], n_cells=n_cells,
                                               min_count=min_count, design=design)
        y, rec = _step_core(y, batch, k, partition, driver_fn)
        if clip_bound is not None:
            y = np.clip(y, -clip_bound, clip_bound)
        y_paths[k] = y
        steps[k] = rec
    return BackwardSolution(batch=batch, steps=list(steps), y_paths=y_paths,
                            y0=float(np.mean(y_paths[0])), design=design)


def value_and_strategy(sol: BackwardSolution, x: float,
                       ctx: DriverContext) -> tuple:
    """Certainty-equivalent value and the extracted optimal positions.

    V = -exp(-lam (x - Y_0)). The strategy trades the inner argmin when
    no signal arrives and the boundary position on signal bins.
    """
    lam = ctx.lam
    arg = -lam * (x - sol.y0)
    if arg > 700.0:
        raise ValueError("value exponent exceeds the overflow guard")
    value = -math.exp(arg)

    steps = sol.steps
    design = sol.design
    boundary = ctx.boundary_p

    def fn(k, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        rec = steps[k]
        ids = rec.partition.assign(s)
        if design == "const":
            p0 = rec.p_cells[ids]
        else:
            flds = np.concatenate([rec.z_coef[None], rec.u_coef])
            zu = _eval_cells(flds, ids, s, rec.s_centers)
            _, p0 = driver_f_batch(zu[0], zu[1:].T, ctx)
        p_sig = np.broadcast_to(boundary[:, None], (boundary.size, s.size))
        return p0, p_sig

    table = StrategyTable(scenario=ctx.scenario, pi_lower=ctx.pi_lower,
                          pi_upper=ctx.pi_upper, fn=fn)
    return value, table


@dataclass(frozen=True)
class MultiRunResult:
    y0s: np.ndarray
    mean: float
    spread: float


def multi_run(batches: Sequence[PathBatch], payoff_values: Sequence[np.ndarray],
              driver: Union[DriverContext, DriverFn], n_cells: int = 64,
              min_count: int = 50, design: str = "const",
              m: Optional[int] = None) -> MultiRunResult:
    """Solve on several independently seeded batches; Y_0 mean and max-min spread."""
    if len(batches) < 2:
        raise ValueError("multi_run needs at least two batches")
    if len(payoff_values) != len(batches):
        raise ValueError("payoff values must align with batches")
    y0s = np.array([
        solve(b, f, driver, n_cells=n_cells, min_count=min_count,
              design=design, m=m).y0
        for b, f in zip(batches, payoff_values)
    ])
    return MultiRunResult(y0s=y0s, mean=float(np.mean(y0s)),
                          spread=float(np.max(y0s) - np.min(y0s)))
