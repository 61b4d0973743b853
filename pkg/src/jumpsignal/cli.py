"""Command line entry points.

Subcommands:

* ``grid-dump``     jump grid as CSV (index, point, weight, eta)
* ``driver-table``  driver values f(z, 0) and argmin over a z range
* ``solve``         one backward solve, summary record to stdout
* ``sweep``         cutoff sweep over seeds, results CSV + per-c summary
* ``verify``        full property-check suite, exit 0 iff all pass
* ``report``        two-column (c, mean Y0) files per scenario from results

Every results row carries the config hash and the seed, so a rerun with
the same hash and seed reproduces Y0 bit for bit (the whole pipeline is
counter-based and uses deterministic reductions).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
import time
from typing import List, Optional

import numpy as np

from .bsde_solver import solve, value_and_strategy
from .config import (
    ExperimentConfig,
    ScenarioBlock,
    config_hash,
    dump_config,
    load_config,
)
from .drivers import driver_f_batch
from .levy_model import NoSignal
from .simulate import simulate_batch
from . import verify as verify_mod

RESULT_COLUMNS = ["scenario", "c", "seed", "y0", "value", "wall_time",
                  "config_hash", "status"]


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "scenario", None):
        overrides["variant"] = args.scenario
    if getattr(args, "c", None) is not None:
        overrides["c_values"] = (args.c,)
    if overrides:
        cfg = dataclasses.replace(
            cfg, scenario=dataclasses.replace(cfg.scenario, **overrides))
    if getattr(args, "paths", None):
        cfg = dataclasses.replace(
            cfg, scheme=dataclasses.replace(cfg.scheme, n_paths=args.paths))
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(
            cfg, scheme=dataclasses.replace(cfg.scheme, seeds=(args.seed,)))
    return cfg


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def cmd_grid_dump(args) -> int:
    cfg = _load(args)
    spec = cfg.market_spec()
    grid = cfg.jump_grid(spec)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(["index", "point", "weight", "eta"])
        eta = grid.eta_values()
        for i, idx in enumerate(grid.signed_indices):
            w.writerow([int(idx), repr(float(grid.points[i])),
                        repr(float(grid.weights[i])), repr(float(eta[i]))])
    finally:
        if close:
            fh.close()
    return 0


def cmd_driver_table(args) -> int:
    cfg = _load(args)
    spec = cfg.market_spec()
    grid = cfg.jump_grid(spec)
    scenario = cfg.scenarios()[0]
    ctx = cfg.driver_context(spec, grid, scenario)
    z = np.linspace(args.z_min, args.z_max, args.z_steps)
    u = np.zeros((z.size, grid.points.size))
    vals, p0 = driver_f_batch(z, u, ctx)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(["z", "f", "p0"])
        for j in range(z.size):
            w.writerow([repr(float(z[j])), repr(float(vals[j])),
                        repr(float(p0[j]))])
    finally:
        if close:
            fh.close()
    return 0


def _solve_point(cfg, spec, grid, tg, scenario, seed, batch=None):
    """One (scenario, seed) pipeline; returns a result row dict."""
    t0 = time.perf_counter()
    if batch is None:
        batch = simulate_batch(spec, grid, tg, cfg.scheme.n_paths, seed)
    F = cfg.payoff_values(batch.S[-1])
    ctx = cfg.driver_context(spec, grid, scenario)
    sol = solve(batch, F, ctx, n_cells=cfg.scheme.n_cells,
                min_count=cfg.scheme.min_count, design=cfg.scheme.design)
    value, _ = value_and_strategy(sol, cfg.utility.x, ctx)
    wall = time.perf_counter() - t0
    c = getattr(scenario, "c", "")
    return {"scenario": scenario.label(), "c": c, "seed": seed,
            "y0": repr(sol.y0), "value": repr(value),
            "wall_time": f"{wall:.3f}", "config_hash": config_hash(cfg),
            "status": "ok"}


def cmd_solve(args) -> int:
    cfg = _load(args)
    spec = cfg.market_spec()
    grid = cfg.jump_grid(spec)
    tg = cfg.time_grid()
    scenario = cfg.scenarios()[0]
    seed = cfg.scheme.seeds[0]
    row = _solve_point(cfg, spec, grid, tg, scenario, seed)
    w = csv.DictWriter(sys.stdout, fieldnames=RESULT_COLUMNS)
    w.writeheader()
    w.writerow(row)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    spec = cfg.market_spec()
    grid = cfg.jump_grid(spec)
    tg = cfg.time_grid()
    scenarios = cfg.scenarios()

    rows: List[dict] = []
    # batches do not depend on the scenario, so simulate once per seed
    for seed in cfg.scheme.seeds:
        batch = simulate_batch(spec, grid, tg, cfg.scheme.n_paths, seed)
        for scenario in scenarios:
            try:
                rows.append(_solve_point(cfg, spec, grid, tg, scenario, seed,
                                         batch=batch))
            except (ValueError, ArithmeticError) as exc:
                rows.append({"scenario": scenario.label(),
                             "c": getattr(scenario, "c", ""), "seed": seed,
                             "y0": "", "value": "", "wall_time": "",
                             "config_hash": config_hash(cfg),
                             "status": f"error: {exc}"})
    rows.sort(key=lambda r: (r["scenario"], float(r["c"]) if r["c"] != "" else -1.0,
                             r["seed"]))

    fh, close = _open_out(args.out)
    try:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    finally:
        if close:
            fh.close()

    summary = _summarize(rows)
    sfh, sclose = _open_out(args.summary)
    try:
        sw = csv.writer(sfh)
        sw.writerow(["scenario", "c", "n_seeds", "y0_mean", "y0_spread"])
        sw.writerows(summary)
    finally:
        if sclose:
            sfh.close()
    return 0


def _summarize(rows):
    groups = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        groups.setdefault((r["scenario"], r["c"]), []).append(float(r["y0"]))
    out = []
    for (scen, c), ys in sorted(groups.items(),
                                key=lambda kv: (kv[0][0],
                                                float(kv[0][1]) if kv[0][1] != "" else -1.0)):
        out.append([scen, c, len(ys), repr(float(np.mean(ys))),
                    repr(float(np.max(ys) - np.min(ys)))])
    return out


def cmd_verify(args) -> int:
    cfg = _load(args)
    spec = cfg.market_spec()
    grid = cfg.jump_grid(spec)
    tg = cfg.time_grid()
    n = args.samples
    scen = cfg.scenarios()[0]
    ctx = cfg.driver_context(spec, grid, scen)
    ctx0 = cfg.driver_context(spec, grid, NoSignal())

    reports = [
        verify_mod.check_driver_sandwich(n, ctx),
        verify_mod.check_fm_monotone(n, ctx),
        verify_mod.check_lipschitz_z(n, ctx),
        verify_mod.check_scenario_limits(ctx0, n_samples=n),
    ]

    if not args.driver_only:
        seeds = cfg.scheme.seeds[:2] if len(cfg.scheme.seeds) >= 2 \
            else (cfg.scheme.seeds[0], cfg.scheme.seeds[0] + 1)
        batches = [simulate_batch(spec, grid, tg, cfg.scheme.n_paths, s)
                   for s in seeds]
        payoffs = [cfg.payoff_values(b.S[-1]) for b in batches]
        nc, mc = cfg.scheme.n_cells, cfg.scheme.min_count
        eps_reg = verify_mod.calibrate_eps_reg(batches, payoffs, ctx,
                                               n_cells=nc, min_count=mc)
        batch, F = batches[0], payoffs[0]
        reports.append(verify_mod.check_scheme_oracles(batch, F, n_cells=nc,
                                                       min_count=mc))
        delta = 0.05
        shifted = verify_mod.make_driver_fn(ctx)
        base_fn = verify_mod.make_driver_fn(ctx)

        def plus_delta(Z, U):
            vals, p0 = shifted(Z, U)
            return vals + delta, p0

        reports.append(verify_mod.check_comparison(batch, F, F, base_fn,
                                                   plus_delta, eps_reg,
                                                   n_cells=nc, min_count=mc))
        reports.append(verify_mod.check_penalization(batch, F, ctx, eps_reg,
                                                     n_cells=nc, min_count=mc))
        sol = solve(batch, F, ctx, n_cells=nc, min_count=mc)
        fresh_seed = max(cfg.scheme.seeds) + 1009
        fresh = simulate_batch(spec, grid, tg, cfg.scheme.n_paths, fresh_seed)
        reports.append(verify_mod.check_martingale_optimality(
            fresh, sol, ctx, cfg.payoff_values, cfg.utility.x, eps_reg))
        reports.append(verify_mod.check_y_bound(sol, cfg.payoff.strike, ctx,
                                                eps_reg))

    print(verify_mod.format_reports(reports))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "samples", "violations", "worst_margin",
                        "tolerance", "passed"])
            for r in sorted(reports, key=lambda r: r.name):
                w.writerow([r.name, r.samples, r.violations,
                            repr(r.worst_margin), repr(r.tolerance), r.passed])
    return 0 if all(r.passed for r in reports) else 1


def cmd_report(args) -> int:
    rows = []
    with open(args.results, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_COLUMNS:
            raise ValueError(f"{args.results}:1: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RESULT_COLUMNS):
                raise ValueError(f"{args.results}:{lineno}: expected "
                                 f"{len(RESULT_COLUMNS)} columns, got {len(row)}")
            rec = dict(zip(RESULT_COLUMNS, row))
            if rec["status"] == "ok":
                try:
                    rec["y0"] = float(rec["y0"])
                except ValueError as exc:
                    raise ValueError(f"{args.results}:{lineno}: bad y0: {exc}")
                rows.append(rec)

    groups = {}
    for rec in rows:
        groups.setdefault(rec["scenario"], {}).setdefault(rec["c"], []).append(rec["y0"])
    os.makedirs(args.out_dir, exist_ok=True)
    for scen, by_c in sorted(groups.items()):
        path = os.path.join(args.out_dir, f"{scen}.dat")
        with open(path, "w") as fh:
            for c, ys in sorted(by_c.items(),
                                key=lambda kv: float(kv[0]) if kv[0] != "" else -1.0):
                label = c if c != "" else "-"
                fh.write(f"{label} {float(np.mean(ys))!r}\n")
        print(f"{scen}: {len(by_c)} cutoff(s) -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jumpsignal",
                                description="jump-signal portfolio BSDE toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="YAML config path (defaults used if absent)")
        sp.add_argument("--scenario", choices=["nosignal", "hidesmall", "hidelarge"])
        sp.add_argument("--c", type=float, help="single cutoff override")
        sp.add_argument("--paths", type=int, help="path count override")
        sp.add_argument("--seed", type=int, help="single seed override")

    sp = sub.add_parser("grid-dump", help="dump the discretized jump measure")
    sp.add_argument("--config")
    sp.add_argument("--out", help="output CSV ('-' or absent: stdout)")
    sp.set_defaults(fn=cmd_grid_dump)

    sp = sub.add_parser("driver-table", help="tabulate f(z, 0) over a z range")
    add_common(sp)
    sp.add_argument("--z-min", type=float, default=-2.0)
    sp.add_argument("--z-max", type=float, default=2.0)
    sp.add_argument("--z-steps", type=int, default=41)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_driver_table)

    sp = sub.add_parser("solve", help="single backward solve")
    add_common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("sweep", help="cutoff sweep over all seeds")
    add_common(sp)
    sp.add_argument("--out", default="results.csv")
    sp.add_argument("--summary", help="per-cutoff summary CSV ('-': stdout)")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("verify", help="run the property-check suite")
    add_common(sp)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--driver-only", action="store_true",
                    help="skip the batch-level checks")
    sp.add_argument("--csv", help="write the check reports as CSV")
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("report", help="plot-ready files from a results CSV")
    sp.add_argument("--results", required=True)
    sp.add_argument("--out-dir", default=".")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
