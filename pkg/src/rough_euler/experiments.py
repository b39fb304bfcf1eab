"""Scripted numerical studies with pass/fail reports."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import spectral as sp
from .fileio import config_to_dict, json_default, write_table_csv
from .lagrangian import back_trace_vorticity_check
from .rough_path import brownian_dyadic_path, canonical_lift, lift_smooth, smooth_path
from .solver import SolverConfig, build_initial, build_xi, rough_increment, run
from .spectral import ScalarField

# tolerances of the invariant suite
L2_L4_DRIFT = 1e-4
LINF_DRIFT = 1e-3
CIRCULATION_DRIFT = 1e-3
DIVERGENCE_TOL = 1e-10
PUSHFORWARD_TOL = 5e-3


@dataclass
class ExperimentReport:
    """Parameters, per-case metrics and criterion outcomes of one study.

    ``tables`` maps a case label to ``(columns, rows)`` written as CSV.
    Runtime is kept out of the CSV files so they are reproducible byte for byte.
    """

    name: str
    parameters: dict
    cases: list = field(default_factory=list)
    criteria: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.criteria.values())

    def check(self, name: str, passed: bool, value=None, threshold=None) -> bool:
        self.criteria[name] = {"passed": bool(passed), "value": value, "threshold": threshold}
        return bool(passed)

    def to_dict(self) -> dict:
        return {
            "experiment": self.name,
            "parameters": self.parameters,
            "cases": self.cases,
            "criteria": self.criteria,
            "passed": self.passed,
            "runtime_s": self.runtime,
        }

    def write(self, outdir) -> Path:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, default=json_default) + "\n")
        for label, (cols, rows) in self.tables.items():
            write_table_csv(cols, rows, out / f"{label}.csv")
        return out


def worker_count() -> int:
    env = os.environ.get("ROUGH_EULER_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"ROUGH_EULER_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def parallel_map(fn, items) -> list:
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _quiet(cfg: SolverConfig, **kw) -> SolverConfig:
    # no per-step diagnostics, every step stored
    return replace(cfg, diagnostics_every=10 ** 9, snapshot_every=1, loops=[],
                   track_pressure=False, keep_history=False, **kw)


# --- Wong-Zakai ------------------------------------------------------------------

def _wz_level(args):
    cfg, seed, n, n_grid = args
    K = max(len(cfg.xi), 1)
    path = brownian_dyadic_path(seed, n, cfg.T, K).refine(2 ** (n_grid - n))
    res = run(cfg, path=canonical_lift(path))
    return [w for _, w in res.snapshots]


def wong_zakai(base: SolverConfig, n_min: int = 3, n_max: int = 7, seed: int = 0,
               grid_extra: int = 2, max_ratio: float = 0.25) -> ExperimentReport:
    """Dyadic piecewise-linear approximations of one Brownian sample.

    Every level n is solved on the common grid of 2^(n_max + grid_extra)
    steps. The error e_n is the sup over the dyadic nodes of level n_min
    (where all approximants agree with the sample) of the L2 distance to the
    level n_max solution. The sup over every step is reported as well.
    """
    if n_max < n_min + 2:
        raise ValueError("need n_max >= n_min + 2")
    t0 = time.perf_counter()
    n_grid = n_max + grid_extra
    cfg = _quiet(base, dt_max=base.T / 2 ** n_grid)
    levels = list(range(n_min, n_max + 1))
    sols = dict(zip(levels, parallel_map(_wz_level, [(cfg, seed, n, n_grid) for n in levels])))
    ref = sols[n_max]
    stride = 2 ** (n_grid - n_min)
    report = ExperimentReport("wong_zakai", {
        "n_min": n_min, "n_max": n_max, "seed": seed, "grid_extra": grid_extra,
        "config": config_to_dict(cfg)})
    rows = []
    nodes, full = [], []
    for n in levels[:-1]:
        e_nodes = max((sols[n][i] - ref[i]).l2() for i in range(0, len(ref), stride))
        e_full = max((a - b).l2() for a, b in zip(sols[n], ref))
        nodes.append(e_nodes)
        full.append(e_full)
        rows.append([n, e_nodes, e_full])
        report.cases.append({"seed": seed, "level": n, "error": e_nodes, "error_all_steps": e_full})
    report.tables[f"seed{seed}"] = (["level", "error", "error_all_steps"], rows)
    e = np.array(nodes)
    if np.all(e == 0.0):
        report.check("errors_vanish", True, 0.0, 0.0)
    else:
        report.check("strictly_decreasing", bool(np.all(np.diff(e) < 0)),
                     [float(x) for x in e])
        ratio = float(e[-1] / e[0]) if e[0] > 0 else math.inf
        report.check("ratio_last_first", ratio <= max_ratio, ratio, max_ratio)
    report.runtime = time.perf_counter() - t0
    return report


def wong_zakai_ensemble(base: SolverConfig, seeds, n_min: int = 3, n_max: int = 7,
                        grid_extra: int = 2, min_pass: int | None = None) -> ExperimentReport:
    seeds = list(seeds)
    if min_pass is None:
        min_pass = math.ceil(0.9 * len(seeds))
    t0 = time.perf_counter()
    report = ExperimentReport("wong_zakai", {
        "n_min": n_min, "n_max": n_max, "seeds": seeds, "grid_extra": grid_extra,
        "min_pass": min_pass, "config": config_to_dict(base)})
    passes = 0
    for s in seeds:
        r = wong_zakai(base, n_min, n_max, s, grid_extra)
        report.cases.extend(r.cases)
        report.tables.update(r.tables)
        passes += r.passed
    report.check("seeds_passing", passes >= min_pass, passes, min_pass)
    report.runtime = time.perf_counter() - t0
    return report


# --- local order -------------------------------------------------------------

def transport_reference(w: ScalarField, xi, dz, h: float, substeps: int = 64) -> ScalarField:
    """RK4 for dw/dt = -sum_k dz^k/dt (xi_k . grad w) on [0, h] (dealiased)."""
    g = w.grid

    def rhs(t, v):
        d = np.atleast_1d(dz(t))
        hat = np.zeros(g.spectral_shape, dtype=complex)
        for k, x in enumerate(xi):
            hat -= d[k] * sp.advect_scalar(x, v).hat
        return ScalarField(g, hat=hat)

    dt = h / substeps
    v = w
    for i in range(substeps):
        t = i * dt
        k1 = rhs(t, v)
        k2 = rhs(t + dt / 2, v + k1 * (dt / 2))
        k3 = rhs(t + dt / 2, v + k2 * (dt / 2))
        k4 = rhs(t + dt, v + k3 * dt)
        v = v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    return v


def local_order_test(base: SolverConfig, h0: float = 0.2, refinements: int = 3,
                     substeps: int = 64, band=None) -> ExperimentReport:
    """One-step error of the rough increment against a fine-substep reference.

    The drift is off and the driver must be smooth. Steps h0 / 2^i,
    i = 0..refinements, start at t = 0.
    """
    drv = base.driver
    if drv.get("type") != "smooth":
        raise ValueError("local_order_test needs a smooth driver")
    t0 = time.perf_counter()
    grid = sp.spectral_grid(base.grid_n)
    xi = build_xi(grid, base.xi)
    K = len(xi)
    z, dz, dim = smooth_path(drv.get("name", "circle"), float(drv.get("amp", 1.0)),
                             float(drv.get("freq", 1.0)), K)
    if dim != K:
        raise ValueError(f"driver dimension {dim} differs from K={K}")
    w = build_initial(grid, base.init)
    if band is None:
        band = (6.0, 10.0) if base.second_order else (3.0, 5.0)
    report = ExperimentReport("local_order", {
        "h0": h0, "refinements": refinements, "substeps": substeps,
        "band": list(band), "config": config_to_dict(base)})
    errs = []
    rows = []
    for i in range(refinements + 1):
        h = h0 / 2 ** i
        Z, ZZ = lift_smooth(z, dz, [0.0, h]).increment(0, 1)
        one = w + rough_increment(w, xi, Z, ZZ, second_order=base.second_order)
        err = (one - transport_reference(w, xi, dz, h, substeps)).l2()
        errs.append(err)
        rows.append([h, err])
        report.cases.append({"h": h, "error": err})
    ratios = [errs[i] / errs[i + 1] if errs[i + 1] > 0 else math.inf for i in range(refinements)]
    for i, r in enumerate(ratios):
        report.cases[i + 1]["ratio"] = r
    report.tables["errors"] = (["h", "error"], rows)
    if max(errs) < 1e-13:
        report.check("exact", True, max(errs), 1e-13)
    else:
        ok = all(band[0] <= r <= band[1] for r in ratios)
        report.check("ratios_in_band", ok, ratios, list(band))
    report.runtime = time.perf_counter() - t0
    return report


# --- continuous dependence ---------------------------------------------------

def bump(grid, seed: int = 11, kmax: int = 4) -> ScalarField:
    """Band-limited mean-free perturbation with unit L2 norm."""
    return sp.random_field(grid, seed, kmax, 1.0)


def _deviation_run(args):
    cfg, initial = args
    return [w for _, w in run(cfg, initial=initial).snapshots]


def continuous_dependence(base: SolverConfig, eps=(1e-2, 1e-3), bump_seed: int = 11,
                          bump_kmax: int = 4, factor: float = 3.0) -> ExperimentReport:
    """sup_t L2 deviation between runs from w0 and w0 + eps * bump (same driver)."""
    t0 = time.perf_counter()
    cfg = _quiet(base)
    grid = sp.spectral_grid(cfg.grid_n)
    w0 = build_initial(grid, cfg.init)
    b = bump(grid, bump_seed, bump_kmax)
    eps = [float(e) for e in eps]
    inits = [w0] + [w0 + b * e for e in eps]
    sols = parallel_map(_deviation_run, [(cfg, w) for w in inits])
    base_sol = sols[0]
    report = ExperimentReport("continuous_dependence", {
        "eps": eps, "bump_seed": bump_seed, "bump_kmax": bump_kmax, "factor": factor,
        "config": config_to_dict(cfg)})
    devs = []
    rows = []
    for e, sol in zip(eps, sols[1:]):
        d = max((a - c).l2() for a, c in zip(sol, base_sol))
        devs.append(d)
        rows.append([e, d, d / e if e else 0.0])
        report.cases.append({"eps": e, "deviation": d, "ratio": d / e if e else None})
    report.tables["deviations"] = (["eps", "deviation", "deviation_over_eps"], rows)
    for e, d in zip(eps, devs):
        if e == 0.0:
            report.check("zero_eps_zero_deviation", d == 0.0, d, 0.0)
    nz = [(e, d) for e, d in zip(eps, devs) if e > 0]
    for (e1, d1), (e2, d2) in zip(nz[:-1], nz[1:]):
        rel = (d1 / d2) / (e1 / e2) if d2 > 0 else math.inf
        report.check(f"ratio_{e1:g}_{e2:g}", 1 / factor <= rel <= factor,
                     d1 / d2 if d2 > 0 else math.inf, [e1 / e2 / factor, e1 / e2 * factor])
    report.runtime = time.perf_counter() - t0
    return report


# --- invariants --------------------------------------------------------------

def _relative_drift(v: np.ndarray) -> float:
    ref = abs(v[0])
    dev = float(np.max(np.abs(v - v[0])))
    return dev / ref if ref > 0 else dev


def invariant_suite(cfg: SolverConfig, pushforward: bool = False, lattice: int = 32,
                    result=None) -> ExperimentReport:
    """One run with full diagnostics, checked against the conservation properties."""
    t0 = time.perf_counter()
    if result is None:
        result = run(replace(cfg, keep_history=cfg.keep_history or pushforward))
    d = result.diagnostics
    report = ExperimentReport("invariants", {"pushforward": pushforward, "lattice": lattice,
                                             "config": config_to_dict(cfg)})
    report.tables["diagnostics"] = (d.columns, d.rows)
    report.check("no_blowup", result.blowup is None, result.blowup)
    for col, tol in (("l2_vort", L2_L4_DRIFT), ("l4_vort", L2_L4_DRIFT), ("linf_vort", LINF_DRIFT)):
        drift = _relative_drift(d.column(col))
        report.check(f"{col}_drift", drift <= tol, drift, tol)
    for col in d.columns:
        if col.startswith("circ_"):
            v = d.column(col)
            dev = float(np.max(np.abs(v - v[0])))
            bound = CIRCULATION_DRIFT * (1 + abs(v[0]))
            report.check(f"{col}_drift", dev <= bound, dev, bound)
    worst_mean = max(abs(w.hat[0, 0]) for _, w in result.snapshots)
    report.check("mean_free", worst_mean == 0.0, float(worst_mean), 0.0)
    worst_div = max(sp.divergence(sp.biot_savart_2d(w)).lp(math.inf) for _, w in result.snapshots)
    report.check("divergence_free", worst_div <= DIVERGENCE_TOL, worst_div, DIVERGENCE_TOL)
    if pushforward:
        defect = back_trace_vorticity_check(result, result.state.t, lattice)
        report.check("pushforward_defect", defect <= PUSHFORWARD_TOL, defect, PUSHFORWARD_TOL)
    bkm = d.column("bkm_integral")
    w0 = result.initial
    # inputs of the double-exponential a priori bound, recorded only
    report.cases.append({
        "T": result.state.t,
        "bkm_integral": float(bkm[-1]),
        "linf_vort_0": w0.lp(math.inf),
        "l2_vort_0": w0.l2(),
        "energy_0": float(d.column("energy")[0]),
    })
    report.runtime = time.perf_counter() - t0
    return report


def pushforward_refinement(cfg: SolverConfig, lattice: int = 32) -> ExperimentReport:
    """Back-trace defect at (N, dt_max) and at (2N, dt_max / 2) on the same driver."""
    t0 = time.perf_counter()
    cases = [cfg, replace(cfg, grid_n=2 * cfg.grid_n, dt_max=cfg.dt_max / 2)]
    report = ExperimentReport("pushforward", {"lattice": lattice, "config": config_to_dict(cfg)})
    defects = []
    for c in cases:
        res = run(replace(c, keep_history=True, loops=[], diagnostics_every=10 ** 9,
                          track_pressure=False))
        d = back_trace_vorticity_check(res, res.state.t, lattice)
        defects.append(d)
        report.cases.append({"grid_n": c.grid_n, "dt_max": c.dt_max, "defect": d})
    report.tables["defects"] = (["grid_n", "dt_max", "defect"],
                                [[c.grid_n, float(c.dt_max), d] for c, d in zip(cases, defects)])
    report.check("defect", defects[0] <= PUSHFORWARD_TOL, defects[0], PUSHFORWARD_TOL)
    ratio = defects[1] / defects[0] if defects[0] > 0 else 0.0
    report.check("refinement_ratio", ratio <= 0.5, ratio, 0.5)
    report.runtime = time.perf_counter() - t0
    return report
