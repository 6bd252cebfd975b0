"""Config-driven experiments.

Each ``run_*`` function takes a configuration mapping (see
:func:`resolve_config`) and returns an :class:`~fenelab.report.ExperimentResult`
holding CSV-ready tables, a scalar summary and named pass/fail checks.

Configuration layout::

    experiment: stationary
    seed: 1
    physics:  {kappa: 10.0, beta: 1.0, lam: 0.2, tau: 1.0}
    numerics: {...experiment specific...}
    output:   {format: [csv, json-summary]}
"""

from __future__ import annotations

import copy
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import chi2

from .errors import InvalidArgument, RegimeViolation
from .fene_sde import (EnsembleConfig, chi2_statistic, elongation_histogram, reference_marginal,
                       simulate_ensemble)
from .fokker_planck import (RadialDensity, assemble_radial_operator, build_radial_grid, evolve,
                            geometric_steps, h0_distance, loglog_slope, singular_limit_sweep)
from .params import PhysParams
from .report import ExperimentResult, Table
from .spectral_noise import build_mode_set, corrector_matrices, limit_matrix
from .weights import coil_stretch_params, fene_weight

EXPERIMENTS = ("corrector", "stationary", "singular-limit", "pathwise")

DEFAULTS = {
    "corrector": {
        "physics": {"lam": 1.0, "tau": 1.0},
        "numerics": {"N_list": [8, 16, 32, 64, 128], "r_max": 0.9, "n_radii": 10,
                     "n_angles": 64, "points": None, "workers": 1,
                     "slope_range": [-1.3, -0.7], "ratio_pair": [8, 128], "ratio": 8.0},
    },
    "stationary": {
        "physics": {"kappa": 10.0, "beta": 1.0, "lam": 0.2, "tau": 1.0},
        "numerics": {"N": 128, "n_particles": 100_000, "dt_over_beta": 0.001,
                     "t_end_over_beta": 10.0, "shared_flow": False, "scheme": "heun",
                     "init": "fene", "record_every": 50, "n_bins": 40, "significance": 0.01,
                     "min_expected": 5.0, "workers": 1, "max_wall_seconds": None,
                     "regime_threshold": 0.1},
    },
    "singular-limit": {
        "physics": {"kappa": 10.0, "zeta": 1.0, "lam": 0.2},
        "numerics": {"tau_list": [0.1, 0.05, 0.02, 0.01, 0.005], "t_end": 1.0,
                     "n_cells": 256, "grading": 2.0, "dt_max": 0.01, "dt_rel": 1e-3,
                     "growth": 1.05, "slice_masses": [1.0, 0.5, 2.0], "initial": "bump",
                     "slope_range": [0.8, 1.2], "mass_tol": 1e-12},
    },
    "pathwise": {
        "physics": {"kappa": 4.0, "beta": 1.0, "lam": 0.5, "tau": 1.0},
        "numerics": {"N_list": [8, 32], "n_particles": 100_000, "dt_over_beta": 1 / 150,
                     "t_end_over_beta": 5.0, "scheme": "frozen", "init": "fene",
                     "n_bins": 40, "n_cells": 1024, "grading": 2.0, "fp_dt_over_beta": 1e-3,
                     "se_factor": 3.0},
    },
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(cfg: dict, experiment=None, seed=None) -> dict:
    """Fill defaults and return the full configuration used for a run.

    Unknown keys under ``physics`` or ``numerics`` are rejected so that a
    typo cannot silently fall back to a default.
    """
    cfg = dict(cfg or {})
    name = experiment or cfg.get("experiment")
    if name not in EXPERIMENTS:
        raise InvalidArgument(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")
    if cfg.get("experiment") not in (None, name):
        raise InvalidArgument(f"config is for {cfg['experiment']!r}, not {name!r}")
    d = DEFAULTS[name]
    for sec in ("physics", "numerics"):
        extra = set((cfg.get(sec) or {})) - set(d[sec])
        if extra:
            raise InvalidArgument(f"unknown {sec} keys: {sorted(extra)}")
    out = {
        "experiment": name,
        "seed": int(cfg.get("seed", 1) if seed is None else seed),
        "physics": _merge(d["physics"], cfg.get("physics")),
        "numerics": _merge(d["numerics"], cfg.get("numerics")),
        "output": _merge({"format": ["csv", "json-summary"]}, cfg.get("output")),
    }
    if not 0 <= out["seed"] < 2**64:
        raise InvalidArgument("seed must be an unsigned 64-bit integer")
    extra = set(cfg) - {"experiment", "seed", "physics", "numerics", "output"}
    if extra:
        raise InvalidArgument(f"unknown top-level keys: {sorted(extra)}")
    return out


# --------------------------------------------------------------------------
# corrector


def _r_grid(num):
    if num.get("points") is not None:
        pts = np.asarray(num["points"], dtype=float).reshape(-1, 2)
        if np.any(np.einsum("ij,ij->i", pts, pts) > 1.0):
            raise InvalidArgument("r-grid points must lie in the closed unit disc")
        return pts
    rad = np.linspace(0.0, num["r_max"], num["n_radii"])
    ang = np.linspace(0.0, 2 * math.pi, num["n_angles"], endpoint=False)
    return np.stack([np.outer(rad, np.cos(ang)), np.outer(rad, np.sin(ang))], -1).reshape(-1, 2)


def run_corrector_convergence(cfg) -> ExperimentResult:
    """``sup_r |A^N(r) - A(r)|_F`` for each ``N`` and the log-log slope."""
    cfg = resolve_config(cfg, "corrector")
    ph, num = cfg["physics"], cfg["numerics"]
    Ns = [int(n) for n in num["N_list"]]
    if not Ns:
        raise InvalidArgument("N_list is empty")
    p = PhysParams(kappa=1.0, beta=1.0, lam=ph["lam"], tau=ph["tau"])
    r = _r_grid(num)
    A = limit_matrix(r, p.k_T)

    def row(N):
        t0 = time.perf_counter()
        err = np.linalg.norm(corrector_matrices(build_mode_set(N), p, r) - A, axis=(1, 2))
        return float(err.max()), time.perf_counter() - t0

    with ThreadPoolExecutor(max(1, int(num["workers"]))) as pool:
        out = list(pool.map(row, Ns))
    errs = [e for e, _ in out]
    slope = loglog_slope(Ns, errs) if len(Ns) > 1 else None
    summary = {"N_list": Ns, "sup_errors": errs, "slope": slope, "n_points": len(r)}
    checks = {}
    if slope is None:
        summary["slope_flag"] = "single N" if len(Ns) == 1 else "non-positive errors"
    else:
        lo, hi = num["slope_range"]
        checks["slope_in_range"] = lo <= slope <= hi
    a, b = num["ratio_pair"]
    if a in Ns and b in Ns:
        ea, eb = errs[Ns.index(a)], errs[Ns.index(b)]
        summary["ratio"] = ea / eb if eb > 0 else None
        checks["ratio"] = eb <= ea / num["ratio"]
    tables = {"corrector_convergence": Table(["N", "sup_error"], [[n, e] for n, e in zip(Ns, errs)])}
    timings = {f"N={n}": t for n, (_, t) in zip(Ns, out)}
    return ExperimentResult("corrector", cfg, tables, summary, checks, timings)


# --------------------------------------------------------------------------
# stationary Monte Carlo


def _series_table(res):
    return Table(["t", "mean_sq_elong", "frac_stretched"],
                 [[float(t), float(a), float(b)]
                  for t, a, b in zip(res.times, res.mean_sq, res.frac_stretched)])


def _hist_table(h):
    return Table(["bin_left", "bin_right", "density", "stderr"],
                 [[float(a), float(b), float(d), float(e)]
                  for a, b, d, e in zip(h.edges[:-1], h.edges[1:], h.density, h.stderr)])


def run_stationary_comparison(cfg, strict=False) -> ExperimentResult:
    """Independent-flow ensemble against the stationary elongation law."""
    cfg = resolve_config(cfg, "stationary")
    ph, num = cfg["physics"], cfg["numerics"]
    p = PhysParams(kappa=ph["kappa"], beta=ph["beta"], lam=ph["lam"], tau=ph["tau"])
    rep = coil_stretch_params(p.kappa, p.k_T, p.beta, threshold=num["regime_threshold"])
    if rep.cutoff_required:
        msg = (f"parameters outside the validated regime (h={rep.h:.4g}, "
               f"k_T beta={p.k_T * p.beta:.4g}, threshold={rep.threshold})")
        if strict:
            raise RegimeViolation(msg, report=rep)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    m = build_mode_set(int(num["N"]))
    ecfg = EnsembleConfig(n_particles=int(num["n_particles"]), dt=num["dt_over_beta"] * p.beta,
                          t_end=num["t_end_over_beta"] * p.beta, seed=cfg["seed"],
                          shared_flow=bool(num["shared_flow"]), record_every=num["record_every"],
                          init=num["init"], scheme=num["scheme"],
                          max_wall_seconds=num["max_wall_seconds"])
    t0 = time.perf_counter()
    res = simulate_ensemble(ecfg, p, m, workers=int(num["workers"]))
    t_sim = time.perf_counter() - t0
    nb = int(num["n_bins"])
    h = elongation_histogram(res, nb)
    ref = reference_marginal(p.kappa, p.gamma, nb)
    stat, dof = chi2_statistic(h.counts, ref * np.diff(h.edges), num["min_expected"])
    thr = float(chi2.ppf(1.0 - num["significance"], dof))
    summary = {"chi2": stat, "dof": dof, "threshold": thr, "violations": res.violations,
               "partial": res.partial, "steps_done": res.steps_done,
               "regime": rep.as_dict(), "gamma": p.gamma,
               "sup_distance": float(np.max(np.abs(h.density - ref)))}
    checks = {"chi2_below_threshold": stat < thr, "zero_violations": res.violations == 0,
              "complete": not res.partial}
    ref_tab = Table(["bin_left", "bin_right", "density"],
                    [[float(a), float(b), float(d)]
                     for a, b, d in zip(h.edges[:-1], h.edges[1:], ref)])
    tables = {"histogram": _hist_table(h), "reference": ref_tab, "timeseries": _series_table(res)}
    return ExperimentResult("stationary", cfg, tables, summary, checks,
                            {"simulate": t_sim, "total": time.perf_counter() - t0})


# --------------------------------------------------------------------------
# singular limit


def initial_profile(grid, kind="bump", masses=(1.0,)):
    """Fixed initial data: one radial profile per x-slice with the given masses."""
    c = grid.centers
    if kind == "bump":
        v = (1 + 3 * c**2) * np.exp(-4 * c**2) * fene_weight(c, 4.0)
    elif kind == "uniform":
        v = np.ones_like(c)
    else:
        raise InvalidArgument(f"unknown initial profile {kind!r}")
    v = v / (v @ grid.volumes)
    return RadialDensity(grid, np.outer(np.asarray(masses, dtype=float), v))


def run_singular_limit(cfg, f0=None) -> ExperimentResult:
    """Time-integrated distance to ``rho M0`` over a list of ``tau``."""
    cfg = resolve_config(cfg, "singular-limit")
    ph, num = cfg["physics"], cfg["numerics"]
    taus = [float(t) for t in num["tau_list"]]
    if not taus:
        raise InvalidArgument("tau_list is empty")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise InvalidArgument("tau_list must be strictly decreasing")
    grid = build_radial_grid(int(num["n_cells"]), num["grading"])
    if f0 is None:
        if num["initial"] == "stationary":
            alpha = 0.5 * ph["zeta"] * ph["lam"]
            op = assemble_radial_operator(grid, ph["kappa"], alpha, 1.0)
            v = op.m0_cell / (op.m0_cell @ grid.volumes)
            f0 = RadialDensity(grid, np.outer(num["slice_masses"], v))
        else:
            f0 = initial_profile(grid, num["initial"], num["slice_masses"])
    t0 = time.perf_counter()
    sw = singular_limit_sweep(taus, ph["zeta"], f0, num["t_end"], ph["kappa"], ph["lam"],
                              dt_max=num["dt_max"], dt_rel=num["dt_rel"], growth=num["growth"],
                              keep_trajectories=True)
    t_sweep = time.perf_counter() - t0
    alpha = 0.5 * ph["zeta"] * ph["lam"]
    tables = {}
    monotone = True
    for tau, tr in sw.trajectories.items():
        op = assemble_radial_operator(grid, ph["kappa"], alpha, ph["zeta"] * tau)
        d = [h0_distance(s, op) for s in tr.states]
        monotone &= all(x <= d[0] * (1 + 1e-12) + 1e-30 for x in d)
        tables[f"trajectory_tau{tau:g}"] = Table(
            ["t", "H0_distance", "mass"],
            [[float(t), float(x), float(np.sum(s.mass))] for t, x, s in zip(tr.times, d, tr.states)])
        fin = tr.states[-1]
        mass0 = float(np.atleast_1d(fin.mass)[0])
        m0 = op.m0_cell / (op.m0_cell @ grid.volumes) * mass0
        tables[f"density_tau{tau:g}"] = Table(
            ["s_center", "f", "M0_reference"],
            [[float(s), float(f), float(r)]
             for s, f, r in zip(grid.centers, np.atleast_2d(fin.values)[0], m0)])
    rows = [[r.tau, r.integral_distance, None] for r in sw.rows]
    rows.append(["slope", None, sw.slope])
    tables["sweep"] = Table(["tau", "integral_distance", "fitted_slope"], rows)
    drift = max((r.mass_drift for r in sw.rows if r.error is None), default=float("nan"))
    summary = {"slope": sw.slope, "slope_flag": sw.slope_flag,
               "integral_distances": [r.integral_distance for r in sw.rows],
               "errors": [r.error for r in sw.rows], "max_mass_drift": drift,
               "n_steps": [r.n_steps for r in sw.rows]}
    lo, hi = num["slope_range"]
    checks = {"slope_in_range": sw.slope is not None and lo <= sw.slope <= hi,
              "monotone_decay": bool(monotone),
              "mass_conserved": bool(drift <= num["mass_tol"]),
              "all_rows_ok": all(r.error is None for r in sw.rows)}
    if sw.slope is None:
        del checks["slope_in_range"]
    return ExperimentResult("singular-limit", cfg, tables, summary, checks, {"sweep": t_sweep})


# --------------------------------------------------------------------------
# pathwise


def bin_average(grid, f, edges):
    """Radial density ``2 pi s f(s)`` averaged over ``[edges_b, edges_b+1]``.

    ``f`` is taken constant on each cell; cells split between bins share
    their mass by disc area.
    """
    out = np.empty(len(edges) - 1)
    for b, (a, c) in enumerate(zip(edges[:-1], edges[1:])):
        lo = np.clip(grid.faces[:-1], a, c)
        hi = np.clip(grid.faces[1:], a, c)
        out[b] = np.sum(f * math.pi * (hi**2 - lo**2)) / (c - a)
    return out


def fp_reference_histogram(p: PhysParams, init_kappa, t_end, n_bins, n_cells, grading, dt):
    """Deterministic limit solution at ``t_end`` started from the FENE law, binned.

    The limit operator for the particle law has prefactor ``1/beta`` and
    mobility parameter ``gamma = k_T beta / 2``.
    """
    grid = build_radial_grid(n_cells, grading)
    op = assemble_radial_operator(grid, p.kappa, p.gamma, p.beta)
    # exact cell averages of the normalised FENE law: CDF of the radius
    F = 1.0 - (1.0 - grid.faces**2) ** (0.5 * init_kappa + 1.0)
    f0 = RadialDensity(grid, np.diff(F) / grid.volumes)
    tr = evolve(f0, op, geometric_steps(t_end, min(dt, 1e-3 * p.beta), dt), None,
                output_every=10**9)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return bin_average(grid, tr.states[-1].values, edges)


def run_pathwise_limit(cfg) -> ExperimentResult:
    """One shared flow realisation per ``N`` against the deterministic limit."""
    cfg = resolve_config(cfg, "pathwise")
    ph, num = cfg["physics"], cfg["numerics"]
    Ns = [int(n) for n in num["N_list"]]
    if not Ns:
        raise InvalidArgument("N_list is empty")
    p = PhysParams(kappa=ph["kappa"], beta=ph["beta"], lam=ph["lam"], tau=ph["tau"])
    t_end = num["t_end_over_beta"] * p.beta
    nb = int(num["n_bins"])
    if num["init"] != "fene":
        raise InvalidArgument("the pathwise comparison starts from the FENE law (init: fene)")
    t0 = time.perf_counter()
    ref = fp_reference_histogram(p, p.kappa, t_end, nb, int(num["n_cells"]), num["grading"],
                                 num["fp_dt_over_beta"] * p.beta)
    timings = {"fokker_planck": time.perf_counter() - t0}
    tables, rows, sups, bounds = {}, [], [], []
    for N in Ns:
        t1 = time.perf_counter()
        ecfg = EnsembleConfig(n_particles=int(num["n_particles"]),
                              dt=num["dt_over_beta"] * p.beta, t_end=t_end, seed=cfg["seed"],
                              shared_flow=True, record_every=10**9, init="fene",
                              scheme=num["scheme"])
        res = simulate_ensemble(ecfg, p, build_mode_set(N))
        h = elongation_histogram(res, nb)
        sup = float(np.max(np.abs(h.density - ref)))
        bound = float(num["se_factor"] * np.max(h.stderr))
        sups.append(sup)
        bounds.append(bound)
        rows.append([N, sup, bound, res.violations])
        tables[f"histogram_N{N}"] = _hist_table(h)
        timings[f"N={N}"] = time.perf_counter() - t1
    tables["reference"] = Table(["bin_left", "bin_right", "density"],
                                [[float(a), float(b), float(d)] for a, b, d in
                                 zip(np.linspace(0, 1, nb + 1)[:-1], np.linspace(0, 1, nb + 1)[1:],
                                     ref)])
    tables["pathwise"] = Table(["N", "sup_distance", "mc_bound", "violations"], rows)
    i = int(np.argmax(Ns))
    checks = {"largest_N_within_bound": sups[i] <= bounds[i],
              "zero_violations": all(r[3] == 0 for r in rows)}
    if len(Ns) > 1:
        j = int(np.argmin(Ns))
        checks["decreases_with_N"] = sups[i] < sups[j]
    summary = {"N_list": Ns, "sup_distance": sups, "mc_bound": bounds, "gamma": p.gamma,
               "t_end": t_end}
    return ExperimentResult("pathwise", cfg, tables, summary, checks, timings)


RUNNERS = {"corrector": run_corrector_convergence, "stationary": run_stationary_comparison,
           "singular-limit": run_singular_limit, "pathwise": run_pathwise_limit}
