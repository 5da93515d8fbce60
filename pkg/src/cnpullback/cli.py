"""Command-line entry point: ``cnpullback <experiment> [--config FILE] [--seed N] [--threads N] [--out DIR]``.

Each run writes ``manifest.json`` (the resolved config), ``summary.json``
(results and pass/fail of built-in checks) and experiment CSVs.

Exit status: 0 all checks passed, 1 a check failed, 2 invalid config,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import density as dens
from . import io
from .kernels._accel import backend, set_threads

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _spec(cfg):
    from .potentials import Potential
    from .sde import SdeSpec

    return SdeSpec(Potential.from_dict(cfg["potential"]), cfg["sigma"], cfg["eta"])


def _key(cfg, index=0):
    from .noise import NoiseStreamKey, StreamRole

    return NoiseStreamKey(cfg["master_seed"], StreamRole.common, particle_id=index)


def _check(checks, name, value, limit, ok):
    checks[name] = {"value": value, "limit": limit, "passed": bool(ok)}


def run_pullback(cfg, out):
    from .noise import sample_path
    from .oracle_ou import OuParams, ou_pullback_density
    from .sde import default_grid, pullback_converged, pullback_run

    spec = _spec(cfg)
    grid = (default_grid(spec, cfg["n_cells"]) if cfg["half_width"] is None
            else dens.Grid.symmetric(cfg["half_width"], cfg["n_cells"]))
    tau = cfg["tau"]
    beta = sample_path(_key(cfg), -tau, 0.0, cfg["dt"]) if tau > 0 else sample_path(_key(cfg), -cfg["dt"], 0.0, cfg["dt"])
    summary, checks = {}, {}
    if cfg["converge_tol"] is not None:
        rep = pullback_converged(spec, beta, cfg["p0"], cfg["dt"], cfg["N"], cfg["converge_tol"],
                                 cfg["master_seed"], grid)
        d = rep.density
        summary["convergence"] = rep.to_dict()
        _check(checks, "pullback_converged", rep.tau_star, "tau cap", rep.converged)
        tau = rep.tau_star
    else:
        d = pullback_run(cfg["p0"], spec, beta, tau, cfg["dt"], cfg["N"], cfg["master_seed"], grid).density
    d.to_csv(out / "density.csv")
    summary.update({"mean": dens.mean(d), "variance": dens.variance(d), "tau": tau})
    pot = spec.potential
    if pot.kind == "quadratic" and tau > 0:
        from .noise import ensure_window

        params = OuParams(pot.params[0], cfg["sigma"], cfg["eta"])
        orc = ou_pullback_density(params, ensure_window(beta, -tau, 0.0), tau, grid)
        orc.to_csv(out / "oracle_density.csv")
        l1 = dens.l1_distance(d, orc)
        rel = abs(summary["variance"] - params.pullback_var) / params.pullback_var
        summary.update({"oracle_l1": l1, "oracle_variance": params.pullback_var})
        _check(checks, "oracle_l1", l1, cfg["l1_tol"], l1 < cfg["l1_tol"])
        _check(checks, "variance_rel_error", rel, cfg["var_rel_tol"], rel < cfg["var_rel_tol"])
    return summary, checks


def _gaussian(grid, m, v):
    from scipy.special import ndtr

    return dens.GridDensity.from_cdf(grid, lambda e: ndtr((e - m) / math.sqrt(v)))


def run_fp_solve(cfg, out):
    from .fokker_planck import FpGrid, check_wic, solve_nonautonomous
    from .noise import sample_path
    from .oracle_ou import OuParams, ou_mbeta
    from .sde import stationary_std

    spec = _spec(cfg)
    hw = cfg["half_width"] or 6.0 * stationary_std(spec.potential, spec.noise_var)
    n = int(round(2 * hw / cfg["dx"]))
    grid = dens.Grid(-n * cfg["dx"] / 2, n * cfg["dx"] / 2, n)
    q0 = _gaussian(grid, cfg["p0_mean"], cfg["p0_var"])
    beta = sample_path(_key(cfg), 0.0, cfg["t1"], cfg["path_dt"])
    sol = solve_nonautonomous(q0, spec, beta, 0.0, cfg["t1"], FpGrid(cfg["fp_dt"], cfg["scheme"]),
                              output_times=cfg["snapshot_times"], strict=False)
    for t, snap in zip(sol.times, sol.snapshots):
        snap.to_csv(out / f"density_t{t:.6g}.csv")
    io.write_csv(out / "mass_log.csv", {"t": sol.step_times, "mass": sol.mass_log})
    wic = check_wic(sol, spec.potential)
    summary = {"final_mean": dens.mean(sol.final), "final_variance": dens.variance(sol.final),
               "max_mass_error": sol.max_mass_error(), "boundary_mass": sol.boundary_mass, "wic": wic,
               "n_steps": int(sol.step_times.size - 1)}
    checks = {}
    _check(checks, "mass_conservation", summary["max_mass_error"], cfg["mass_tol"],
           summary["max_mass_error"] < cfg["mass_tol"])
    if spec.potential.kind == "quadratic":
        a = spec.potential.params[0]
        p = OuParams(a, cfg["sigma"], cfg["eta"])
        t1 = cfg["t1"]
        m = ou_mbeta(p, beta, t1, 0.0, cfg["p0_mean"])
        v = cfg["p0_var"] * math.exp(-2 * a * t1) + p.transition_var(t1)
        orc = _gaussian(sol.final.grid, m, v)
        l1 = dens.l1_distance(sol.final, orc)
        summary["oracle_l1"] = l1
        _check(checks, "oracle_l1", l1, cfg["l1_tol"], l1 < cfg["l1_tol"])
    return summary, checks


def run_contraction(cfg, out):
    from .contraction import build_profile, verify_contraction
    from .noise import sample_path
    from .potentials import Potential
    from .sde import SdeSpec

    pot = Potential.from_dict(cfg["potential"])
    prof = build_profile(pot, cfg["sigma"], n_r=cfg["n_r"])
    prof.check_valid()
    prof.to_csv(out / "profile.csv")
    prof.write_constants(out / "constants.json")
    summary, checks = {"constants": prof.constants()}, {}
    if cfg["verify"]:
        spec = SdeSpec(pot, cfg["sigma"], cfg["eta"])
        T = max(cfg["checkpoints"])
        rows = {"seed": [], "t": [], "w1_sigma": [], "bound": []}
        ok = True
        for s in range(cfg["n_seeds"]):
            beta = sample_path(_key(cfg, s), 0.0, T, cfg["dt"])
            rep = verify_contraction(spec, beta, cfg["x_pair"][0], cfg["x_pair"][1], prof, T, cfg["checkpoints"],
                                     cfg["N"], cfg["dt"], cfg["master_seed"], cfg["slack"])
            ok &= rep.passed
            rows["seed"] += [s] * rep.times.size
            rows["t"] += rep.times.tolist()
            rows["w1_sigma"] += rep.w1_sigma.tolist()
            rows["bound"] += rep.bound.tolist()
        io.write_csv(out / "contraction_decay.csv", rows)
        _check(checks, "contraction_envelope", None, f"slack {cfg['slack']}", ok)
    return summary, checks


def run_figure1(cfg, out):
    from .ergodic import time_average
    from .noise import sample_path
    from .oracle_ou import dw_stationary_density
    from .potentials import Potential
    from .sde import SdeSpec, default_grid

    a, s2 = cfg["a"], cfg["noise_var"]
    rows = {"case": [], "eta": [], "sigma": [], "time_avg_variance": [], "std_error": [], "reference": []}
    overlay = {}
    checks = {}
    grid = None
    for i, (eta, ref) in enumerate(zip(cfg["etas"], cfg["references"])):
        sigma = math.sqrt(s2 - eta * eta)
        spec = SdeSpec(Potential.double_well(a), sigma, eta)
        grid = default_grid(spec, cfg["n_cells"]) if grid is None else grid
        beta = sample_path(_key(cfg, i), 0.0, cfg["T"], cfg["dt"])
        ser = time_average(spec, beta, 0.0, "variance", cfg["T"], cfg["burn_in"], cfg["dt_obs"], "particles",
                           cfg["N"], cfg["dt"], cfg["master_seed"], grid)
        io.write_csv(out / f"series_case{i}.csv", ser.to_columns())
        overlay[f"case{i}"] = ser.final.values
        for k, v in zip(rows, (i, eta, sigma, ser.average, ser.std_error, ref)):
            rows[k].append(v)
        _check(checks, f"case{i}_eta{eta:.4g}", ser.average, f"{ref} +/- {cfg['tol']}",
               abs(ser.average - ref) <= cfg["tol"])
    stat = dw_stationary_density(a, s2, grid)
    cols = {"x": grid.centres, **overlay, "stationary": stat.values}
    io.write_csv(out / "figure1_densities.csv", cols)
    io.write_csv(out / "figure1.csv", rows)
    return {"table": rows}, checks


def run_ou_validate(cfg, out):
    from .fokker_planck import FpGrid, solve_nonautonomous
    from .noise import sample_path
    from .oracle_ou import (OuParams, default_grid, ou_pullback_density, ou_stationary_density,
                            ou_transition_density)
    from .sde import SdeSpec, pullback_run

    p = OuParams(cfg["a"], cfg["sigma"], cfg["eta"])
    spec = SdeSpec(p.potential(), p.sigma, p.eta)
    grid = default_grid(p)
    checks, summary = {}, {}
    # particle engine against the pullback oracle
    beta = sample_path(_key(cfg), -cfg["tau"], 0.0, cfg["dt"])
    d = pullback_run(0.0, spec, beta, cfg["tau"], cfg["dt"], cfg["N"], cfg["master_seed"], grid).density
    orc = ou_pullback_density(p, beta, cfg["tau"], grid)
    d.to_csv(out / "engine_pullback.csv")
    orc.to_csv(out / "oracle_pullback.csv")
    l1 = dens.l1_distance(d, orc)
    rel = abs(dens.variance(d) - p.pullback_var) / p.pullback_var
    _check(checks, "engine_vs_oracle_l1", l1, 0.05, l1 < 0.05)
    _check(checks, "engine_variance_rel_error", rel, 0.03, rel < 0.03)
    # solver against the transition law
    n = int(round(2 * 6 * math.sqrt(p.stationary_var) / cfg["dx"]))
    g2 = dens.Grid(-n * cfg["dx"] / 2, n * cfg["dx"] / 2, n)
    bfw = sample_path(_key(cfg, 1), 0.0, 1.0, cfg["path_dt"])
    q0 = ou_transition_density(p, bfw, 0.05, 0.0, 0.0, g2)
    sol = solve_nonautonomous(q0, spec, bfw, 0.05, 1.0, FpGrid(cfg["fp_dt"]))
    tr = ou_transition_density(p, bfw, 1.0, 0.0, 0.0, sol.final.grid)
    l1fp = dens.l1_distance(sol.final, tr)
    sol.final.to_csv(out / "solver_t1.csv")
    _check(checks, "solver_vs_transition_l1", l1fp, 5e-3, l1fp < 5e-3)
    _check(checks, "solver_mass", sol.max_mass_error(), 1e-8, sol.max_mass_error() < 1e-8)
    # average of pullback densities against the stationary law
    acc = np.zeros(grid.n_cells)
    tau = p.default_tau()
    for j in range(cfg["n_paths"]):
        b = sample_path(_key(cfg, 2 + j), -tau, 0.0, cfg["dt"])
        acc += ou_pullback_density(p, b, tau, grid).values
    avg = dens.GridDensity(grid, acc / cfg["n_paths"])
    stat = ou_stationary_density(p, grid)
    l1d = dens.l1_distance(avg, stat)
    io.write_csv(out / "disintegration.csv", {"x": grid.centres, "average": avg.values, "stationary": stat.values})
    _check(checks, "disintegration_l1", l1d, 0.05, l1d < 0.05)
    _check(checks, "localization", p.pullback_var, p.stationary_var, p.pullback_var < p.stationary_var or p.eta == 0)
    summary.update({"engine_l1": l1, "solver_l1": l1fp, "disintegration_l1": l1d})
    return summary, checks


def run_ergodic(cfg, out):
    from .ergodic import ergodic_consistency
    from .sde import default_grid

    spec = _spec(cfg)
    grid = default_grid(spec, cfg["n_cells"])
    rep, series, est = ergodic_consistency(spec, cfg["observable"], cfg["T"], cfg["n_paths"], cfg["tau"],
                                           cfg["burn_in"], cfg["N"], cfg["N_paths"], cfg["dt"], cfg["dt_obs"],
                                           cfg["master_seed"], grid)
    io.write_csv(out / "series.csv", series.to_columns())
    io.write_csv(out / "ensemble.csv", {"path": np.arange(est.values.size) + 1, "value": est.values})
    checks = {}
    _check(checks, "ergodic_consistency", abs(rep.time_average - rep.ensemble_average),
           f"3 x {rep.combined_se:.3g}", rep.agree)
    return {"report": rep.to_dict(), "cauchy_gap": series.cauchy_gap()}, checks


RUNNERS = {"pullback": run_pullback, "fp-solve": run_fp_solve, "contraction": run_contraction,
           "figure1": run_figure1, "ou-validate": run_ou_validate, "ergodic": run_ergodic}


def run(cfg: dict) -> int:
    """Execute a resolved config; returns the exit status."""
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "manifest.json", cfg)
    set_threads(cfg["threads"])
    summary, checks = RUNNERS[cfg["experiment"]](cfg, out)
    passed = all(c["passed"] for c in checks.values())
    io.write_json(out / "summary.json", {"experiment": cfg["experiment"], "backend": backend(),
                                         "results": summary, "checks": checks, "passed": passed})
    return EXIT_OK if passed else EXIT_CHECK


def build_parser():
    ap = argparse.ArgumentParser(prog="cnpullback", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in cfgmod.EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config file (defaults used when omitted)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--threads", type=int, help="worker threads (overrides the config)")
        sp.add_argument("--out", type=str, help="output directory (overrides the config)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"master_seed": args.seed, "threads": args.threads, "output_dir": args.out}
    try:
        if args.config is not None:
            cfg = cfgmod.load(args.config, args.experiment, overrides)
        else:
            cfg = cfgmod.resolve({"experiment": args.experiment}, args.experiment, overrides)
    except (cfgmod.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = run(cfg)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"{type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"{cfg['experiment']}: {'passed' if status == EXIT_OK else 'CHECKS FAILED'} -> {cfg['output_dir']}")
    return status


if __name__ == "__main__":
    sys.exit(main())
