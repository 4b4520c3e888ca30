"""Config-driven experiments producing CSV tables and JSON summaries.

All outputs are data only; every CSV row repeats the parameters that produced it.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import kernels
from .bistable import (BistableProblem, beta_zero, local_cubic_speed, mckean_speed,
                       nonlinearity_from_dict)
from .errors import ConfigError, MemfrontError, OutOfRegime
from .evolve import run_to_front
from .twfront import FP_TOL, solve_fixed_point, solve_profile
from .twoscale import (homogenization_example, kernel_from_coupling, simulate_two_scale,
                       sturm_solve)

SWEEP_COLUMNS = [
    "beta", "gamma", "a", "D", "status", "error",
    "c_measured", "fit_residual", "c_fixed_point", "fp_residual", "C0",
    "c_mckean", "c_local", "beta0", "bracket_ok",
    "X", "dx", "dt", "T_end", "L", "h", "kernel",
]
BRACKET_SLACK = 5e-3


def worker_count(requested):
    cap = os.environ.get("MEMFRONT_THREADS")
    n = int(requested)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def sweep_betas(sweep):
    """Uniform grid ``beta_min, beta_min + step, ...`` up to ``beta_max`` plus any extras."""
    lo, hi, step = sweep["beta_min"], sweep["beta_max"], sweep["beta_step"]
    n = int(math.floor((hi - lo) / step + 1e-9))
    betas = [round(lo + i * step, 12) for i in range(n + 1)]
    betas += [float(b) for b in sweep.get("extra_betas", ())]
    return sorted(set(betas))


def sign_changes(xs, ys):
    """Linearly interpolated zero crossings of ``ys`` sampled at increasing ``xs``.

    Exact zeros count once; pairs with a missing value are skipped.
    """
    out = []
    pts = [(x, y) for x, y in zip(xs, ys) if y is not None and np.isfinite(y)]
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        if y0 == 0.0:
            out.append(x0)
        elif y0 * y1 < 0:
            out.append(x0 - y0 * (x1 - x0) / (y1 - y0))
    if pts and pts[-1][1] == 0.0:
        out.append(pts[-1][0])
    return out


def _problem(cfg, beta):
    nl = nonlinearity_from_dict(cfg["nonlinearity"])
    return BistableProblem(cfg["D"], nl, -beta)


def _kernel(cfg):
    return kernels.from_dict(cfg["kernel"])


def _evolve_opts(cfg):
    e = cfg["evolve"]
    keys = ("X", "dx", "dt", "T_end", "out_every", "x0", "representation", "scheme")
    return {k: e[k] for k in keys if k in e}


def _front_opts(cfg):
    t = cfg["twfront"]
    return {k: t[k] for k in ("L", "h", "newton_tol", "max_iter", "bc_tol", "layer_tol") if k in t}


def sweep_row(cfg, beta):
    """One sweep row; failures are captured in ``status``/``error``."""
    nl = cfg["nonlinearity"]
    a = nl.get("a", float("nan"))
    ev, tw = cfg["evolve"], cfg["twfront"]
    row = {c: None for c in SWEEP_COLUMNS}
    row.update(beta=beta, gamma=-beta, a=a, D=cfg["D"], X=ev["X"], dx=ev["dx"], dt=ev["dt"],
               T_end=ev["T_end"], L=tw["L"], h=tw["h"], kernel=json.dumps(cfg["kernel"]),
               status="ok", error="")
    try:
        p = _problem(cfg, beta)
        k = _kernel(cfg)
        if nl["type"] == "cubic":
            row["c_mckean"] = mckean_speed(a, beta)
            row["c_local"] = local_cubic_speed(p)
            try:
                row["beta0"] = beta_zero(a)
            except OutOfRegime:
                row["beta0"] = None
        if "fixed_point" in cfg["routes"]:
            fp = solve_fixed_point(p, k, fp_tol=tw.get("fp_tol", FP_TOL), **_front_opts(cfg))
            row["c_fixed_point"] = fp.speed
            row["fp_residual"] = fp.diagnostics["fp_residual"]
            row["C0"] = fp.diagnostics["C0"]
        else:
            row["C0"] = solve_profile(p, k, 0.0, **_front_opts(cfg)).speed
        if "evolve" in cfg["routes"]:
            run = run_to_front(p, k, **_evolve_opts(cfg))
            row["c_measured"] = run.speed
            row["fit_residual"] = run.fit_residual
        c = row["c_measured"] if row["c_measured"] is not None else row["c_fixed_point"]
        if beta <= 0 and c is not None:
            ref = row["C0"]
            row["bracket_ok"] = bool(min(0.0, ref) - BRACKET_SLACK <= c
                                     <= max(0.0, ref) + BRACKET_SLACK)
    except MemfrontError as exc:
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _row_task(args):
    return sweep_row(*args)


def _write_csv(path, rows, columns):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else
                            (repr(float(r[k])) if isinstance(r[k], (float, np.floating)) else r[k]))
                        for k in columns})


def _manifest(path, columns, description):
    path.write_text(json.dumps({"columns": columns, "description": description}, indent=2))


def run_speed_sweep(cfg, outdir=None):
    """Speeds over the configured ``beta`` grid; returns ``(rows, summary)``.

    Rows are computed in a worker pool (size capped by ``MEMFRONT_THREADS``)
    and written in ``beta`` order.
    """
    if "sweep" not in cfg:
        raise ConfigError("speed sweep needs a 'sweep' block")
    betas = sweep_betas(cfg["sweep"])
    if cfg.get("experiment") == "fixed_point_sweep":
        cfg = dict(cfg, routes=["fixed_point"])
    n_workers = worker_count(cfg.get("workers", 1))
    tasks = [(cfg, b) for b in betas]
    if n_workers == 1:
        rows = [_row_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_row_task, tasks))
    summary = sweep_summary(rows, cfg)
    if outdir is not None:
        outdir = Path(outdir)
        _write_csv(outdir / "sweep.csv", rows, SWEEP_COLUMNS)
        _manifest(outdir / "sweep.manifest.json", SWEEP_COLUMNS,
                  "one row per beta; speeds of the memory-equation front")
        (outdir / "sweep_summary.json").write_text(json.dumps(summary, indent=2))
    return rows, summary


def sweep_summary(rows, cfg):
    ok = [r for r in rows if r["status"] == "ok"]
    betas = [r["beta"] for r in ok]
    out = {"n_rows": len(rows), "n_failed": len(rows) - len(ok),
           "failed_fraction": (len(rows) - len(ok)) / max(1, len(rows)),
           "nonlinearity": cfg["nonlinearity"], "kernel": cfg["kernel"]}
    for route, key in (("measured", "c_measured"), ("fixed_point", "c_fixed_point")):
        vals = [r[key] for r in ok]
        if all(v is None for v in vals):
            continue
        out[f"sign_changes_{route}"] = sign_changes(betas, vals)
        if all(r["c_mckean"] is not None for r in ok):
            diff = [None if v is None else v - r["c_mckean"] for v, r in zip(vals, ok)]
            out[f"sign_changes_{route}_minus_mckean"] = sign_changes(betas, diff)
    bracket = [r["bracket_ok"] for r in ok if r["bracket_ok"] is not None]
    out["bracket_all_ok"] = bool(all(bracket)) if bracket else None
    if cfg["nonlinearity"]["type"] == "cubic":
        try:
            out["beta0"] = beta_zero(cfg["nonlinearity"]["a"])
        except OutOfRegime:
            out["beta0"] = None
    return out


def run_front(cfg, outdir=None):
    """Single parameter set: fixed-point front and/or a time-domain run."""
    if "gamma" in cfg:
        gamma = cfg["gamma"]
    else:
        gamma = -cfg.get("beta", 0.0)
    p = BistableProblem(cfg["D"], nonlinearity_from_dict(cfg["nonlinearity"]), gamma)
    k = _kernel(cfg)
    tw = cfg["twfront"]
    result = {"gamma": gamma, "roots": list(p.roots), "params": {
        "nonlinearity": cfg["nonlinearity"], "kernel": cfg["kernel"], "D": cfg["D"],
        "evolve": cfg["evolve"], "twfront": cfg["twfront"]}}
    outdir = Path(outdir) if outdir is not None else None
    if "fixed_point" in cfg["routes"]:
        if "v" in tw:
            sol = solve_profile(p, k, tw["v"], **_front_opts(cfg))
            result["auxiliary_speed"] = sol.speed
        else:
            sol = solve_fixed_point(p, k, fp_tol=tw.get("fp_tol", FP_TOL), **_front_opts(cfg))
            result["fixed_point_speed"] = sol.speed
            result["fp_residual"] = sol.diagnostics["fp_residual"]
            result["sandwich_ok"] = sol.diagnostics["sandwich_ok"]
        if outdir is not None:
            sol.to_csv(outdir / "front_profile.csv", result["params"])
    if "evolve" in cfg["routes"]:
        opts = _evolve_opts(cfg)
        snaps = tuple(cfg["evolve"].get("snapshot_times", ()))
        run = run_to_front(p, k, snapshot_times=snaps, **opts)
        result["measured_speed"] = run.speed
        result["fit_residual"] = run.fit_residual
        if outdir is not None:
            run.write(outdir, "evolve")
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "front_summary.json").write_text(json.dumps(result, indent=2))
    return result


def run_two_scale_demo(cfg, outdir=None):
    """Two-scale example: kernel weight, front of ``(V, W)``, scalar cross-check."""
    ts = cfg["twoscale"]
    problem = homogenization_example(N_y=ts["N_y"], D_eff=ts["D_eff"])
    basis = sturm_solve(problem.D_w, problem.b, ts["N_y_kernel"], min(64, ts["N_y_kernel"]))
    alpha, beta = problem.alpha, problem.beta
    fine_kernel = kernel_from_coupling(basis, alpha, beta)
    X, dx, dt, T = ts["X"], ts["dx"], ts["dt"], ts["T_end"]
    x0 = ts.get("x0", 0.75 * X)
    snaps = tuple(ts.get("snapshot_times", (0.0, T / 2, T)))
    res = simulate_two_scale(problem, X=X, dx=dx, dt=dt, T_end=T, x0=x0,
                             snapshot_times=[t for t in snaps if t > 0])
    out = {"gamma": fine_kernel.gamma, "gamma_simulation_grid": res.gamma,
           "speed": res.speed, "fit_residual": res.fit_residual,
           "direction": "right_to_left" if res.speed < 0 else "left_to_right",
           "max_abs_mean_W": res.max_mean_W,
           "params": {"N_y": ts["N_y"], "N_y_kernel": ts["N_y_kernel"], "D_eff": ts["D_eff"],
                      "X": X, "dx": dx, "dt": dt, "T_end": T, "x0": x0}}
    if ts.get("scalar_check", True):
        run = run_to_front(problem.reduced(), problem.kernel(), X=X, dx=dx, dt=dt, T_end=T, x0=x0)
        out["scalar_speed"] = run.speed
        out["speed_difference"] = abs(run.speed - res.speed)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        basis.to_csv(outdir / "eigen.csv", alpha, beta)
        np.savetxt(outdir / "track.csv", np.column_stack([res.times, res.positions]),
                   delimiter=",", header="t,x_front", comments="", fmt="%.12g")
        x, y = res.state.x, res.state.y
        for t, (V, W) in sorted(res.snapshots.items()):
            np.savetxt(outdir / f"V_t{t:g}.csv", np.column_stack([x, V, W.mean(axis=0)]),
                       delimiter=",", header="x,V,mean_W", comments="", fmt="%.12g")
            xx, yy = np.meshgrid(x, y)
            np.savetxt(outdir / f"W_t{t:g}.csv",
                       np.column_stack([xx.ravel(), yy.ravel(), W.ravel()]),
                       delimiter=",", header="x,y,W", comments="", fmt="%.10g")
        (outdir / "twoscale_summary.json").write_text(json.dumps(out, indent=2))
    return out


def kernel_check(cfg, outdir=None):
    """Validate the kernel block and report its moments and truncation depth."""
    k = _kernel(cfg)
    total, g1 = k.moments()
    out = {"form": k.form, "gamma": k.gamma, "total": total, "g1_hat": g1,
           "tau_max": k.tau_max(), "kernel": cfg["kernel"]}
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "kernel_check.json").write_text(json.dumps(out, indent=2))
    return out

