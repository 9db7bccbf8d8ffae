"""Batch command-line front end.

Every subcommand reads a plain-text configuration file, writes CSV/JSON
artifacts plus a run manifest, and is fully deterministic given the
manifest contents (the --threads flag never changes output bytes).

Exit codes: 0 success, 2 configuration problem, 3 missing upstream
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .constants import TWO_PI
from dataclasses import replace as dc_replace

from .params import ConfigError, DerivedParams, derive, load_config
from . import moments as mo
from . import trajectory as tj
from . import wvspec as wv
from . import inference as inf
from .io import write_csv, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4


class MissingArtifact(FileNotFoundError):
    def __init__(self, path, producer):
        super().__init__(f"missing upstream artifact {path}; produce it with "
                         f"`ccsnlab {producer}`")
        self.producer = producer


def _config_sha(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_manifest(out_dir, name, command, args, config_path, seed, grid,
                    outputs, t_start):
    manifest = {
        "tool_version": __version__,
        "command": command,
        "args": {k: v for k, v in sorted(args.items())},
        "config_sha256": _config_sha(config_path) if config_path else None,
        "seed": seed,
        "grid": grid,
        "outputs": [os.path.basename(p) for p in outputs],
        "wall_clock_s": round(time.time() - t_start, 3),
    }
    write_json(os.path.join(out_dir, f"{name}.manifest.json"), manifest)


def _load_params(ns):
    if not ns.config:
        raise ConfigError("--config PATH is required")
    params = load_config(ns.config)
    if ns.model:
        params = params.with_model(ns.model)
    if ns.prescription:
        params = params.with_prescription(ns.prescription)
    return params


def _initial_state(ns) -> mo.MomentState:
    if ns.min_var is not None:
        return mo.initial_squeezed_thermal(ns.sqz_db, min_variance=ns.min_var,
                                           theta0=ns.theta0)
    return mo.initial_squeezed_thermal(ns.sqz_db, beta0=ns.beta0, theta0=ns.theta0)


def _moments_for(d: DerivedParams, init, t_obs, dt=None, store_every=1):
    return mo.integrate_moments(init, d, t_obs, dt=dt, store_every=store_every)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_derive(ns):
    t0 = time.time()
    params = _load_params(ns)
    report = {}
    for model in ("sn", "qg"):
        for presc in ("classical", "quantum"):
            d = derive(params.with_model(model).with_prescription(presc))
            entry = d.as_dict()
            sc = d.scaling()
            entry.update({"vxx_vac_m2": sc.vxx_vac, "vpp_vac_si": sc.vpp_vac,
                          "time_scale_s": sc.time_scale})
            report[f"{model}_{presc}"] = entry
    out = os.path.join(ns.out, "derived.json")
    write_json(out, report)
    _write_manifest(ns.out, "derived", "derive", {"config": ns.config},
                    ns.config, ns.seed, {}, [out], t0)
    return EXIT_OK


def _export_moments_csv(path, traj: mo.MomentTrajectory):
    r, theta, beta = traj.ellipse_arrays()
    write_csv(path, ["t", "h1", "h2", "h3", "r", "theta", "beta"],
              np.column_stack([traj.t, traj.h1, traj.h2, traj.h3, r, theta, beta]))


def cmd_moments(ns):
    t0 = time.time()
    params = _load_params(ns)
    d = derive(params)
    init = _initial_state(ns)
    if ns.figure:
        return _figure_moments(ns, params, init, t0)
    traj = _moments_for(d, init, ns.t_obs, ns.dt, ns.store_every)
    csv_path = os.path.join(ns.out, "moments.csv")
    _export_moments_csv(csv_path, traj)
    ss_c = mo.steady_state_classical(d)
    roots = mo.linearized_roots(d)
    side = {
        "steady_classical": {"h1": ss_c.h1, "h2": ss_c.h2, "h3": ss_c.h3},
        "linearized_roots": [[z.real, z.imag] for z in roots],
        "model": d.model, "prescription": d.prescription,
        "omega_q_rad_s": d.omega_q,
    }
    if d.prescription == "quantum":
        ss_q = mo.steady_state_quantum(d)
        side["steady_quantum"] = {"h1": ss_q.h1, "h2": ss_q.h2, "h3": ss_q.h3}
    json_path = os.path.join(ns.out, "moments.json")
    write_json(json_path, side)
    _write_manifest(ns.out, "moments", "moments",
                    {"t_obs": ns.t_obs, "dt": ns.dt, "sqz_db": ns.sqz_db,
                     "beta0": ns.beta0, "theta0": ns.theta0,
                     "store_every": ns.store_every},
                    ns.config, ns.seed,
                    {"t_obs": ns.t_obs, "dt": traj.dt}, [csv_path, json_path], t0)
    return EXIT_OK


def _figure_moments(ns, params, init, t0):
    fig = ns.figure
    outs = []
    if fig == 1:
        d0 = derive(params)
        powers = np.logspace(-9, -4, 120)
        cols = [powers * 1e9]
        header = ["power_nw"]
        for temp in (1e-3, 1e-2, 1e-1, 1.0):
            vals = []
            for p in powers:
                dd = derive(dc_replace(params, power=float(p), temperature=temp,
                                       model="sn"))
                vals.append(mo.log_ratio(dd, "classical"))
            cols.append(np.array(vals))
            header.append(f"log_ratio_db_T{temp:g}K")
        path = os.path.join(ns.out, "fig1_log_ratio.csv")
        write_csv(path, header, np.column_stack(cols))
        outs.append(path)
    elif fig in (3, 4):
        rows = None
        header = ["t"]
        sweep = ((100e-9, "p100nw"), (1e-6, "p1uw"), (1e-5, "p10uw")) if fig == 3 \
            else ((100e-9, "base"),)
        for power, tag in sweep:
            for model in ("sn", "qg"):
                dd = derive(dc_replace(params, power=power, model=model))
                traj = _moments_for(dd, init, ns.t_obs)
                if rows is None:
                    rows = [traj.t]
                rows.append(traj.h1)
                header.append(f"h1_{model}_{tag}")
        path = os.path.join(ns.out, f"fig{fig}_h1.csv")
        write_csv(path, header, np.column_stack(rows))
        outs.append(path)
        # companion spectrum
        d0 = derive(params)
        traj = _moments_for(d0, init, max(ns.t_obs, 1000.0))
        x = traj.h1 - mo.steady_state_classical(d0).h1
        w = np.hanning(len(x))
        f = np.abs(np.fft.rfft(x * w))
        om = np.fft.rfftfreq(len(x), traj.dt) * TWO_PI
        path2 = os.path.join(ns.out, f"fig{fig}_h1_spectrum.csv")
        write_csv(path2, ["omega_rad_s", "abs_fft_h1"], np.column_stack([om, f]))
        outs.append(path2)
    elif fig == 5:
        header = None
        cols = []
        for power in (100e-9, 1e-6, 1e-5):
            dd = derive(dc_replace(params, power=power, model="sn"))
            lam1 = abs(mo.linearized_roots(dd)[0].real)
            traj = _moments_for(dd, init, min(12.0 / lam1, 2e5),
                                store_every=max(1, int(1.0 / lam1 / 2000)))
            rates = mo.effective_decay_rate(traj)
            cols.append((power, rates, lam1))
        path = os.path.join(ns.out, "fig5_decay_rate.csv")
        rows = []
        for power, rates, lam1 in cols:
            for n, g in rates:
                rows.append([power * 1e9, n, g, lam1])
        write_csv(path, ["power_nw", "peak_index", "gamma_eff", "asymptote"], rows)
        outs.append(path)
    elif fig == 6:
        d0 = derive(params)
        traj = _moments_for(d0, init, ns.t_obs)
        r0 = mo.ellipse_inverse(init.h1, init.h2, init.h3)
        case2 = mo.analytic_case2(r0, d0, traj.t)
        path = os.path.join(ns.out, "fig6_h1_envelope.csv")
        write_csv(path, ["t", "h1", "h1_envelope"],
                  np.column_stack([traj.t, traj.h1, case2["h1_max"]]))
        outs.append(path)
    else:
        raise ConfigError(f"moments has no --figure {fig}")
    _write_manifest(ns.out, f"fig{fig}", "moments",
                    {"figure": fig, "t_obs": ns.t_obs}, ns.config, ns.seed,
                    {}, outs, t0)
    return EXIT_OK


def cmd_trajectory(ns):
    t0 = time.time()
    params = _load_params(ns)
    d = derive(params)
    init = _initial_state(ns)
    traj_m = _moments_for(d, init, ns.t_obs + 2 * ns.dt, dt=ns.dt / ns.substeps)
    n_sim = (int(round(ns.t_obs / ns.dt)) + 1) * ns.substeps
    noise = tj.NoisePath(ns.seed, ns.stream, ns.dt / ns.substeps, n_sim)
    traj = tj.simulate(d, traj_m, (ns.x0, ns.p0), noise, ns.dt, ns.t_obs,
                       substeps=ns.substeps)
    path = os.path.join(ns.out, "trajectory.csv")
    traj.to_csv(path)
    _write_manifest(ns.out, "trajectory", "trajectory",
                    {"dt": ns.dt, "t_obs": ns.t_obs, "stream": ns.stream,
                     "substeps": ns.substeps}, ns.config, ns.seed,
                    {"dt": ns.dt, "n": int(round(ns.t_obs / ns.dt))}, [path], t0)
    return EXIT_OK


def cmd_ensemble(ns):
    t0 = time.time()
    params = _load_params(ns)
    d = derive(params)
    init = _initial_state(ns)
    traj_m = _moments_for(d, init, ns.t_obs + 2 * ns.dt, dt=ns.dt / ns.substeps)
    ens = tj.generate_ensemble(d, traj_m, ns.seed, ns.members, ns.dt, ns.t_obs,
                               substeps=ns.substeps)
    path = os.path.join(ns.out, "ensemble.bin")
    ens.save(path)
    _write_manifest(ns.out, "ensemble", "ensemble",
                    {"members": ns.members, "dt": ns.dt, "t_obs": ns.t_obs,
                     "substeps": ns.substeps}, ns.config, ns.seed,
                    {"dt": ns.dt, "n": ens.n_samples - 1}, [path], t0)
    return EXIT_OK


def _sideband_summary(d, spectrum: wv.WvSpectrum) -> list:
    """Peak positions found in windows around the sideband pair."""
    if d.omega_sn_eff == 0.0:
        return []
    out = []
    om = spectrum.omega
    for target in (d.omega_q - d.omega_m, d.omega_q + d.omega_m):
        win = (om > target - 0.02) & (om < target + 0.02)
        if not np.any(win):
            continue
        vals = np.abs(spectrum.values[win, :]).max(axis=1)
        i = int(np.argmax(vals))
        out.append({"target_rad_s": float(target),
                    "peak_rad_s": float(om[win][i]),
                    "peak_abs_value": float(vals[i])})
    return out


def cmd_wvspec(ns):
    t0 = time.time()
    params = _load_params(ns)
    d = derive(params)
    omega = np.arange(ns.omega_min, ns.omega_max + 0.5 * ns.omega_step,
                      ns.omega_step)
    if ns.figure == 9 and not ns.from_ensemble:
        raise ConfigError("wvspec --figure 9 requires --from-ensemble PATH")
    if ns.from_ensemble:
        if not os.path.exists(ns.from_ensemble):
            raise MissingArtifact(ns.from_ensemble, "ensemble")
        ens = tj.Ensemble.load(ns.from_ensemble)
        t_eval = ns.t_eval if ns.t_eval is not None else 0.5 * ens.dt * (ens.n_samples - 1)
        mean, spread = wv.wv_from_ensemble(ens, t_eval, omega, taper=ns.taper,
                                           normalization=ns.normalization)
        spec = mean
        extra_cols = {"per_trial_std": spread}
    else:
        init = _initial_state(ns)
        t_eval = ns.t_eval if ns.t_eval is not None else ns.t_obs / 2.0
        traj_m = _moments_for(d, init, ns.t_obs + 2 * ns.dt, dt=ns.dt)
        spec = wv.wv_from_kernel(d, traj_m, t_eval, omega, ns.dt,
                                 taper=ns.taper, normalization=ns.normalization)
        extra_cols = {}
    csv_path = os.path.join(ns.out, "wvspec.csv")
    rows = [spec.omega] + [spec.values[:, i] for i in range(spec.values.shape[1])]
    header = ["omega_rad_s"] + [f"t={tv:.10g}" for tv in spec.t]
    for name, col in extra_cols.items():
        header.append(name)
        rows.append(col)
    write_csv(csv_path, header, np.column_stack(rows))
    side = spec.sidecar()
    side["sideband_peaks"] = _sideband_summary(d, spec)
    json_path = os.path.join(ns.out, "wvspec.json")
    write_json(json_path, side)
    _write_manifest(ns.out, "wvspec", "wvspec",
                    {"t_eval": t_eval, "taper": ns.taper,
                     "normalization": ns.normalization,
                     "from_ensemble": bool(ns.from_ensemble)},
                    ns.config, ns.seed,
                    {"omega_min": ns.omega_min, "omega_max": ns.omega_max,
                     "omega_step": ns.omega_step, "dt": ns.dt},
                    [csv_path, json_path], t0)
    return EXIT_OK


def _covariance_pair(params, ns):
    """Build (or load from cache) both models' covariances."""
    cache = inf.cache_dir(ns.cache_dir or None) or ns.out
    covs = {}
    for model in ("sn", "qg"):
        d = derive(params.with_model(model))
        init = _initial_state(ns)
        traj_m = _moments_for(d, init, ns.n * ns.dt + 2 * ns.dt, dt=ns.dt)
        key = inf.covariance_key(d, traj_m, ns.n, ns.dt, 1.0, False, False)
        cov = inf.load_cached(key, model, cache)
        if cov is None:
            cov = inf.build_covariance(d, traj_m, ns.n, ns.dt)
            inf.store_cached(cov, cache)
        covs[model] = cov
    return covs, cache


def cmd_covariance(ns):
    t0 = time.time()
    params = _load_params(ns)
    covs, cache = _covariance_pair(params, ns)
    report = {}
    for model, cov in covs.items():
        report[model] = {
            "key": cov.key, "n": cov.n, "dt": cov.dt, "logdet": cov.logdet,
            "diag_min": float(cov.sigma.diagonal().min()),
            "diag_max": float(cov.sigma.diagonal().max()),
            "cache_path": inf.cache_path(cov.key, model, cache),
        }
    path = os.path.join(ns.out, "covariance.json")
    write_json(path, report)
    _write_manifest(ns.out, "covariance", "covariance",
                    {"n": ns.n, "dt": ns.dt, "sqz_db": ns.sqz_db,
                     "beta0": ns.beta0}, ns.config, ns.seed,
                    {"n": ns.n, "dt": ns.dt}, [path], t0)
    return EXIT_OK


def cmd_infer(ns):
    t0 = time.time()
    params = _load_params(ns)
    cache = inf.cache_dir(ns.cache_dir or None) or ns.out
    covs = {}
    for model in ("sn", "qg"):
        d = derive(params.with_model(model))
        init = _initial_state(ns)
        traj_m = _moments_for(d, init, ns.n * ns.dt + 2 * ns.dt, dt=ns.dt)
        key = inf.covariance_key(d, traj_m, ns.n, ns.dt, 1.0, False, False)
        cov = inf.load_cached(key, model, cache)
        if cov is None:
            raise MissingArtifact(inf.cache_path(key, model, cache), "covariance")
        covs[model] = cov
    z_sn = inf.mc_llr_samples(covs["sn"], covs["qg"], ns.m_datasets, ns.seed, "sn")
    z_qg = inf.mc_llr_samples(covs["sn"], covs["qg"], ns.m_datasets, ns.seed, "qg")
    outs = []
    if ns.figure == 10:
        for n_avg, tag in ((1, "single"), (10, "avg10")):
            zb_sn = inf.group_average(z_sn, n_avg)
            zb_qg = inf.group_average(z_qg, n_avg)
            lo = min(zb_sn.min(), zb_qg.min())
            hi = max(zb_sn.max(), zb_qg.max())
            grid = np.linspace(lo, hi, 400)
            bw_sn = inf.silverman_bandwidth(zb_sn)
            bw_qg = inf.silverman_bandwidth(zb_qg)
            pdf_sn = np.array([np.mean(np.exp(-0.5 * ((g - zb_sn) / bw_sn) ** 2))
                               / (bw_sn * math.sqrt(2 * math.pi)) for g in grid])
            pdf_qg = np.array([np.mean(np.exp(-0.5 * ((g - zb_qg) / bw_qg) ** 2))
                               / (bw_qg * math.sqrt(2 * math.pi)) for g in grid])
            path = os.path.join(ns.out, f"fig10_{tag}.csv")
            write_csv(path, ["z", "pdf_sn", "pdf_qg"],
                      np.column_stack([grid, pdf_sn, pdf_qg]))
            outs.append(path)
    elif ns.figure == 12:
        rows = []
        for n_avg in (1, 2, 3, 5, 7, 10, 15, 20):
            rep = inf.mc_error_rates(covs["sn"], covs["qg"], n_avg,
                                     ns.m_datasets, ns.seed, z_cache=(z_sn, z_qg))
            rows.append([n_avg, rep.false_alarm, rep.false_dismissal,
                         rep.threshold])
        path = os.path.join(ns.out, "fig12_error_rates.csv")
        write_csv(path, ["n_avg", "false_alarm", "false_dismissal", "threshold"],
                  rows)
        outs.append(path)
    rep = inf.mc_error_rates(covs["sn"], covs["qg"], ns.n_avg, ns.m_datasets,
                             ns.seed, z_cache=(z_sn, z_qg))
    path = os.path.join(ns.out, "error_report.json")
    write_json(path, rep.as_dict())
    outs.append(path)
    hist_path = os.path.join(ns.out, "z_histogram.csv")
    zb_sn = inf.group_average(z_sn, ns.n_avg)
    zb_qg = inf.group_average(z_qg, ns.n_avg)
    edges = np.histogram_bin_edges(np.concatenate([zb_sn, zb_qg]), bins=200)
    hist_sn, _ = np.histogram(zb_sn, bins=edges)
    hist_qg, _ = np.histogram(zb_qg, bins=edges)
    write_csv(hist_path, ["z_low", "z_high", "count_sn", "count_qg"],
              np.column_stack([edges[:-1], edges[1:], hist_sn, hist_qg]))
    outs.append(hist_path)
    _write_manifest(ns.out, "infer", "infer",
                    {"m_datasets": ns.m_datasets, "n_avg": ns.n_avg,
                     "figure": ns.figure}, ns.config, ns.seed,
                    {"n": ns.n, "dt": ns.dt}, outs, t0)
    return EXIT_OK


def cmd_sweep(ns):
    t0 = time.time()
    params = _load_params(ns)
    d = derive(params.with_model("sn"))
    levels = [float(x) for x in ns.levels.split(",")]
    res = inf.squeeze_sweep(d, levels, target=ns.target, seed=ns.seed,
                            n=ns.n, dt=ns.dt, m_datasets=ns.m_datasets)
    rows = [[r["level_db"], -1 if r["n_required"] is None else r["n_required"],
             float("nan") if r["rate"] is None else r["rate"]] for r in res]
    csv_path = os.path.join(ns.out, "sweep.csv")
    write_csv(csv_path, ["level_db", "n_required", "rate"], rows)
    json_path = os.path.join(ns.out, "sweep.json")
    write_json(json_path, {"results": res, "target": ns.target})
    _write_manifest(ns.out, "sweep", "sweep",
                    {"levels": ns.levels, "target": ns.target,
                     "m_datasets": ns.m_datasets}, ns.config, ns.seed,
                    {"n": ns.n, "dt": ns.dt}, [csv_path, json_path], t0)
    return EXIT_OK


def cmd_selftest(ns):
    t0 = time.time()
    params = _load_params(ns)
    d = derive(params.with_model("sn"))
    checks = {}
    ss = mo.steady_state_classical(d)
    rhs = mo.riccati_rhs(ss, d, "classical")
    checks["steady_state_residual"] = max(abs(rhs.h1), abs(rhs.h2), abs(rhs.h3)) \
        / max(d.omega_q, d.lambda_star ** 2 / d.omega_q)
    roots = mo.linearized_roots(d)
    checks["roots_stable"] = all(z.real < 0 for z in roots)
    init = mo.initial_squeezed_thermal(3.0, beta0=500.0)
    traj = mo.integrate_moments(init, d, 20.0)
    checks["heisenberg_ok"] = bool(np.all(traj.h1 * traj.h3 - traj.h2 ** 2
                                          >= 1.0 - 1e-6 * traj.h1 * traj.h3))
    covm = inf.build_covariance(d, mo.integrate_moments(init, d, 3.0, dt=0.05),
                                40, 0.05)
    checks["chol_residual"] = float(np.abs(covm.chol @ covm.chol.T
                                           - covm.sigma).max() / covm.sigma.max())
    ok = (checks["steady_state_residual"] < 1e-10 and checks["roots_stable"]
          and checks["heisenberg_ok"] and checks["chol_residual"] < 1e-10)
    path = os.path.join(ns.out, "selftest.json")
    write_json(path, {"checks": {k: (v if isinstance(v, bool) else float(v))
                                 for k, v in checks.items()}, "passed": bool(ok)})
    _write_manifest(ns.out, "selftest", "selftest", {}, ns.config, ns.seed,
                    {}, [path], t0)
    if not ok:
        print(f"selftest failed: {checks}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------

def _add_state_flags(sp):
    sp.add_argument("--sqz-db", type=float, default=4.5,
                    help="initial squeezing level in dB")
    sp.add_argument("--beta0", type=float, default=2.8e3,
                    help="initial ellipse scale factor")
    sp.add_argument("--min-var", type=float, default=None,
                    help="set the smaller quadrature variance instead of beta0")
    sp.add_argument("--theta0", type=float, default=math.pi / 2.0)


def build_parser():
    ap = argparse.ArgumentParser(prog="ccsnlab",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--config", required=False, help="key=value config file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=0,
                        help="cap numba worker threads (0 = library default)")
        sp.add_argument("--model", choices=("sn", "qg"), default=None)
        sp.add_argument("--prescription", choices=("classical", "quantum"),
                        default=None)
        sp.add_argument("--cache-dir", default=None,
                        help="covariance cache directory (default $CCSN_CACHE_DIR)")

    sp = sub.add_parser("derive", help="derived-parameter report")
    common(sp)

    sp = sub.add_parser("moments", help="conditional covariance evolution")
    common(sp)
    _add_state_flags(sp)
    sp.add_argument("--t-obs", type=float, default=40.0)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--store-every", type=int, default=1)
    sp.add_argument("--figure", type=int, default=None)

    sp = sub.add_parser("trajectory", help="single stochastic realization")
    common(sp)
    _add_state_flags(sp)
    sp.add_argument("--t-obs", type=float, default=40.0)
    sp.add_argument("--dt", type=float, default=0.05)
    sp.add_argument("--substeps", type=int, default=1)
    sp.add_argument("--stream", type=int, default=0)
    sp.add_argument("--x0", type=float, default=0.0)
    sp.add_argument("--p0", type=float, default=0.0)

    sp = sub.add_parser("ensemble", help="reproducible trajectory ensemble")
    common(sp)
    _add_state_flags(sp)
    sp.add_argument("--t-obs", type=float, default=40.0)
    sp.add_argument("--dt", type=float, default=0.05)
    sp.add_argument("--substeps", type=int, default=1)
    sp.add_argument("--members", type=int, default=1000)

    sp = sub.add_parser("wvspec", help="time-frequency record spectrum")
    common(sp)
    _add_state_flags(sp)
    sp.add_argument("--t-obs", type=float, default=1000.0)
    sp.add_argument("--dt", type=float, default=0.05)
    sp.add_argument("--t-eval", type=float, default=None)
    sp.add_argument("--omega-min", type=float, default=0.005)
    sp.add_argument("--omega-max", type=float, default=1.2)
    sp.add_argument("--omega-step", type=float, default=0.002)
    sp.add_argument("--taper", choices=("hann", "none"), default="hann")
    sp.add_argument("--normalization", choices=("floor", "raw"), default="floor")
    sp.add_argument("--from-ensemble", default=None)
    sp.add_argument("--figure", type=int, default=None)

    sp = sub.add_parser("covariance", help="record covariance for both models")
    common(sp)
    _add_state_flags(sp)
    sp.add_argument("--n", type=int, default=800)
    sp.add_argument("--dt", type=float, default=0.05)

    sp = sub.add_parser("infer", help="likelihood-based model discrimination")
    common(sp)
    _add_state_flags(sp)
    sp.add_argument("--n", type=int, default=800)
    sp.add_argument("--dt", type=float, default=0.05)
    sp.add_argument("--m-datasets", type=int, default=100000)
    sp.add_argument("--n-avg", type=int, default=1)
    sp.add_argument("--figure", type=int, default=None)

    sp = sub.add_parser("sweep", help="repetitions needed vs squeezing level")
    common(sp)
    sp.add_argument("--levels", default="0.5,1.5,3.0,4.5")
    sp.add_argument("--target", type=float, default=0.01)
    sp.add_argument("--n", type=int, default=800)
    sp.add_argument("--dt", type=float, default=0.05)
    sp.add_argument("--m-datasets", type=int, default=20000)
    sp.add_argument("--figure", type=int, default=None)

    sp = sub.add_parser("selftest", help="quick internal consistency checks")
    common(sp)
    return ap


_DISPATCH = {
    "derive": cmd_derive, "moments": cmd_moments, "trajectory": cmd_trajectory,
    "ensemble": cmd_ensemble, "wvspec": cmd_wvspec,
    "covariance": cmd_covariance, "infer": cmd_infer, "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    if ns.threads and ns.threads > 0:
        try:
            import numba
            numba.set_num_threads(max(1, ns.threads))
        except ImportError:
            pass
    os.makedirs(ns.out, exist_ok=True)
    # taper "none" means no taper
    if getattr(ns, "taper", None) == "none":
        ns.taper = None
    try:
        return _DISPATCH[ns.subcommand](ns)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (mo.HeisenbergViolation, np.linalg.LinAlgError, RuntimeError,
            ZeroDivisionError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
