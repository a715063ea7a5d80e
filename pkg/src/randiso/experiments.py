"""Named experiments: each writes CSV files, derived SVG figures and a report."""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import io
from .attractor import (
    annulus_seeds,
    circle_semidistance,
    forward_fiber,
    pullback_fiber,
    stationary_radius,
)
from .crps import crps_sample, random_periods
from .isochron import foliation_report
from .lyapunov import lyapunov_spectrum
from .models import make_model
from .mrt import (
    AnnulusGrid,
    build_operators,
    expected_period_compare,
    face_flux_period,
    mean_flux_period,
    probe_double_expectation,
    solve_mrt,
    stationary_density,
)
from .noise import sample_path, shift

__all__ = ["Experiment", "EXPERIMENTS", "run_experiment", "default_config"]


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    model: str
    model_params: dict
    noise: dict
    defaults: dict
    func: object
    grid: bool = False

    def coerce(self, key, value):
        d = self.defaults[key]
        if isinstance(d, bool):
            v = str(value).strip().lower()
            if v not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(f"expected a boolean, got {value!r}")
            return v in ("true", "yes", "1")
        if isinstance(d, int):
            return int(value)
        if isinstance(d, float):
            return float(value)
        if isinstance(d, list):
            return io.parse_floats(str(value))
        return str(value).strip()

    def settings(self, cfg):
        out = dict(self.defaults)
        for k, v in cfg.settings.items():
            out[k] = self.coerce(k, v)
        return out


def _check(name, value, tol, passed):
    return {"name": name, "value": float(value), "tol": float(tol), "passed": bool(passed)}


def _horizon(dt, span):
    return (np.ceil(span / dt) + 1) * dt


def _fmt_list(values):
    return ", ".join(f"{v:g}" for v in values)


def _run_figure2(cfg, s, entry, run_dir, workers):
    seed = cfg.seeds[0]
    dt = cfg.dt
    Ts = sorted({0.0, *s["T_forward"], *s["T_pullback"]})
    path = sample_path(seed, dt, _horizon(dt, max(Ts) + cfg.S_trunc), entry.spec.channels)
    R1, R2 = entry.spec.params["R1"], entry.spec.params["R2"]
    seeds = annulus_seeds(s["n_seeds"], R1, R2)
    sigma = entry.spec.params["sigma"]
    files, rad_rows, semi = [], [], {}
    for mode, Tlist in (("forward", [0.0] + list(s["T_forward"])),
                        ("pullback", [0.0] + list(s["T_pullback"]))):
        for T in sorted(set(Tlist)):
            if T == 0:
                cloud = seeds
            elif mode == "forward":
                cloud = forward_fiber(entry, path, T, seeds, scheme=cfg.scheme).cloud
            else:
                cloud = pullback_fiber(entry, path, T, seeds, scheme=cfg.scheme).cloud
            f = os.path.join(run_dir, f"fiber_{mode}_T{T:g}.csv")
            io.write_csv(f, ("mode", "T", "x", "y"), ((mode, T, x, y) for x, y in cloud),
                         comment=f"model={entry.name} seed={seed} sigma={sigma!r} dt={dt!r} "
                                 f"S_trunc={cfg.S_trunc!r}")
            files.append(f)
            t_fiber = T if mode == "forward" else 0.0
            if entry.skew is not None:
                rs = stationary_radius(shift(path, t_fiber) if t_fiber else path, sigma,
                                       cfg.S_trunc, entry.skew.radial_channel).value
                rad_rows.append((mode, T, rs))
                if T > 0:
                    semi[f"{mode}_T{T:g}"] = float(circle_semidistance(cloud, rs))
    rad = os.path.join(run_dir, "attractor_radius.csv")
    io.write_csv(rad, ("mode", "T", "radius"), rad_rows)
    files.append(rad)
    svg = io.render_fibers_svg(os.path.join(run_dir, "figure2.svg"),
                               [f for f in files if "fiber_" in f], rad, lim=max(2.2, R2 * 1.1))
    report = {"run": {"seed": seed, "sigma": sigma, "dt": dt, "scheme": cfg.scheme,
                      "n_seeds": len(seeds)},
              "semidistances": semi}
    checks = []
    key = f"pullback_T{max(s['T_pullback']):g}"
    if key in semi:
        checks.append(_check(f"{key}_semidistance", semi[key], s["hausdorff_tol"],
                             semi[key] <= s["hausdorff_tol"]))
    return files, [svg], report, checks


def _run_crps_periods(cfg, s, entry, run_dir, workers):
    dt = cfg.dt
    paths_needed = _horizon(dt, cfg.S_trunc + s["window"])

    def chunk(seeds):
        paths = [sample_path(k, dt, paths_needed, entry.spec.channels) for k in seeds]
        return random_periods(entry, paths, cfg.S_trunc)[0]

    groups = [cfg.seeds[i : i + 100] for i in range(0, len(cfg.seeds), 100)]
    with ThreadPoolExecutor(workers) as ex:
        T = np.concatenate(list(ex.map(chunk, groups)))
    p = entry.spec.params
    f = os.path.join(run_dir, "periods.csv")
    io.write_csv(f, ("seed", "sigma", "kappa", "T_omega"),
                 ((k, p["sigma"], p.get("kappa", 1.0), t) for k, t in zip(cfg.seeds, T)))
    files, psi_files = [f], []
    for k in cfg.seeds[: s["psi_samples"]]:
        path = sample_path(k, dt, paths_needed, entry.spec.channels)
        smp = crps_sample(entry, path, s["anchor"], s["n_samples"], cfg.S_trunc)
        g = os.path.join(run_dir, f"psi_seed{k}.csv")
        io.write_csv(g, ("t", "x", "y"), ((t, *x) for t, x in zip(smp.times, smp.psi)),
                     comment=f"model={entry.name} seed={k} anchor={s['anchor']!r} "
                             f"T_omega={smp.period!r}")
        psi_files.append(g)
    files += psi_files
    svgs = [io.render_psi_svg(os.path.join(run_dir, "psi.svg"), psi_files)] if psi_files else []
    report = {"periods": {"n_paths": len(T), "mean": float(T.mean()),
                          "se": float(T.std(ddof=1) / np.sqrt(len(T))) if len(T) > 1 else 0.0,
                          "min": float(T.min()), "max": float(T.max())}}
    checks = []
    if entry.name == "hopf_linear":
        err = float(np.max(np.abs(T - 2 * np.pi)))
        checks.append(_check("hopf_period_2pi", err, s["period_tol"], err <= s["period_tol"]))
    return files, svgs, report, checks


def _run_lyapunov_sweep(cfg, s, entry, run_dir, workers):
    dt = cfg.dt
    seed = cfg.seeds[0]
    key = s["sweep_parameter"]
    values = s["sweep_values"] if key else [None]
    path = sample_path(seed, dt, _horizon(dt, s["t_max"] + s["burn_in"] + 1), entry.spec.channels)
    x0 = np.array([1.0, 0.0]) if entry.spec.chart == "planar" else np.array([0.0, 1.0])

    def one(v):
        params = dict(cfg.model_params)
        if v is not None:
            params[key] = v
        e = make_model(cfg.model, params, chart=cfg.chart)
        return lyapunov_spectrum(e, path, x0, s["t_max"], s["reorth_dt"], None, s["burn_in"],
                                 scheme=cfg.scheme)

    with ThreadPoolExecutor(workers) as ex:
        spectra = list(ex.map(one, values))
    sigma = entry.spec.params["sigma"]
    rows = []
    for v, sp_ in zip(values, spectra):
        b = v if key == "b_shear" else entry.spec.params.get("b_shear", "")
        rows.append((entry.name, sigma if key != "sigma" or v is None else v, b,
                     *sp_.exponents, *sp_.standard_errors, sp_.t_max))
    f = os.path.join(run_dir, "spectrum.csv")
    io.write_csv(f, ("model", "sigma", "b_shear", "lambda1", "lambda2", "se1", "se2", "t_max"),
                 rows)
    report = {f"{key}={v:g}" if v is not None else "spectrum": {
        "lambda1": sp_.exponents[0], "lambda2": sp_.exponents[1],
        "se1": sp_.standard_errors[0], "se2": sp_.standard_errors[1],
        "sum_rule_gap": sp_.sum_rule_gap, "sum_rule_se": sp_.sum_se,
        "lambda1_sign": int(np.sign(sp_.exponents[0]))} for v, sp_ in zip(values, spectra)}
    return [f], [], report, []


def _run_isochrons(cfg, s, entry, run_dir, workers):
    dt = cfg.dt
    seed = cfg.seeds[0]
    path = sample_path(seed, dt, _horizon(dt, cfg.S_trunc + 4 * np.pi + s["t_h"] + 30),
                       entry.spec.channels)
    R1, R2 = entry.spec.params["R1"], entry.spec.params["R2"]
    r_grid = np.linspace(R1, R2, s["n_r"])
    rep = foliation_report(entry, path, s["n_anchors"], r_grid, t_h=s["t_h"],
                           S_trunc=cfg.S_trunc, scheme=cfg.scheme)
    sigma = entry.spec.params["sigma"]
    rows = []
    for c in rep["curves"]:
        for r, th, res in zip(c.r, c.theta, c.residual):
            rows.append((r, th, res, c.anchor_phase, seed, sigma, c.s))
    f = os.path.join(run_dir, "isochrons.csv")
    io.write_csv(f, ("r", "theta", "residual", "anchor_phase", "seed", "sigma", "s"), rows)
    rs = stationary_radius(path, sigma, cfg.S_trunc).value if entry.skew else None
    svg = io.render_isochrons_svg(os.path.join(run_dir, "isochrons.svg"), f, radius=rs)
    conv = all(bool(np.all(c.converged)) for c in rep["curves"])
    report = {"foliation": {"ordered": rep["ordered"], "min_gap": rep["min_gap"],
                            "tested": rep["tested"], "rejected": rep["rejected"],
                            "disagreements": rep["disagreements"], "all_converged": conv,
                            "max_residual": max(float(np.nanmax(c.residual))
                                                for c in rep["curves"])}}
    checks = [_check("foliation_disagreements", rep["disagreements"], 0,
                     rep["disagreements"] == 0 and rep["ordered"])]
    return [f], [svg], report, checks


def _grid(cfg, entry):
    g = cfg.grid
    p = entry.spec.params
    return AnnulusGrid(g.get("R1", p["R1"]), g.get("R2", p["R2"]), g.get("n_theta", 256),
                       g.get("n_r", 128))


def _run_mrt_fields(cfg, s, entry, run_dir, workers):
    grid = _grid(cfg, entry)
    ops = build_operators(entry, grid)
    dens = stationary_density(ops)
    J, Tbar, _ = mean_flux_period(dens, entry, grid)
    J2, Tbar2, _ = mean_flux_period(dens, entry, grid, lambda r: s["section_slope"] * (r - grid.R1))
    Jh, Th = face_flux_period(ops, dens)
    fields = solve_mrt(ops, dens, Tbar, entry=entry)
    files = []
    for name, val in (("rho", dens.rho), ("u", fields.u), ("isophase", fields.isophase)):
        files.append(io.write_field_csv(os.path.join(run_dir, f"{name}.csv"), grid, val))
    svgs = [io.render_fields_svg(os.path.join(run_dir, "fields.svg"), files)]
    report = {
        "grid": {"n_theta": grid.n_theta, "n_r": grid.n_r, "R1": grid.R1, "R2": grid.R2},
        "density": {"mass": dens.mass, "residual": dens.residual,
                    "min_before_clip": dens.min_before_clip, "clipped": dens.clipped,
                    "E_r2": grid.integrate(dens.rho * grid.mesh()[1] ** 2)},
        "period": {"J_flux": J, "Tbar": Tbar, "Tbar_section2": Tbar2,
                   "section_rel_diff": abs(Tbar2 - Tbar) / Tbar, "Tbar_grid": Th},
        "mrt": {"residual": fields.residual, "residual_tol": 1e-8,
                "isophase_residual": fields.isophase_residual, "isophase_tol": 1e-6,
                "jump_error": fields.jump_error, "jump_tol": 1e-6, "r_cycle": fields.r_cycle},
    }
    checks = [_check("mrt_residual", fields.residual, 1e-8, fields.residual <= 1e-8),
              _check("jump_condition", fields.jump_error, 1e-6, fields.jump_error <= 1e-6),
              _check("section_independence", abs(Tbar2 - Tbar) / Tbar, 5e-3,
                     abs(Tbar2 - Tbar) / Tbar <= 5e-3)]
    if s["overlay_isochrons"] and entry.skew is not None:
        seed = cfg.seeds[0]
        path = sample_path(seed, cfg.dt, _horizon(cfg.dt, cfg.S_trunc + 4 * np.pi + 40),
                           entry.spec.channels)
        from .isochron import forward_isochrons
        curves = forward_isochrons(entry, path, np.linspace(0, 2 * np.pi, 8, endpoint=False),
                                   np.linspace(grid.R1, grid.R2, 35), S_trunc=cfg.S_trunc)
        f = os.path.join(run_dir, "isochrons.csv")
        io.write_csv(f, ("r", "theta", "residual", "anchor_phase", "seed", "sigma", "s"),
                     ((r, th, res, c.anchor_phase, seed, c.sigma, c.s) for c in curves
                      for r, th, res in zip(c.r, c.theta, c.residual)))
        files.append(f)
        svgs.append(io.render_isochrons_svg(os.path.join(run_dir, "isophase_overlay.svg"), f,
                                            field_csv=files[2]))
    io.write_report(os.path.join(run_dir, "report.txt"), f"mrt_fields {entry.name}", report)
    files.append(os.path.join(run_dir, "report.txt"))
    return files, svgs, report, checks


def _run_period_compare(cfg, s, entry, run_dir, workers):
    grid = _grid(cfg, entry)
    rep = expected_period_compare(entry, grid, cfg.seeds, cfg.dt, s["anchor"], cfg.S_trunc,
                                  workers=workers)
    f = os.path.join(run_dir, "periods.csv")
    p = entry.spec.params
    io.write_csv(f, ("seed", "sigma", "kappa", "T_omega", "r_start", "r_end"),
                 ((k, p["sigma"], p.get("kappa", 1.0), t, a, b) for k, t, a, b in
                  zip(cfg.seeds, rep["periods"], rep["r_start"], rep["r_end"])))
    summary = {k: v for k, v in rep.items() if np.ndim(v) == 0}
    report = {"period_compare": summary}
    io.write_report(os.path.join(run_dir, "report.txt"), f"period_compare {entry.name}", report)
    checks = [_check("mean_period_vs_flux", abs(rep["period_gap"]), 2 * rep["se_T"],
                     rep["period_ok"]),
              _check("expectation_identity", abs(rep["identity_lhs"] - rep["identity_rhs"]),
                     rep["identity_se"] + rep["grid_error"], rep["identity_ok"])]
    return [f, os.path.join(run_dir, "report.txt")], [], report, checks


def _run_double_expectation(cfg, s, entry, run_dir, workers):
    inner = io.parse_seeds(s["inner_seeds"])
    rows = probe_double_expectation(entry, s["t_list"], cfg.seeds, inner, cfg.dt, s["anchor"],
                                    s["t_h"], cfg.S_trunc)
    f = os.path.join(run_dir, "probe.csv")
    io.write_csv(f, ("t", "mean", "deviation", "se", "ci_low", "ci_high", "n", "rejected"),
                 ((r["t"], r["mean"], r["deviation"], r["se"], *r["ci95"], r["n"], r["rejected"])
                  for r in rows))
    report = {f"t={r['t']:g}": {k: v for k, v in r.items() if k != "t"} for r in rows}
    return [f], [], report, []


EXPERIMENTS = {
    e.name: e for e in [
        Experiment("figure2", "pullback and forward attractor fibers (Euler-Maruyama, dt 1e-2)",
                   "hopf_linear", {"sigma": 0.5}, {"seeds": [7], "dt": 1e-2,
                                                   "scheme": "euler_maruyama_ito"},
                   {"T_forward": [1.0, 5.0, 10.0], "T_pullback": [1.0, 5.0, 10.0],
                    "n_seeds": 400, "hausdorff_tol": 1e-2}, _run_figure2),
        Experiment("crps_periods", "random periods T(omega) and samples of psi",
                   "hopf_linear", {"sigma": 0.3}, {"seeds": list(range(100)), "dt": 1e-3},
                   {"anchor": 0.0, "n_samples": 200, "psi_samples": 3, "window": 4 * np.pi,
                    "period_tol": 1e-6}, _run_crps_periods),
        Experiment("lyapunov_sweep", "Lyapunov spectrum across a parameter sweep",
                   "shear_additive", {"sigma": 0.2}, {"seeds": [0], "dt": 5e-3},
                   {"sweep_parameter": "b_shear", "sweep_values": [0.0, 1.0, 2.0, 4.0, 8.0],
                    "t_max": 200.0, "reorth_dt": 0.5, "burn_in": 10.0}, _run_lyapunov_sweep),
        Experiment("isochrons", "random forward isochrons and the foliation check",
                   "amplitude_phase", {"sigma": 0.3, "kappa": 2.0}, {"seeds": [0], "dt": 1e-3},
                   {"n_anchors": 8, "n_r": 35, "t_h": 10.0}, _run_isochrons),
        Experiment("mrt_fields", "stationary density, mean period and mean-return-time fields",
                   "amplitude_phase", {"sigma": 0.3, "kappa": 2.0}, {"seeds": [0], "dt": 1e-3},
                   {"section_slope": 0.3, "overlay_isochrons": True}, _run_mrt_fields, True),
        Experiment("period_compare", "Monte-Carlo E[T] against the flux period",
                   "amplitude_phase", {"sigma": 0.3, "kappa": 2.0},
                   {"seeds": list(range(2000)), "dt": 1e-3}, {"anchor": 0.0},
                   _run_period_compare, True),
        Experiment("double_expectation_probe", "nested Monte-Carlo probe of the expected isochron map",
                   "amplitude_phase", {"sigma": 0.3, "kappa": 2.0},
                   {"seeds": list(range(40)), "dt": 1e-3},
                   {"t_list": [0.0, 1.0, 2.0], "inner_seeds": "100000..100039", "anchor": 0.0,
                    "t_h": 10.0}, _run_double_expectation),
    ]
}


def default_config(name, out="runs"):
    """Configuration with every default of the named experiment filled in."""
    e = EXPERIMENTS[name]
    s = {k: (_fmt_list(v) if isinstance(v, list) else v) for k, v in e.defaults.items()}
    grid = {"n_theta": 256, "n_r": 128} if e.grid else {}
    return io.ExperimentConfig(name, e.model, dict(e.model_params), None,
                               list(e.noise["seeds"]), e.noise["dt"], 20.0,
                               e.noise.get("scheme", "heun_stratonovich"), s, grid, out)


def resolve(cfg):
    """Fill experiment defaults so the stored configuration is complete."""
    e = EXPERIMENTS[cfg.experiment]
    s = {k: (_fmt_list(v) if isinstance(v, list) else v) for k, v in e.settings(cfg).items()}
    cfg.settings = s
    if e.grid:
        cfg.grid = {"n_theta": 256, "n_r": 128, **cfg.grid}
    return cfg


def run_experiment(cfg, workers=1):
    """Run one experiment into ``<out>/<name>-<run id>``; returns ``(run_dir, checks, report)``."""
    import time
    cfg = resolve(cfg)
    e = EXPERIMENTS[cfg.experiment]
    s = e.settings(cfg)
    entry = make_model(cfg.model, cfg.model_params, chart=cfg.chart)
    run_dir = os.path.join(cfg.out, f"{cfg.experiment}-{cfg.digest()}")
    os.makedirs(run_dir, exist_ok=True)
    t0 = time.perf_counter()
    files, svgs, report, checks = e.func(cfg, s, entry, run_dir, workers)
    wall = time.perf_counter() - t0
    io.write_manifest(run_dir, cfg, list(files) + list(svgs), wall, checks)
    return run_dir, checks, report
