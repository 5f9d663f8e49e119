"""Scenario runners: initial data, solver runs and the diagnostics each scenario requires."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import integrate
from scipy.optimize import minimize_scalar

from .config import ScenarioConfig
from .diagnostics import (CheckResult, DiagnosticsReport, Series, aronson_benilan_check, check_trapped,
                          claim_i_identity, contraction_series, convergence_series, laplacian_weight_sign,
                          potential_decay_check, sandwich_bounds_check, weighted_contraction_series)
from .errors import ConfigurationError
from .grid import (RadialField, field_from_function, fit_tail_exponent, interpolate, is_divergent,
                   l1_distance, make_grid, weighted_l1_distance)
from .profiles import (Barenblatt, BarenblattSpec, RescaledBarenblatt, derive_params, find_k0,
                       pde_residual)
from .rescaling import from_rescaled, rescale_trajectory, rescaled_residual, second_kind_rescale, to_rescaled
from .selfsimilar import (YamabeProfile, find_anomalous_theta, profile_ode_residual,
                          yamabe_constant, yamabe_profile)
from .solver import (AtExtinction, AtTime, DirichletAnalytic, SolverConfig, TailExtrapolation, Trajectory,
                     estimate_extinction_time, run)

# (N, m) pairs for the closed-form checks: three integrable, two nonintegrable
CLOSED_FORM_PAIRS = ((3, 0.2), (4, 0.3), (5, 0.5), (6, 0.4), (8, 0.5))


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    report: DiagnosticsReport
    trajectories: Dict[str, Trajectory] = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.report.passed


def _params(cfg: ScenarioConfig):
    s = cfg.scenario
    return derive_params(s["N"], s["m"], s["T"])


def _grid(cfg: ScenarioConfig):
    g = cfg.grid
    return make_grid(g["Rmax"], g["M"], g["r_lin"], cfg.scenario["N"])


def _solver_config(cfg: ScenarioConfig, boundary, stop, **changes) -> SolverConfig:
    opts = dict(cfg.solver)
    opts.update(changes)
    return SolverConfig(cfg.scenario["m"], boundary, stop, **opts)


def _tau_ladder(cfg: ScenarioConfig, T: float):
    s = cfg.scenario
    tau0 = -math.log(T)
    n = int(round(s["tau_max"] / s["tau_step"]))
    taus = tau0 + s["tau_step"] * np.arange(n + 1)
    return taus, T - np.exp(-taus)


def _mass_neutral_coefficient(p, k0: float) -> float:
    """c with integral of B_{k0}(., 0) (e^{-r^2} - c e^{-r^2/4}) = 0."""
    B = Barenblatt(p, k0)
    N = p.N

    def moment(scale):
        val, _ = integrate.quad(lambda r: r ** (N - 1) * B(r, 0.0) * math.exp(-r * r / scale), 0.0, np.inf,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return val

    return moment(1.0) / moment(4.0)


def build_initial_data(cfg: ScenarioConfig, grid=None) -> RadialField:
    """Scenario initial data u0 on ``grid`` (default: the configured grid)."""
    p = _params(cfg)
    s = cfg.scenario
    grid = _grid(cfg) if grid is None else grid
    name = cfg.name
    if name == "thm-integrable":
        k0, a = s["k0"], s["amplitude"]
        B = Barenblatt(p, k0)
        c = _mass_neutral_coefficient(p, k0)
        fn = lambda r: B(r, 0.0) * (1.0 + a * (np.exp(-r * r) - c * np.exp(-r * r / 4.0)))
        f = field_from_function(grid, fn, B.tail(0.0), {"k0": k0, "c_adj": c})
    elif name == "thm-nonintegrable":
        k0, a = s["k0"], s["amplitude"]
        B = Barenblatt(p, k0)
        f = field_from_function(grid, lambda r: B(r, 0.0) * (1.0 + a * np.exp(-r * r)), B.tail(0.0), {"k0": k0})
    elif name in ("example-longer", "yamabe"):
        B = Barenblatt(p, s["k0"])
        A, L = s["bump_amplitude"], s["bump_scale"]
        q = (p.N - 2) / (2.0 * p.m)
        fn = lambda r: B(r, 0.0) + A * (1.0 + (r / L) ** 2) ** (-q)
        f = field_from_function(grid, fn, B.tail(0.0), {"k0": s["k0"], "bump_amplitude": A})
    elif name == "appendix-onesided":
        B = Barenblatt(p, s["k0"])
        d = s["depth"]
        f = field_from_function(grid, lambda r: B(r, 0.0) * (1.0 - d * np.exp(-r * r)), B.tail(0.0),
                                {"k0": s["k0"], "depth": d})
    elif name == "barenblatt-selftest":
        B = Barenblatt(p, s["k0"])
        f = B.field(grid, 0.0)
    else:  # pragma: no cover - guarded by the config schema
        raise ConfigurationError(f"scenario.name: unknown scenario {name}")
    return f


# -- shared pieces -----------------------------------------------------------------------

def _control_check(good: Series, controls: Dict[float, Series], metrics, factor: float) -> CheckResult:
    """Control runs must end at least ``factor`` times above the converged distance."""
    worst, info = -math.inf, {}
    for k, series in controls.items():
        for key in metrics:
            g, c = good.columns[key][-1], series.columns[key][-1]
            ratio = factor * g / c if c > 0 else math.inf
            info[f"k={k:g}:{key}"] = {"control_final": c, "converged_final": g}
            worst = max(worst, ratio)
    return CheckResult.make("control_plateau", worst, good.x[-1], 1.0, factor=factor, runs=info)


def _fit_tail_at(traj: Trajectory, t: float, r_min: float):
    i = int(np.argmin(np.abs(np.asarray(traj.times) - t)))
    return traj.times[i], fit_tail_exponent(traj.fields[i], r_min)


# -- scenarios ---------------------------------------------------------------------------

def _run_selftest(cfg: ScenarioConfig, report: DiagnosticsReport, result: ScenarioResult):
    s, tol = cfg.scenario, cfg.tolerances
    T = s["T"]

    # closed forms
    worst_res, worst_stat, worst_iso, worst_trip = 0.0, 0.0, 0.0, 0.0
    rng = np.random.default_rng(12345)
    for N, m in CLOSED_FORM_PAIRS:
        p = derive_params(N, m, T)
        B = Barenblatt(p, 1.0)
        rr = rng.uniform(0.0, 5.0, 100)
        tt = rng.uniform(0.0, 0.9 * T, 100)
        res = np.array([pde_residual(B, p, r, t) for r, t in zip(rr, tt)])
        worst_res = max(worst_res, float(np.max(np.abs(res))))
        y = np.linspace(0.0, 5.0, 101)
        # differenced residual relative to the profile height
        prof = RescaledBarenblatt(p, 1.0)
        stat = np.max(np.abs(rescaled_residual(lambda x: prof(x), p, y))) / prof(0.0)
        worst_stat = max(worst_stat, float(stat))
        g = make_grid(1e3, 400, 5.0, N)
        for frac in (0.1, 0.5, 0.99):
            t = frac * T
            for k in (0.5, 1.0, 2.0):
                ref = RescaledBarenblatt(p, k)
                r = to_rescaled(Barenblatt(p, k).field(g, t), t, p)
                exact = ref(r.field.r)
                worst_iso = max(worst_iso, float(np.max(np.abs(r.field.values - exact)) / np.max(exact)))
                back, tb = from_rescaled(r, p)
                src = Barenblatt(p, k)(back.r, t)
                worst_trip = max(worst_trip, float(np.max(np.abs(back.values - src)) / np.max(src)),
                                 abs(tb - t) / T)
    report.add(CheckResult.make("barenblatt_pde_residual", worst_res, None, tol["residual"], samples=500))
    report.add(CheckResult.make("rescaled_stationarity", worst_stat, None, 1e-6, differencing_step=2e-4,
                                normalization="peak value"))
    report.add(CheckResult.make("rescaling_isometry", worst_iso, None, 1e-12))
    report.add(CheckResult.make("rescaling_round_trip", worst_trip, None, 1e-12))

    # solver fidelity on the default grid
    p = derive_params(s["N"], s["m"], T)
    B = Barenblatt(p, s["k0"])
    g0 = make_grid(N=s["N"])
    t_end = 0.9 * T
    times = list(np.linspace(0.0, t_end, 91)[1:])
    errors = {}
    trajs = {}
    for target in (2.0 * cfg.solver["adapt_target"], cfg.solver["adapt_target"]):
        sc = _solver_config(cfg, DirichletAnalytic(p, BarenblattSpec(s["k0"], T)), AtTime(t_end),
                            adapt_target=target)
        tr = run(B.field(g0, 0.0), sc, times)
        err = max(float(np.max(np.abs(f.values - B(f.r, t)))) / float(B(0.0, t)) for t, f in tr)
        errors[target] = err
        trajs[target] = tr
    coarse, fine = sorted(errors, reverse=True)
    ratio = errors[coarse] / errors[fine]
    result.trajectories["fidelity"] = trajs[fine]
    report.add(CheckResult.make("solver_sup_error", errors[fine], t_end, tol["solver_error"],
                                adapt_target=fine))
    margin = max(tol["halving_low"] - ratio, ratio - tol["halving_high"])
    report.add(CheckResult.make("dt_halving_ratio", margin, None, 0.0, ratio=ratio, coarse_error=errors[coarse],
                                fine_error=errors[fine]))
    T_est = estimate_extinction_time(trajs[fine])
    report.add(CheckResult.make("extinction_time", abs(T_est - T) / T, None, tol["extinction"], T_est=T_est))
    result.values.update({"sup_error": errors[fine], "halving_ratio": ratio, "T_est": T_est,
                          "closed_form_residual": worst_res})

    # Barenblatt pair: contraction, potential decay, Aronson-Benilan
    k_hi, k_lo = s["k1"], s["k2"]
    g = _grid(cfg)
    horizon = s["horizon"] * T
    times = list(np.linspace(0.0, horizon, s["snapshots"] + 1)[1:])
    pair = {}
    for k in (k_lo, k_hi):
        sc = _solver_config(cfg, DirichletAnalytic(p, BarenblattSpec(k, T)), AtTime(horizon))
        pair[k] = run(Barenblatt(p, k).field(g, 0.0), sc, times)
    result.trajectories["pair_low"] = pair[k_lo]
    result.trajectories["pair_high"] = pair[k_hi]
    series, check = contraction_series(pair[k_lo], pair[k_hi], tol["contraction"])
    report.add(check)
    report.series["contraction"] = series
    report.add(potential_decay_check(pair[k_lo], pair[k_hi], p.m, tol["potential"]))
    report.add(aronson_benilan_check(pair[k_lo], p.m, tol["aronson_benilan"]))


def _run_integrable(cfg: ScenarioConfig, report: DiagnosticsReport, result: ScenarioResult):
    s, tol = cfg.scenario, cfg.tolerances
    p = _params(cfg)
    T, k0 = p.T, s["k0"]
    grid = _grid(cfg)
    u0 = build_initial_data(cfg, grid)

    exact = Barenblatt(p, k0).field(grid, 0.0)
    k_exact = find_k0(exact, p, s["k1"], s["k2"])
    k_found = find_k0(u0, p, s["k1"], s["k2"])
    err = max(abs(k_exact - k0), abs(k_found - k0)) / k0
    report.add(CheckResult.make("k0_recovery", err, None, tol["k0_recovery"], k0_exact_input=k_exact,
                                k0_perturbed_input=k_found))
    result.values.update({"k0_exact_input": k_exact, "k0_found": k_found})

    taus, ts = _tau_ladder(cfg, T)
    sc = _solver_config(cfg, DirichletAnalytic(p, BarenblattSpec(k0, T)), AtTime(float(ts[-1])))
    traj = run(u0, sc, ts[1:])
    result.trajectories["solution"] = traj
    report.add(check_trapped(traj, p, s["k1"], s["k2"], tol["trapped"]))
    resc = rescale_trajectory(traj, p)
    result.trajectories["rescaled"] = resc

    series, check = convergence_series(resc, p, k_found, window=tol["convergence_window"],
                                       factor=tol["convergence_factor"], slack=tol["contraction"])
    report.add(check)
    report.series["convergence"] = series
    controls = {}
    for k in (0.5 * k_found, 1.5 * k_found):
        cs, cc = convergence_series(resc, p, k, window=tol["convergence_window"], name=f"control_k{k:g}")
        controls[k] = cs
        report.series[f"control_k{k:g}"] = cs
    report.add(_control_check(series, controls, ("sup", "l1"), tol["control_factor"]))
    report.add(aronson_benilan_check(traj, p.m, tol["aronson_benilan"]), mandatory=False)
    result.values["series"] = series
    result.values["controls"] = controls


def _run_nonintegrable(cfg: ScenarioConfig, report: DiagnosticsReport, result: ScenarioResult):
    s, tol = cfg.scenario, cfg.tolerances
    p = _params(cfg)
    T, k0 = p.T, s["k0"]
    grid = _grid(cfg)

    b1 = RescaledBarenblatt(p, 1.0).field(grid)
    b2 = RescaledBarenblatt(p, 2.0).field(grid)
    plain = l1_distance(b1, b2)
    weighted = weighted_l1_distance(b1, b2, p, s["k2"])
    report.add(CheckResult.make("plain_distance_divergent", 0.0 if is_divergent(plain) else 1.0, None, 0.0,
                                value=plain))
    # the weighted distance between two rescaled Barenblatts diverges logarithmically in this regime
    report.add(CheckResult.make("weighted_distance_finite", 0.0 if not is_divergent(weighted) else 1.0, None,
                                0.0, value=weighted), mandatory=False)
    result.values.update({"plain_b1_b2": plain, "weighted_b1_b2": weighted})

    radii = np.concatenate([[0.0], np.logspace(-3, 4, 999)])
    _, _, ci = claim_i_identity(p, s["k2"], radii, tol["identity"])
    report.add(ci)
    report.add(laplacian_weight_sign(p, s["k2"], radii=radii))

    u0 = build_initial_data(cfg, grid)
    taus, ts = _tau_ladder(cfg, T)
    envelope = DirichletAnalytic(p, BarenblattSpec(k0, T))
    traj = run(u0, _solver_config(cfg, envelope, AtTime(float(ts[-1]))), ts[1:])
    result.trajectories["solution"] = traj
    report.add(check_trapped(traj, p, s["k1"], s["k2"], tol["trapped"]))
    resc = rescale_trajectory(traj, p)
    result.trajectories["rescaled"] = resc
    series, check = convergence_series(resc, p, k0, k2=s["k2"], window=tol["convergence_window"],
                                       factor=tol["convergence_factor"], slack=tol["contraction"])
    report.add(check)
    report.series["convergence"] = series
    result.values["series"] = series

    # same discretization started from B_{k0}: separates the contraction from the solver's drift
    ref = run(Barenblatt(p, k0).field(grid, 0.0), _solver_config(cfg, envelope, AtTime(float(ts[-1]))), ts[1:])
    ref_resc = rescale_trajectory(ref, p)
    result.trajectories["reference_rescaled"] = ref_resc
    ws, wc = weighted_contraction_series(resc, ref_resc, p, s["k2"], tol["contraction"])
    wc.name = "weighted_contraction_vs_discrete_reference"
    report.add(wc, mandatory=False)
    report.series["weighted_contraction"] = ws
    floor, _ = convergence_series(ref_resc, p, k0, k2=s["k2"], window=tol["convergence_window"])
    report.series["discretization_floor"] = floor
    result.values["floor"] = floor


def _run_longer(cfg: ScenarioConfig, report: DiagnosticsReport, result: ScenarioResult, yamabe: bool):
    s, tol = cfg.scenario, cfg.tolerances
    p = _params(cfg)
    T = p.T
    grid = _grid(cfg)
    u0 = build_initial_data(cfg, grid)
    t_max = 10.0 * T
    dt_snap = T / s["snapshots"]
    times = list(np.arange(1, int(t_max / dt_snap) + 1) * dt_snap)
    sc = _solver_config(cfg, TailExtrapolation(), AtExtinction(1e-30, t_max))
    traj = run(u0, sc, times)
    result.trajectories["solution"] = traj
    T_est = estimate_extinction_time(traj)
    result.values["T_est"] = T_est
    need = T * (1.0 + tol["longer_margin"])
    report.add(CheckResult.make("outlives_barenblatt", (need - T_est) / T, None, 0.0, T_est=T_est,
                                required=need))

    r_min = grid.Rmax / 10.0
    t_a, p_a = _fit_tail_at(traj, 0.5 * T, r_min)
    slow = p.tail_exponent
    report.add(CheckResult.make("tail_before_T", abs(p_a - slow) / slow, t_a, tol["tail"], fitted=p_a,
                                expected=slow))
    t_b, p_b = _fit_tail_at(traj, T + 0.3 * (T_est - T), r_min)
    fast = p.fast_tail_exponent
    report.add(CheckResult.make("tail_after_T", tol["fast_tail_fraction"] * fast - p_b, t_b, 0.0, fitted=p_b,
                                expected=fast))
    result.values.update({"tail_before": p_a, "tail_after": p_b})
    report.add(aronson_benilan_check(traj, p.m, tol["aronson_benilan"]), mandatory=False)

    if not yamabe:
        return
    theta = find_anomalous_theta(p)
    report.add(CheckResult.make("anomalous_theta", abs(theta), None, 1e-4, theta=theta))
    eta = np.linspace(0.0, 50.0, 501)
    yp = YamabeProfile(p.N, 1.0)
    ode = float(np.max(np.abs(profile_ode_residual(yp, p, 0.0, eta))))
    report.add(CheckResult.make("yamabe_ode_residual", ode, None, tol["residual"], K_N=yamabe_constant(p.N)))

    # second-kind profile close to extinction, lambda fitted in the sup norm
    t_target = T_est - 0.1 * (T_est - T)
    i = int(np.argmin(np.abs(np.asarray(traj.times) - t_target)))
    t_i = traj.times[i]
    alpha = (p.N + 2) / 4.0
    prof = second_kind_rescale(traj.fields[i], t_i, T_est, 0.0, alpha, p.m)
    eta = np.linspace(0.0, 20.0, 401)
    vals = np.asarray(interpolate(prof, eta))

    def rel_sup(log_lam):
        ref = yamabe_profile(p.N, math.exp(log_lam), eta)
        return float(np.max(np.abs(vals - ref)) / np.max(ref))

    # the amplitude at eta=0 fixes lambda; refine around it
    lam0 = yamabe_constant(p.N) * vals[0] ** (-2.0 / (p.N + 2))
    res = minimize_scalar(rel_sup, bounds=(math.log(lam0) - 1.0, math.log(lam0) + 1.0), method="bounded",
                          options={"xatol": 1e-10})
    lam = math.exp(res.x)
    report.add(CheckResult.make("yamabe_profile_match", res.fun, t_i, tol["profile"], lam=lam,
                                eta_max=20.0))
    result.values.update({"theta_star": theta, "lambda": lam, "profile_error": res.fun})


def _run_appendix(cfg: ScenarioConfig, report: DiagnosticsReport, result: ScenarioResult):
    s, tol = cfg.scenario, cfg.tolerances
    p = _params(cfg)
    T, k0 = p.T, s["k0"]
    grid = _grid(cfg)
    u0 = build_initial_data(cfg, grid)
    taus, ts = _tau_ladder(cfg, T)
    traj = run(u0, _solver_config(cfg, DirichletAnalytic(p, BarenblattSpec(k0, T)), AtTime(float(ts[-1]))),
               ts[1:])
    result.trajectories["solution"] = traj
    T_est = estimate_extinction_time(traj)
    report.add(CheckResult.make("same_extinction_time", abs(T_est - T) / T, None, tol["extinction"], T_est=T_est))
    resc = rescale_trajectory(traj, p)
    result.trajectories["rescaled"] = resc
    tau0 = -math.log(T) + 1.0
    sw = sandwich_bounds_check(resc, p, s["r0"], tau0, initial=u0, k=k0)
    report.add(sw)
    report.add(aronson_benilan_check(traj, p.m, tol["aronson_benilan"]))
    result.values.update({"T_est": T_est, "C1": sw.info["C1"], "C2": sw.info["C2"]})


_RUNNERS = {
    "barenblatt-selftest": _run_selftest,
    "thm-integrable": _run_integrable,
    "thm-nonintegrable": _run_nonintegrable,
    "example-longer": lambda c, r, res: _run_longer(c, r, res, yamabe=False),
    "yamabe": lambda c, r, res: _run_longer(c, r, res, yamabe=True),
    "appendix-onesided": _run_appendix,
}


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[str] = None) -> ScenarioResult:
    """Run a scenario; with ``out_dir`` write report, series and trajectories there."""
    report = DiagnosticsReport(cfg.name)
    report.info["config"] = cfg.as_dict()
    report.info["params"] = _params(cfg).as_dict()
    result = ScenarioResult(cfg, report)
    _RUNNERS[cfg.name](cfg, report, result)
    out_dir = out_dir or cfg.output
    if out_dir:
        write_outputs(result, out_dir)
    return result


def write_outputs(result: ScenarioResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    rep = result.report
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(rep.to_json())
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(rep.to_text())
    for name, series in rep.series.items():
        series.to_csv(os.path.join(out_dir, f"series_{name}.csv"))
    for name, traj in result.trajectories.items():
        traj.save(os.path.join(out_dir, "trajectories", name))
