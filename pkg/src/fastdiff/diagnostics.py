"""Checks of the inequalities and identities satisfied by solutions.

Every check returns a :class:`CheckResult` whose ``worst_value`` is a signed
margin: the check passes exactly when ``worst_value <= tolerance``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import mpmath
import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigurationError, NotApplicable
from .grid import (RadialField, is_divergent, l1_distance, sphere_area, sup_distance,
                   weighted_l1_distance)
from .profiles import Barenblatt, ProblemParams, Regime, RescaledBarenblatt
from .solver import Trajectory

CONTRACTION_SLACK = 1e-4
AB_SLACK = 1e-3
POTENTIAL_SLACK = 0.05
TRAPPED_TOL = 1e-3
CONVERGENCE_FACTOR = 0.2
MIN_POTENTIAL_SNAPSHOTS = 50


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_value: float
    location: Optional[float]
    tolerance: float
    applicable: bool = True
    info: dict = field(default_factory=dict)

    @classmethod
    def make(cls, name, worst, location, tolerance, **info):
        worst = float(worst)
        return cls(name, bool(worst <= tolerance), worst, None if location is None else float(location),
                   float(tolerance), True, info)

    @classmethod
    def not_applicable(cls, name, reason, tolerance=math.nan):
        return cls(name, False, math.nan, None, tolerance, False, {"reason": reason})

    def as_dict(self) -> dict:
        return _jsonable(asdict(self))


@dataclass
class Series:
    """Distances against a time-like coordinate (t or tau)."""

    label: str
    x: List[float]
    columns: Dict[str, List[float]]

    def to_csv(self, path: Optional[str] = None) -> str:
        buf = io.StringIO()
        names = ["sup", "l1", "weighted_l1"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau_or_t"] + names)
        for i, x in enumerate(self.x):
            row = [repr(float(x))]
            for n in names:
                col = self.columns.get(n)
                row.append("" if col is None else repr(float(col[i])))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class DiagnosticsReport:
    scenario: str
    checks: List[CheckResult] = field(default_factory=list)
    mandatory: List[str] = field(default_factory=list)
    series: Dict[str, Series] = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    def add(self, check: CheckResult, mandatory: bool = True) -> CheckResult:
        if any(c.name == check.name for c in self.checks):
            raise ValueError(f"duplicate check {check.name}")
        self.checks.append(check)
        if mandatory:
            self.mandatory.append(check.name)
        return check

    def get(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(self.get(n).passed for n in self.mandatory)

    def to_json(self) -> str:
        data = {
            "scenario": self.scenario,
            "passed": self.passed,
            "mandatory": list(self.mandatory),
            "checks": [c.as_dict() for c in self.checks],
            "series": {k: {"label": s.label, "x": s.x, "columns": s.columns} for k, s in self.series.items()},
            "info": self.info,
            "timestamp": self.timestamp,
        }
        return json.dumps(_jsonable(data), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        width = max([len(c.name) for c in self.checks] + [5])
        for c in self.checks:
            if not c.applicable:
                status = "n/a "
            else:
                status = "PASS" if c.passed else "FAIL"
            tag = "" if c.name in self.mandatory else "  (info)"
            lines.append(f"  {c.name:<{width}}  {status}  worst={c.worst_value:+.4e}  tol={c.tolerance:.2e}{tag}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


# -- helpers -------------------------------------------------------------------------

def _is_rescaled(traj: Trajectory) -> bool:
    return traj.label == "tau"


def _common_times(a: Trajectory, b: Trajectory):
    if len(a) != len(b) or not np.allclose(a.times, b.times, rtol=1e-12, atol=0.0):
        raise ConfigurationError("trajectories do not share snapshot times")
    return list(a.times)


def _running_increase(d: Sequence[float]) -> (float, int):
    """Largest rise of d above its running minimum, and where it happens."""
    worst, where, lo = 0.0, 0, math.inf
    for i, v in enumerate(d):
        if v - lo > worst:
            worst, where = v - lo, i
        lo = min(lo, v)
    return worst, where


# -- checks --------------------------------------------------------------------------

def check_trapped(traj: Trajectory, p: ProblemParams, k1: float, k2: float, tol: float = TRAPPED_TOL) -> CheckResult:
    """Worst violation of B_{k1} <= u <= B_{k2}, relative to sup B_{k2}.

    For a rescaled trajectory the bounds are the stationary profiles.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if not k1 >= k2:
        raise ConfigurationError(f"need k1 >= k2, got k1={k1}, k2={k2}")
    worst, where = -math.inf, None
    for x, f in traj:
        r = f.r
        if _is_rescaled(traj):
            lo, hi = RescaledBarenblatt(p, k1)(r), RescaledBarenblatt(p, k2)(r)
        else:
            if x >= p.T:
                continue
            lo, hi = Barenblatt(p, k1)(r, x), Barenblatt(p, k2)(r, x)
        scale = float(np.max(hi))
        v = np.maximum(lo - f.values, f.values - hi) / scale
        i = int(np.argmax(v))
        if v[i] > worst:
            worst, where = float(v[i]), x
    if where is None:
        raise ValueError("no snapshot before the extinction time")
    return CheckResult.make("trapped", worst, where, tol, k1=k1, k2=k2)


def contraction_series(traj_u: Trajectory, traj_v: Trajectory, slack: float = CONTRACTION_SLACK):
    """L1 distance per snapshot; passes if nonincreasing within slack * initial."""
    xs = _common_times(traj_u, traj_v)
    d = [l1_distance(fu, fv) for (_, fu), (_, fv) in zip(traj_u, traj_v)]
    series = Series(traj_u.label, xs, {"l1": d})
    if any(is_divergent(v) for v in d):
        return series, CheckResult.not_applicable("contraction", "L1 distance is divergent", slack)
    d0 = d[0]
    rise, i = _running_increase(d)
    worst = rise / d0 if d0 > 0 else (0.0 if rise == 0 else math.inf)
    return series, CheckResult.make("contraction", worst, xs[i], slack, initial=d0, final=d[-1],
                                    snapshots=len(d))


def weighted_contraction_series(traj_u: Trajectory, traj_v: Trajectory, p: ProblemParams, k2: float,
                                slack: float = CONTRACTION_SLACK):
    """Weighted L1 distance with weight B~_{k2}^{alpha_w} per snapshot."""
    xs = _common_times(traj_u, traj_v)
    d = [weighted_l1_distance(fu, fv, p, k2) for (_, fu), (_, fv) in zip(traj_u, traj_v)]
    series = Series(traj_u.label, xs, {"weighted_l1": d})
    informational = p.regime is not Regime.NONINTEGRABLE
    if any(is_divergent(v) for v in d):
        return series, CheckResult.not_applicable("weighted_contraction", "weighted distance is divergent", slack)
    d0 = d[0]
    rise, i = _running_increase(d)
    worst = rise / d0 if d0 > 0 else (0.0 if rise == 0 else math.inf)
    return series, CheckResult.make("weighted_contraction", worst, xs[i], slack, initial=d0, final=d[-1],
                                    informational=informational)


def _weight_derivatives(p: ProblemParams, k2: float, r, alpha: Optional[float] = None):
    """W = B~_{k2}^alpha with W_r and Laplacian(W), in closed form."""
    alpha = p.weight_alpha if alpha is None else alpha
    r = np.asarray(r, dtype=float)
    a = alpha / (1.0 - p.m)
    D = k2 + r * r
    W = np.exp(a * (math.log(p.Cstar) - np.log(D)))
    W_r = -2.0 * a * r * W / D
    lap = 2.0 * alpha * W * ((2.0 * alpha - (1.0 - p.m) * (p.N - 2)) * r * r - k2 * (1.0 - p.m) * p.N) / (
        (1.0 - p.m) ** 2 * D * D)
    return W, W_r, lap


def claim_i_constant(p: ProblemParams, k2: float) -> float:
    N, m = p.N, p.m
    return k2 * N * (N - 4 - m * (N - 2)) / (2.0 * (N * (1.0 - m) - 2.0))


def _claim_i_lhs(p: ProblemParams, k2: float, r, dps: int = 40) -> np.ndarray:
    """(m(k2+r^2)/C*) Laplacian(W) - |gamma| r W_r in extended precision.

    The two terms cancel to leading order in r, so double precision would
    lose about r^2 in relative accuracy.
    """
    out = np.empty(len(r))
    with mpmath.workdps(dps):
        # constants re-derived from m so they are mutually consistent at this precision
        m, N, k = mpmath.mpf(p.m), p.N, mpmath.mpf(k2)
        cs = 2 * m * (N - 2 - m * N) / (1 - m)
        ag = 1 / (N - 2 - N * m)
        alpha = (N - 2) * (1 - m) / 2 - 1
        a = alpha / (1 - m)
        for i, ri in enumerate(r):
            x = mpmath.mpf(ri)
            D = k + x * x
            W = (cs / D) ** a
            W_r = -2 * a * x * W / D
            lap = 2 * alpha * W * ((2 * alpha - (1 - m) * (N - 2)) * x * x - k * (1 - m) * N) / ((1 - m) ** 2 * D * D)
            out[i] = float(m * D / cs * lap - ag * x * W_r)
    return out


def claim_i_identity(p: ProblemParams, k2: float, r, tol: float = 1e-10):
    """Compare (m(k2+r^2)/C*) Laplacian(W) - |gamma| r W_r with its closed form.

    W = B~_{k2}^{alpha_w}. The closed form is
    -theta C*^{alpha_w/(1-m)} / (k2+r^2)^{N/2 - 1/(1-m)}; both sides must
    agree to ``tol`` relative and be strictly negative.
    """
    if p.regime is not Regime.NONINTEGRABLE:
        raise NotApplicable("the sign identity needs m <= (N-4)/(N-2)")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    lhs = _claim_i_lhs(p, k2, r)
    D = k2 + r * r
    expo = p.N / 2.0 - 1.0 / (1.0 - p.m)
    rhs = -claim_i_constant(p, k2) * p.Cstar ** (p.weight_alpha / (1.0 - p.m)) / D**expo
    rel = np.abs(lhs - rhs) / np.abs(rhs)
    i = int(np.argmax(rel))
    worst = float(rel[i])
    if np.any(lhs >= 0) or np.any(rhs >= 0):
        worst = math.inf
    res = CheckResult.make("claim_i_identity", worst, r[i], tol, theta=claim_i_constant(p, k2),
                           max_lhs=float(np.max(lhs)))
    return lhs, rhs, res


def laplacian_weight_sign(p: ProblemParams, k2: float, alpha: Optional[float] = None, radii=None,
                          tol: float = 1e-14) -> CheckResult:
    """Largest sampled value of Laplacian(B~_{k2}^alpha); should be <= 0."""
    if radii is None:
        radii = np.concatenate([[0.0], np.logspace(-3, 4, 999)])
    _, _, lap = _weight_derivatives(p, k2, radii, alpha)
    i = int(np.argmax(lap))
    return CheckResult.make("laplacian_weight_sign", lap[i], radii[i], tol,
                            alpha=p.weight_alpha if alpha is None else alpha)


def potential_decay_check(traj_u: Trajectory, traj_v: Trajectory, m: float, slack: float = POTENTIAL_SLACK,
                          r_min: float = 1.0, min_snapshots: int = MIN_POTENTIAL_SNAPSHOTS) -> CheckResult:
    """w(r) = int_0^t |u^m - v^m| against mass / (omega (N-2) r^{N-2}) for r >= r_min."""
    xs = _common_times(traj_u, traj_v)
    if len(xs) < min_snapshots:
        raise ValueError(f"need at least {min_snapshots} snapshots, got {len(xs)}")
    f0 = traj_u.fields[0]
    mass = l1_distance(f0, traj_v.fields[0])
    if is_divergent(mass):
        return CheckResult.not_applicable("potential_decay", "initial difference has infinite mass", slack)
    integrand = np.array([np.abs(fu.values**m - fv.values**m) for (_, fu), (_, fv) in zip(traj_u, traj_v)])
    w = trapezoid(integrand, np.asarray(xs), axis=0)
    r = f0.r
    N = f0.N
    sel = r >= r_min
    if mass == 0:
        worst = 0.0 if np.all(w == 0) else math.inf
        return CheckResult.make("potential_decay", worst, None, slack, mass=0.0)
    bound = mass / (sphere_area(N) * (N - 2) * r[sel] ** (N - 2))
    ratio = w[sel] / bound
    i = int(np.argmax(ratio))
    return CheckResult.make("potential_decay", ratio[i] - 1.0, r[sel][i], slack, mass=mass,
                            max_ratio=float(ratio[i]))


def aronson_benilan_check(traj: Trajectory, m: float, slack: float = AB_SLACK) -> CheckResult:
    """Worst relative excess of u(t2)/u(t1) over (t2/t1)^{1/(1-m)} for consecutive snapshots."""
    worst, where = -math.inf, None
    pairs = list(zip(traj.times[:-1], traj.fields[:-1], traj.times[1:], traj.fields[1:]))
    for t1, f1, t2, f2 in pairs:
        if t1 <= 0:
            continue
        ok = f1.values > 0
        if not np.any(ok):
            continue
        ratio = f2.values[ok] / f1.values[ok]
        excess = ratio / (t2 / t1) ** (1.0 / (1.0 - m)) - 1.0
        v = float(np.max(excess))
        if v > worst:
            worst, where = v, t2
    if where is None:
        raise ValueError("need two snapshots with t > 0")
    return CheckResult.make("aronson_benilan", worst, where, slack)


def sandwich_bounds_check(rescaled: Trajectory, p: ProblemParams, r0: float, tau0: float,
                          initial: Optional[RadialField] = None, k: float = 1.0) -> CheckResult:
    """Tightest C1, C2 with C1 <= u~ (r^2+1)^{1/(1-m)} <= C2 for r >= r0, tau >= tau0.

    Passes when C1 > 0. ``initial`` (physical u0) is checked against B_k(., 0).
    """
    if initial is not None:
        env = Barenblatt(p, k)(initial.r, 0.0)
        if np.any(initial.values > env * (1 + 1e-12)):
            raise NotApplicable("initial data exceed the Barenblatt envelope")
    c1, c2, where = math.inf, 0.0, None
    for tau, f in rescaled:
        if tau < tau0:
            continue
        sel = f.r >= r0
        if not np.any(sel):
            continue
        scaled = f.values[sel] * (f.r[sel] ** 2 + 1.0) ** (1.0 / (1.0 - p.m))
        lo = float(np.min(scaled))
        if lo < c1:
            c1, where = lo, tau
        c2 = max(c2, float(np.max(scaled)))
    if where is None:
        raise ValueError("no nodes with r >= r0 at tau >= tau0")
    return CheckResult.make("sandwich_bounds", -c1, where, -np.finfo(float).tiny, C1=c1, C2=c2, r0=r0, tau0=tau0)


def convergence_series(rescaled: Trajectory, p: ProblemParams, k0: float, k2: Optional[float] = None,
                       window: float = 3.0, factor: float = CONVERGENCE_FACTOR, slack: float = CONTRACTION_SLACK,
                       tau_start: Optional[float] = None, name: str = "convergence"):
    """Distances of u~ to B~_{k0} per tau, and the decay check over a tau window.

    Uses sup and L1 in the integrable regime, sup and weighted L1 otherwise.
    The check requires every metric to be nonincreasing within ``slack`` of
    its initial value and to end at most ``factor`` times its initial value.
    """
    taus = np.asarray(rescaled.times, dtype=float)
    if len(taus) == 0:
        raise ValueError("empty trajectory")
    k2 = k0 if k2 is None else k2
    ref = RescaledBarenblatt(p, k0)
    cols = {"sup": [], "l1": [], "weighted_l1": []}
    for _, f in rescaled:
        b = ref.field(f.grid)
        cols["sup"].append(sup_distance(f, b))
        cols["l1"].append(l1_distance(f, b))
        cols["weighted_l1"].append(weighted_l1_distance(f, b, p, k2))
    series = Series("tau", list(map(float, taus)), cols)
    t0 = taus[0] if tau_start is None else tau_start
    sel = np.where((taus >= t0 - 1e-12) & (taus <= t0 + window + 1e-9))[0]
    if len(sel) < 2 or taus[sel[-1]] - taus[sel[0]] < window - 1e-9:
        raise ValueError(f"trajectory does not cover a tau window of length {window}")
    metrics = ["sup", "l1"] if p.regime is Regime.INTEGRABLE else ["sup", "weighted_l1"]
    worst, where, detail = -math.inf, None, {}
    for key in metrics:
        d = [cols[key][i] for i in sel]
        if any(is_divergent(v) for v in d):
            continue
        d0 = d[0]
        if d0 == 0:
            # exact start: anything above roundoff of the profile height is growth
            margin = 0.0 if max(d) <= 1e-10 * ref(0.0) else math.inf
            ratio, rise = 0.0, 0.0
        else:
            rise, j = _running_increase(d)
            ratio = d[-1] / d0
            margin = max(ratio - factor, rise / d0 - slack)
        detail[key] = {"initial": d0, "final": d[-1], "ratio": ratio, "max_rise": rise}
        if margin > worst:
            worst, where = margin, taus[sel[-1]]
    return series, CheckResult.make(name, worst, where, 0.0, k0=k0, metrics=detail, window=window)
