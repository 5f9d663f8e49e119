"""Implicit finite-volume solver for radial fast diffusion u_t = Laplacian(u^m).

Backward Euler in time, node-centred finite volumes in r, and a Newton
iteration in the variable w = u^m (so u = w^{1/m} stays smooth as u -> 0).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError, NewtonDiverged, NotDecaying, SolverFailure
from .grid import PowerTail, RadialField, RadialGrid, field_from_csv, field_to_csv, fit_tail_exponent, sphere_area
from .profiles import Barenblatt, BarenblattSpec, ProblemParams

U_FLOOR_INTERNAL = 1e-300
_ROUNDOFF = 64 * np.finfo(float).eps


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class DirichletAnalytic:
    """Pin the outer node to a Barenblatt envelope; its tail continues the field."""

    params: ProblemParams
    spec: BarenblattSpec
    mismatch_tol: float = 1e-3

    @property
    def envelope(self) -> Barenblatt:
        return Barenblatt(self.params, self.spec.k, self.spec.T)

    def value(self, R: float, t: float) -> float:
        return float(self.envelope(R, t))

    def tail(self, t: float) -> Optional[PowerTail]:
        return self.envelope.tail(t)


@dataclass(frozen=True)
class TailExtrapolation:
    """Outflow condition w_r = -m p w / R from a power-law tail r^{-p}.

    With ``p=None`` the exponent is refitted from the outer ``fit_decades``
    of the grid before every step.
    """

    p: Optional[float] = None
    fit_decades: float = 1.0


@dataclass(frozen=True)
class AtTime:
    t: float


@dataclass(frozen=True)
class AtExtinction:
    u_floor: float = 1e-30
    t_max: float = math.inf


Boundary = Union[DirichletAnalytic, TailExtrapolation]
Stop = Union[AtTime, AtExtinction]


@dataclass(frozen=True)
class SolverConfig:
    m: float
    boundary: Boundary = field(default_factory=TailExtrapolation)
    stop: Stop = field(default_factory=lambda: AtExtinction())
    dt_init: float = 1e-6
    dt_max: float = 1e-2
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    adapt_target: float = 4e-3
    change_floor: float = 1e-8
    max_halvings: int = 20
    corrected_mass: bool = True

    def __post_init__(self):
        if not (0.0 < self.m < 1.0):
            raise ConfigurationError(f"solver.m must lie in (0, 1), got {self.m}")
        for name in ("dt_init", "dt_max", "newton_tol", "change_floor"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"solver.{name} must be positive")
        if not (0.0 < self.adapt_target <= 0.5):
            raise ConfigurationError(f"solver.adapt_target must lie in (0, 0.5], got {self.adapt_target}")
        if self.newton_max_iter < 1 or self.max_halvings < 0:
            raise ConfigurationError("solver iteration limits must be positive")

    def describe(self) -> dict:
        b = self.boundary
        if isinstance(b, DirichletAnalytic):
            bd = {"mode": "DirichletAnalytic", "k": b.spec.k, "T": b.spec.T}
        else:
            bd = {"mode": "TailExtrapolation", "p": b.p, "fit_decades": b.fit_decades}
        st = self.stop
        sd = {"mode": "AtTime", "t": st.t} if isinstance(st, AtTime) else {"mode": "AtExtinction", "u_floor": st.u_floor}
        return {
            "m": self.m, "boundary": bd, "stop": sd, "dt_init": self.dt_init, "dt_max": self.dt_max,
            "newton_tol": self.newton_tol, "newton_max_iter": self.newton_max_iter,
            "adapt_target": self.adapt_target, "change_floor": self.change_floor,
            "max_halvings": self.max_halvings, "corrected_mass": self.corrected_mass,
        }


@dataclass(frozen=True)
class SolverStats:
    steps: int = 0
    newton_iters: int = 0
    rejected: int = 0
    boundary_flux: float = 0.0  # cumulative mass that left through r = Rmax


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    field: RadialField
    stats: SolverStats
    config: SolverConfig
    tail_p: Optional[float] = None  # exponent in use by TailExtrapolation

    @property
    def extinct(self) -> bool:
        st = self.config.stop
        floor = st.u_floor if isinstance(st, AtExtinction) else 0.0
        return float(np.max(self.field.values)) <= floor


# -- geometry ------------------------------------------------------------------

class _Geometry:
    """Cell volumes, face conductances and the mass-matrix correction.

    The lumped mass V_i u_i is augmented by a conservative face term
    A_f (u_j - u_i) (a Numerov-type correction, A_f = G_f h_f^2 / 12 in the
    interior). At the first face A_f makes the scheme exact for w = r^4.
    This removes most of the O(h^2) error of the lumped scheme while
    keeping the step tridiagonal and mass conservative.
    """

    def __init__(self, grid: RadialGrid, corrected: bool = True):
        r = grid.nodes
        N = grid.N
        faces = 0.5 * (r[1:] + r[:-1])
        lo = np.concatenate([[0.0], faces])
        hi = np.concatenate([faces, [r[-1]]])
        h = np.diff(r)
        self.N = N
        self.R = r[-1]
        self.vol = (hi**N - lo**N) / N  # without the sphere-area factor
        self.G = faces ** (N - 1) / h
        self.omega = sphere_area(N)
        A = np.zeros_like(self.G)
        if corrected:
            A = self.G * h * h / 12.0
            S0 = self.G[0] * r[1] ** 4 - 4.0 * faces[0] ** (N + 2)
            A[0] = S0 / (4.0 * (N + 2) * r[1] ** 2)
        self.A = A
        self.mass_diag = self.vol.copy()
        self.mass_diag[:-1] -= A
        self.mass_diag[1:] -= A

    def mass(self, v):
        """Apply the (corrected) mass matrix to nodal values."""
        out = self.vol * v
        d = self.A * (v[1:] - v[:-1])
        out[:-1] += d
        out[1:] -= d
        return out


_GEOMETRY_CACHE: dict = {}


def _geometry(grid: RadialGrid, corrected: bool = True) -> _Geometry:
    key = (id(grid), corrected)
    hit = _GEOMETRY_CACHE.get(key)
    if hit is None or hit[0] is not grid:
        if len(_GEOMETRY_CACHE) > 64:
            _GEOMETRY_CACHE.clear()
        hit = (grid, _Geometry(grid, corrected))
        _GEOMETRY_CACHE[key] = hit
    return hit[1]


def interior_mass(f: RadialField, corrected: bool = True) -> float:
    """Discrete mass of the cells strictly inside the outer node."""
    g = _geometry(f.grid, corrected)
    return g.omega * float(np.sum(g.mass(f.values)[:-1]))


# -- state construction ----------------------------------------------------------

def _fit_p(f: RadialField, decades: float, fallback: Optional[float]) -> Optional[float]:
    try:
        p = fit_tail_exponent(f, f.grid.Rmax * 10.0 ** (-decades))
    except ValueError:
        return fallback
    if not math.isfinite(p) or p <= 0:
        return fallback
    return p


def _tail_for(cfg: SolverConfig, t: float, values: np.ndarray, grid: RadialGrid, p_tail):
    b = cfg.boundary
    if isinstance(b, DirichletAnalytic):
        return b.tail(t)
    if p_tail is None:
        return None
    R = grid.Rmax
    return PowerTail(p_tail, float(values[-1]) * R**p_tail, 0.0)


def init_state(u0: RadialField, cfg: SolverConfig) -> SolverState:
    v = u0.values
    if np.any(v < 0):
        raise ValueError("initial data must be nonnegative")
    b = cfg.boundary
    p_tail = None
    if isinstance(b, DirichletAnalytic):
        if b.params.N != u0.N:
            raise ConfigurationError(f"envelope dimension {b.params.N} differs from grid dimension {u0.N}")
        if abs(b.params.m - cfg.m) > 1e-14:
            raise ConfigurationError("envelope exponent differs from solver.m")
        uR = b.value(u0.grid.Rmax, 0.0)
        if abs(v[-1] - uR) > b.mismatch_tol * max(uR, 1e-300):
            raise ConfigurationError(
                f"boundary envelope mismatch at Rmax: data {v[-1]:.6e} vs envelope {uR:.6e}")
        v = v.copy()
        v[-1] = uR
    else:
        p_tail = b.p if b.p is not None else _fit_p(u0, b.fit_decades, u0.tail.p if u0.tail else None)
        if p_tail is None:
            p_tail = 2.0 / (1.0 - cfg.m)
    tail = _tail_for(cfg, 0.0, v, u0.grid, p_tail)
    f = RadialField(u0.grid, v, tail, u0.meta)
    return SolverState(0.0, f, SolverStats(), cfg, p_tail)


# -- one implicit step -------------------------------------------------------------

def _newton_step(u_old, t_new, dt, geo: _Geometry, cfg: SolverConfig, p_tail, grid):
    m = cfg.m
    inv_m = 1.0 / m
    w_floor = U_FLOOR_INTERNAL**m
    n = u_old.size
    V = geo.vol
    G = geo.G
    b = cfg.boundary
    dirichlet = isinstance(b, DirichletAnalytic)

    w = np.maximum(u_old, U_FLOOR_INTERNAL) ** m
    robin = 0.0
    if dirichlet:
        w[-1] = max(b.value(geo.R, t_new), U_FLOOR_INTERNAL) ** m
    else:
        robin = m * p_tail * geo.R ** (geo.N - 2)

    A = geo.A
    ab = np.zeros((3, n))
    iters = 0
    for iters in range(1, cfg.newton_max_iter + 1):
        u = w**inv_m
        F = G * (w[1:] - w[:-1])
        res = geo.mass(u - u_old)
        res[:-1] -= dt * F
        res[1:] += dt * F
        dudw = inv_m * u / w
        diag = geo.mass_diag * dudw
        diag[:-1] += dt * G
        diag[1:] += dt * G
        upper = A * dudw[1:] - dt * G
        lower = A * dudw[:-1] - dt * G
        if dirichlet:
            res[-1] = 0.0
            diag[-1] = 1.0
            lower[-1] = 0.0
        else:
            res[-1] += dt * robin * w[-1]
            diag[-1] += dt * robin
        # flux differences of nearly equal w carry roundoff ~ eps * G * w,
        # which can exceed newton_tol * V * u where the profile is flat
        scale = V * (np.maximum(u_old, u) + 1e-280)
        gross = _ROUNDOFF * dt * G * (w[1:] + w[:-1]) / cfg.newton_tol
        scale[:-1] += gross
        scale[1:] += gross
        err = float(np.max(np.abs(res) / scale))
        if not math.isfinite(err):
            raise NewtonDiverged("non-finite residual")
        if err <= cfg.newton_tol:
            return u, iters - 1
        # row equilibration: cell sizes span many decades on a stretched grid
        inv = 1.0 / diag
        ab[0, 1:] = upper * inv[:-1]
        ab[1] = 1.0
        ab[2, :-1] = lower * inv[1:]
        try:
            delta = solve_banded((1, 1), ab, res * inv, overwrite_ab=True, overwrite_b=True, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NewtonDiverged(str(exc)) from exc
        w = np.maximum(w - delta, np.maximum(0.1 * w, w_floor))
    j = int(np.argmax(np.abs(res) / scale))
    raise NewtonDiverged(f"no convergence in {cfg.newton_max_iter} iterations (residual {err:.2e} at node {j})")


def _advance(s: SolverState, dt: float):
    """Return (new values, newton iterations, outflow mass) or raise NewtonDiverged."""
    cfg = s.config
    geo = _geometry(s.field.grid, cfg.corrected_mass)
    u_old = s.field.values
    t_new = s.t + dt
    u, iters = _newton_step(u_old, t_new, dt, geo, cfg, s.tail_p, s.field.grid)
    u = np.where(u <= 1.0000001 * U_FLOOR_INTERNAL, 0.0, u)
    # outflow = -(interior mass change) so that the finite-volume balance closes
    if isinstance(cfg.boundary, DirichletAnalytic):
        out = -geo.omega * float(np.sum(geo.mass(u - u_old)[:-1]))
    else:
        w_M = max(u[-1], U_FLOOR_INTERNAL) ** cfg.m
        out = geo.omega * dt * cfg.m * s.tail_p * geo.R ** (geo.N - 2) * w_M
    return u, iters, out


def _relative_change(u_old, u_new, floor_rel):
    umax = float(np.max(u_old))
    if umax <= 10 * U_FLOOR_INTERNAL:
        return 0.0
    den = np.maximum(u_old, floor_rel * umax)
    return float(np.max(np.abs(u_new - u_old) / den))


def _make_state(s: SolverState, t_new: float, u: np.ndarray, stats: SolverStats) -> SolverState:
    cfg = s.config
    grid = s.field.grid
    p_tail = s.tail_p
    f = RadialField(grid, u, None, s.field.meta)
    b = cfg.boundary
    if isinstance(b, TailExtrapolation) and b.p is None:
        p_tail = _fit_p(f, b.fit_decades, p_tail)
    tail = _tail_for(cfg, t_new, u, grid, p_tail)
    return SolverState(t_new, RadialField(grid, u, tail, s.field.meta), stats, cfg, p_tail)


def step(s: SolverState, dt: float) -> SolverState:
    """One backward Euler step of size ``dt``; raises NewtonDiverged on failure."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u, iters, out = _advance(s, dt)
    st = s.stats
    stats = SolverStats(st.steps + 1, st.newton_iters + iters, st.rejected, st.boundary_flux + out)
    return _make_state(s, s.t + dt, u, stats)


# -- trajectories -------------------------------------------------------------------

@dataclass(eq=False)
class Trajectory:
    times: List[float]
    fields: List[RadialField]
    final_state: Optional[SolverState] = None
    config: Optional[SolverConfig] = None
    label: str = "t"

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.fields))

    def __getitem__(self, i):
        return self.times[i], self.fields[i]

    def save(self, directory: str, extra: Optional[dict] = None) -> None:
        os.makedirs(directory, exist_ok=True)
        names = []
        for i, (t, f) in enumerate(self):
            name = f"snapshot_{i:04d}.csv"
            field_to_csv(f, os.path.join(directory, name), {self.label: t})
            names.append(name)
        index = {self.label: list(map(float, self.times)), "files": names}
        if self.final_state is not None:
            index["stats"] = asdict(self.final_state.stats)
            index["final_t"] = self.final_state.t
        if self.config is not None:
            index["config"] = self.config.describe()
        if extra:
            index.update(extra)
        with open(os.path.join(directory, "index.json"), "w") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory: str) -> "Trajectory":
        with open(os.path.join(directory, "index.json")) as fh:
            index = json.load(fh)
        label = "tau" if "tau" in index else "t"
        fields = [field_from_csv(os.path.join(directory, n)) for n in index["files"]]
        return cls(list(index[label]), fields, None, None, label)


def evolve(s: SolverState, cfg: Optional[SolverConfig] = None, output_times: Sequence[float] = ()) -> Trajectory:
    """Adaptive backward Euler from ``s`` with snapshots at ``output_times``.

    Snapshots falling inside a step are interpolated linearly in u^{1-m}.
    The returned trajectory starts with the initial state.
    """
    if cfg is not None and cfg is not s.config:
        s = replace(s, config=cfg)
    cfg = s.config
    outs = [float(t) for t in output_times]
    if any(b <= a for a, b in zip(outs, outs[1:])):
        raise ValueError("output_times must be strictly increasing")
    outs = [t for t in outs if t > s.t]
    times = [s.t]
    fields = [s.field]
    stop = cfg.stop
    t_end = stop.t if isinstance(stop, AtTime) else stop.t_max
    if isinstance(stop, AtTime) and outs and outs[-1] > t_end + 1e-12 * max(1.0, abs(t_end)):
        outs = [t for t in outs if t <= t_end * (1 + 1e-12)]
    mexp = 1.0 - cfg.m
    dt = min(cfg.dt_init, cfg.dt_max)
    oi = 0
    stats = s.stats
    halvings = 0

    def done(state):
        if isinstance(stop, AtTime):
            return state.t >= t_end * (1 - 1e-14) - 1e-300
        return state.extinct or state.t >= t_end

    while not done(s):
        if isinstance(stop, AtTime) or math.isfinite(t_end):
            if s.t + dt > t_end or (t_end - (s.t + dt)) < 1e-9 * dt:
                dt = t_end - s.t
        try:
            u_new, iters, out = _advance(s, dt)
        except NewtonDiverged:
            halvings += 1
            stats = replace(stats, rejected=stats.rejected + 1)
            if halvings > cfg.max_halvings:
                raise SolverFailure("Newton failed after repeated step halving", t=s.t)
            dt *= 0.5
            continue
        change = _relative_change(s.field.values, u_new, cfg.change_floor)
        if change > 2.0 * cfg.adapt_target and dt > 1e-300:
            stats = replace(stats, rejected=stats.rejected + 1)
            dt *= max(0.2, min(0.5, 0.9 * cfg.adapt_target / change))
            continue
        halvings = 0
        stats = SolverStats(stats.steps + 1, stats.newton_iters + iters, stats.rejected, stats.boundary_flux + out)
        t_new = s.t + dt
        new = _make_state(s, t_new, u_new, stats)
        while oi < len(outs) and outs[oi] <= t_new * (1 + 1e-14):
            to = outs[oi]
            theta = min(1.0, max(0.0, (to - s.t) / dt))
            a = s.field.values**mexp
            b = new.field.values**mexp
            vals = ((1 - theta) * a + theta * b) ** (1.0 / mexp)
            bd = cfg.boundary
            if isinstance(bd, DirichletAnalytic):
                vals[-1] = bd.value(s.field.grid.Rmax, to)
            ptail = s.tail_p if new.tail_p is None else new.tail_p
            tail = _tail_for(cfg, to, vals, s.field.grid, ptail)
            times.append(to)
            fields.append(RadialField(s.field.grid, vals, tail, s.field.meta))
            oi += 1
        s = new
        grow = 2.0 if change == 0 else max(0.2, min(2.0, 0.9 * cfg.adapt_target / change))
        dt = min(dt * grow, cfg.dt_max)
    return Trajectory(times, fields, s, cfg)


def run(u0: RadialField, cfg: SolverConfig, output_times: Sequence[float] = ()) -> Trajectory:
    return evolve(init_state(u0, cfg), cfg, output_times)


# -- extinction time -------------------------------------------------------------------

def estimate_extinction_time(traj: Trajectory, window: int = 10) -> float:
    """Extrapolate the vanishing time from the last ``window`` snapshot maxima.

    Fits max u = A (T - t)^b by least squares in log variables, with T
    profiled out; started from the zero of the inverse logarithmic rate.
    """
    if len(traj) < window:
        raise ValueError(f"need at least {window} snapshots, got {len(traj)}")
    t = np.asarray(traj.times[-window:], dtype=float)
    umax = np.array([float(np.max(f.values)) for f in traj.fields[-window:]])
    if np.any(umax <= 0) or np.any(np.diff(umax) >= 0):
        raise NotDecaying("snapshot maxima are not strictly decreasing over the fit window")
    y = np.log(umax)
    # inverse log-rate (T - t)/b is affine in t for a pure power law
    tm = 0.5 * (t[1:] + t[:-1])
    rate = -np.diff(y) / np.diff(t)
    slope, icpt = np.polyfit(tm, 1.0 / rate, 1)
    T0 = -icpt / slope if slope < 0 else math.nan
    span = t[-1] - t[0]
    if not (math.isfinite(T0) and T0 > t[-1]):
        T0 = t[-1] + span

    def sse(logd):
        T = t[-1] + math.exp(logd)
        X = np.log(T - t)
        A = np.vstack([np.ones_like(X), X]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return float(np.sum((A @ coef - y) ** 2))

    d0 = math.log(T0 - t[-1])
    res = minimize_scalar(sse, bounds=(d0 - 5.0, d0 + 5.0), method="bounded",
                          options={"xatol": 1e-10, "maxiter": 500})
    best = res.x if res.fun <= sse(d0) else d0
    return float(t[-1] + math.exp(best))
