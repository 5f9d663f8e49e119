"""Stretched radial grids and radially symmetric fields.

A :class:`RadialField` stores nodal samples on a :class:`RadialGrid` plus a
:class:`PowerTail` describing the function beyond the last node, so that
integrals over all of R^N can be evaluated (or recognised as divergent).
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.special import gamma as gamma_fn

from .errors import ConfigurationError

#: Value returned by integrals whose tail does not converge.
DIVERGENT = math.inf

DEFAULT_RMAX = 1e3
DEFAULT_M = 1600
DEFAULT_RLIN = 5.0

_REL = 1e-9


def is_divergent(value) -> bool:
    return isinstance(value, float) and math.isinf(value)


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / gamma_fn(N / 2.0)


@dataclass(frozen=True)
class PowerTail:
    """Shifted power law ``c * (r**2 + d) ** (-p/2)`` used beyond the grid.

    ``d = 0`` is a pure power law; Barenblatt profiles are exactly of this
    form with ``d`` equal to their core parameter. A negative ``p`` is
    allowed for growing weights; field tails must decay.
    """

    p: float
    c: float
    d: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.p) or not self.c >= 0 or not self.d >= 0:
            raise ConfigurationError(f"invalid tail p={self.p}, c={self.c}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.c == 0:
            return np.zeros_like(r)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self.d > 0:
                out = self.c * np.exp(-0.5 * self.p * np.log(r * r + self.d))
            else:
                out = self.c * r ** (-self.p)
        return out

    def scaled(self, amplitude: float, length: float) -> "PowerTail":
        """Tail of ``amplitude * u(r / length)``."""
        return PowerTail(self.p, amplitude * self.c * length**self.p, self.d * length**2)


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= _REL * max(abs(a), abs(b), 1e-300)


def _difference_tail(tf: Optional[PowerTail], tg: Optional[PowerTail]):
    """Return (callable |tf - tg|, leading decay exponent or None if zero)."""
    if tf is None and tg is None:
        return None, None
    if tf is None or tg is None:
        t = tf if tg is None else tg
        return (lambda r: np.abs(t(r))), (t.p if t.c > 0 else None)
    if not _same(tf.p, tg.p):
        lead = tf if tf.p < tg.p else tg
        if lead.c == 0:
            other = tg if lead is tf else tf
            return (lambda r: np.abs(other(r))), (other.p if other.c > 0 else None)
        return (lambda r: np.abs(tf(r) - tg(r))), lead.p
    if not _same(tf.c, tg.c):
        return (lambda r: np.abs(tf(r) - tg(r))), tf.p
    if _same(tf.d, tg.d) or tf.c == 0:
        return None, None
    p, c = tf.p, 0.5 * (tf.c + tg.c)

    def diff(r):
        r = np.asarray(r, dtype=float)
        a = -0.5 * p * np.log1p(tf.d / (r * r))
        b = -0.5 * p * np.log1p(tg.d / (r * r))
        return np.abs(c * r ** (-p) * np.exp(b) * np.expm1(a - b))

    return diff, p + 2.0


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radii ``0 = r_0 < ... < r_M = Rmax`` in dimension N."""

    nodes: np.ndarray
    N: int
    r_lin: float = math.nan
    q: float = math.nan

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ConfigurationError("grid needs at least 3 nodes")
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
            raise ConfigurationError("grid nodes must start at 0 and increase strictly")
        if self.N < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.N}")
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @property
    def Rmax(self) -> float:
        return float(self.nodes[-1])

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    def scaled(self, factor: float) -> "RadialGrid":
        return RadialGrid(self.nodes * factor, self.N, self.r_lin * factor, self.q)

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.N == other.N
            and self.nodes.size == other.nodes.size
            and np.allclose(self.nodes, other.nodes, rtol=1e-13, atol=0.0)
        )

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        """Weights w_i with sum(w_i g_i) ~ integral of g(r) r^{N-1} dr over [0, Rmax]."""
        r = self.nodes
        h = np.diff(r)
        rn = r ** (self.N - 1)
        w = np.zeros_like(r)
        w[:-1] += 0.5 * h * rn[:-1]
        w[1:] += 0.5 * h * rn[1:]
        return w


def make_grid(Rmax: float = DEFAULT_RMAX, M: int = DEFAULT_M, r_lin: float = DEFAULT_RLIN, N: int = 3) -> RadialGrid:
    """Uniform nodes on [0, r_lin] (a quarter of them), geometric beyond.

    >>> g = make_grid(1000.0, 400, 5.0, 3)
    >>> float(g.nodes[100]), float(g.nodes[-1])
    (5.0, 1000.0)
    """
    if M < 64:
        raise ConfigurationError(f"M={M} < 64 nodes is too coarse")
    if not (Rmax > r_lin > 0):
        raise ConfigurationError(f"need Rmax > r_lin > 0, got Rmax={Rmax}, r_lin={r_lin}")
    if N < 1:
        raise ConfigurationError(f"dimension must be positive, got {N}")
    n_lin = M // 4
    n_geo = M - n_lin
    q = (Rmax / r_lin) ** (1.0 / n_geo)
    lin = np.linspace(0.0, r_lin, n_lin + 1)
    geo = r_lin * q ** np.arange(1, n_geo + 1)
    geo[-1] = Rmax
    return RadialGrid(np.concatenate([lin, geo]), N, float(r_lin), float(q))


@dataclass(frozen=True, eq=False)
class RadialField:
    """Nonnegative nodal values on a grid plus an optional tail model.

    ``tail=None`` means the function vanishes beyond ``grid.Rmax``.
    """

    grid: RadialGrid
    values: np.ndarray
    tail: Optional[PowerTail] = None
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ConfigurationError("values do not match grid nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if np.any(v < 0):
            raise ValueError("field values must be nonnegative")
        if self.tail is not None and not self.tail.p > 0:
            raise ConfigurationError(f"field tail must decay, got p={self.tail.p}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def N(self) -> int:
        return self.grid.N

    def with_values(self, values, tail="keep") -> "RadialField":
        return RadialField(self.grid, values, self.tail if tail == "keep" else tail, self.meta)

    def seam_mismatch(self) -> float:
        """Relative jump between the last node and the tail model."""
        uM = self.values[-1]
        if self.tail is None:
            return 0.0 if uM == 0 else 1.0
        return float(abs(uM - self.tail(self.grid.Rmax)) / max(uM, 1e-300))

    @cached_property
    def _interpolant(self):
        return _monotone_hermite(self.grid.nodes, self.values)

    def __call__(self, r):
        return interpolate(self, r)


def field_from_function(grid: RadialGrid, fn: Callable, tail: Optional[PowerTail] = None, meta=None) -> RadialField:
    return RadialField(grid, fn(grid.nodes), tail, meta or {})


# -- quadrature -------------------------------------------------------------

def _tail_integral(fn, decay, N, R, weight) -> float:
    """Integral of fn(r) * weight(r) * r^{N-1} over (R, inf), via r = R e^x."""
    if decay is None:
        return 0.0
    w_decay = getattr(weight, "p", 0.0) if weight is not None else 0.0
    if decay + w_decay <= N + 1e-12:
        return DIVERGENT

    def integrand(x):
        r = R * math.exp(x)
        val = float(fn(r)) * r**N
        if weight is not None:
            val *= float(weight(r))
        return val

    rate = decay + w_decay - N
    upper = min(800.0, 60.0 / rate)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(integrand, 0.0, upper, limit=400, epsabs=0.0, epsrel=1e-11)
    return val


def _integrate(grid: RadialGrid, nodal, tail_fn, tail_decay, weight) -> float:
    g = np.asarray(nodal, dtype=float)
    if weight is not None:
        g = g * np.asarray(weight(grid.nodes), dtype=float)
    inner = float(np.dot(grid.trapezoid_weights, g))
    outer = _tail_integral(tail_fn, tail_decay, grid.N, grid.Rmax, weight)
    if is_divergent(outer):
        return DIVERGENT
    return sphere_area(grid.N) * (inner + outer)


def volume_integral(f: RadialField, weight=None) -> float:
    """Integral of ``f`` over R^N, or :data:`DIVERGENT`.

    ``weight`` is an optional radial function; if it has a decay exponent
    attribute ``p`` (e.g. a :class:`PowerTail`) that decay is credited when
    deciding whether the tail converges.
    """
    t = f.tail
    decay = t.p if (t is not None and t.c > 0) else None
    return _integrate(f.grid, f.values, t, decay, weight)


def signed_difference_integral(f: RadialField, g: RadialField, weight=None) -> float:
    """Integral of ``f - g`` over R^N using the difference tail model."""
    _check_same_grid(f, g)
    _, decay = _difference_tail(f.tail, g.tail)
    tf, tg = f.tail, g.tail

    def signed(r):
        a = tf(r) if tf is not None else 0.0
        b = tg(r) if tg is not None else 0.0
        if tf is not None and tg is not None and _same(tf.p, tg.p) and _same(tf.c, tg.c):
            c = 0.5 * (tf.c + tg.c)
            x = -0.5 * tf.p * np.log1p(tf.d / (r * r))
            y = -0.5 * tf.p * np.log1p(tg.d / (r * r))
            return c * r ** (-tf.p) * np.exp(y) * np.expm1(x - y)
        return a - b

    val = _integrate(f.grid, f.values - g.values, signed, decay, weight)
    return val


def _check_same_grid(f: RadialField, g: RadialField):
    if not f.grid.same_as(g.grid):
        raise ConfigurationError("fields live on different grids")


def l1_distance(f: RadialField, g: RadialField, weight=None) -> float:
    """L1 distance over R^N (possibly :data:`DIVERGENT`)."""
    _check_same_grid(f, g)
    fn, decay = _difference_tail(f.tail, g.tail)
    return _integrate(f.grid, np.abs(f.values - g.values), fn, decay, weight)


def barenblatt_weight(params, k2: float) -> PowerTail:
    """The weight B~_{k2}^alpha = (C*/(k2+r^2))^{alpha/(1-m)} as a power law."""
    a = params.weight_alpha / (1.0 - params.m)
    return PowerTail(2.0 * a, params.Cstar**a, k2)


def weighted_l1_distance(f: RadialField, g: RadialField, params, k2: float) -> float:
    return l1_distance(f, g, weight=barenblatt_weight(params, k2))


def sup_distance(f: RadialField, g: RadialField) -> float:
    _check_same_grid(f, g)
    node_sup = float(np.max(np.abs(f.values - g.values)))
    fn, decay = _difference_tail(f.tail, g.tail)
    if decay is None:
        return node_sup
    probe = f.grid.Rmax * np.logspace(0, 8, 400)
    return max(node_sup, float(np.max(fn(probe))))


# -- interpolation ------------------------------------------------------------

def _monotone_hermite(x, y):
    """C1 cubic Hermite with spline slopes, limited to keep data monotone.

    Slopes come from a clamped (u'(0)=0) cubic spline, so accuracy is fourth
    order wherever the limiter is inactive.
    """
    spline = CubicSpline(x, y, bc_type=((1, 0.0), "not-a-knot"))
    d = spline(x, 1)
    s = np.diff(y) / np.diff(x)
    lim = np.empty_like(d)
    lim[1:-1] = np.where(np.sign(s[:-1]) == np.sign(s[1:]), 3.0 * np.minimum(np.abs(s[:-1]), np.abs(s[1:])), 0.0)
    lim[0] = 3.0 * abs(s[0])
    lim[-1] = 3.0 * abs(s[-1])
    sgn = np.empty_like(d)
    sgn[1:-1] = np.sign(s[:-1])
    sgn[0] = np.sign(s[0])
    sgn[-1] = np.sign(s[-1])
    ok = np.sign(d) == sgn
    d = np.where(ok, np.sign(d) * np.minimum(np.abs(d), lim), 0.0)
    d[0] = 0.0
    return CubicHermiteSpline(x, y, d)


def interpolate(f: RadialField, r):
    """Evaluate ``f`` at radii ``r`` (nodes, in between, or on the tail)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    R = f.grid.Rmax
    inside = r <= R
    out = np.zeros_like(r)
    if np.any(inside):
        out[inside] = np.maximum(f._interpolant(r[inside]), 0.0)
    if f.tail is not None and np.any(~inside):
        out[~inside] = f.tail(r[~inside])
    return out if out.ndim else float(out)


# -- potentials and tail fits ---------------------------------------------------

def newtonian_potential(f: RadialField) -> RadialField:
    """Radial Newtonian potential Z with Laplacian(Z) = -f.

    Uses Z(r) = [r^{2-N} int_0^r f s^{N-1} ds + int_r^inf s f ds] / (N-2).
    """
    N = f.N
    if N < 3:
        raise ConfigurationError("Newtonian potential needs N >= 3")
    mass = volume_integral(f)
    if is_divergent(mass):
        raise ValueError("input has divergent mass")
    r = f.r
    u = f.values
    inner = integrate.cumulative_trapezoid(u * r ** (N - 1), r, initial=0.0)
    outer_grid = integrate.cumulative_trapezoid((u * r)[::-1], r[::-1], initial=0.0)[::-1]
    outer_grid = -outer_grid
    t = f.tail
    tail_first = 0.0
    tail_mass = 0.0
    if t is not None and t.c > 0:
        tail_first = _tail_integral(lambda s: t(s) / s ** (N - 2), t.p, N, f.grid.Rmax, None)
        tail_mass = _tail_integral(t, t.p, N, f.grid.Rmax, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        Z = np.where(r > 0, inner * r ** (2.0 - N), 0.0) + outer_grid + tail_first
    Z = Z / (N - 2)
    total = inner[-1] + tail_mass
    # Z ~ total / ((N-2) r^{N-2}) beyond the grid; leading order only.
    ztail = PowerTail(float(N - 2), total / (N - 2)) if total > 0 else None
    return RadialField(f.grid, np.maximum(Z, 0.0), ztail)


def fit_tail_exponent(f: RadialField, r_min: float) -> float:
    """Least-squares slope of -log u against log r over nodes r >= r_min."""
    r = f.r
    sel = (r >= r_min) & (f.values > 0)
    if np.count_nonzero(sel) < 10:
        raise ValueError(f"fewer than 10 positive nodes above r_min={r_min}")
    slope, _ = np.polyfit(np.log(r[sel]), np.log(f.values[sel]), 1)
    return float(-slope)


# -- CSV --------------------------------------------------------------------------

def field_to_csv(f: RadialField, path=None, extra: Optional[Mapping] = None) -> str:
    buf = io.StringIO()
    g = f.grid
    buf.write(f"# grid: N={g.N} M={g.M} Rmax={g.Rmax!r} r_lin={g.r_lin!r} q={g.q!r}\n")
    if f.tail is None:
        buf.write("# tail: none\n")
    else:
        buf.write(f"# tail: p={f.tail.p!r} c={f.tail.c!r} d={f.tail.d!r}\n")
    for key, val in {**dict(f.meta), **dict(extra or {})}.items():
        if isinstance(val, (np.floating, np.integer)):
            val = val.item()
        buf.write(f"# {key}={val!r}\n")
    buf.write("r,value\n")
    for r, v in zip(g.nodes.tolist(), f.values.tolist()):
        buf.write(f"{r!r},{v!r}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _parse_kv(text: str) -> dict:
    out = {}
    for tok in text.split():
        k, _, v = tok.partition("=")
        out[k] = float(v)
    return out


def field_from_csv(source) -> RadialField:
    """Read a field written by :func:`field_to_csv` (path or text)."""
    if "\n" in str(source):
        text = str(source)
    else:
        with open(source) as fh:
            text = fh.read()
    meta, tail, N = {}, None, None
    r_lin = q = math.nan
    rows = []
    for line in text.splitlines():
        if line.startswith("# grid:"):
            kv = _parse_kv(line[len("# grid:"):])
            N = int(kv["N"])
            r_lin, q = kv.get("r_lin", math.nan), kv.get("q", math.nan)
        elif line.startswith("# tail:"):
            body = line[len("# tail:"):].strip()
            if body != "none":
                kv = _parse_kv(body)
                tail = PowerTail(kv["p"], kv["c"], kv.get("d", 0.0))
        elif line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            try:
                meta[k] = float(v)
            except ValueError:
                meta[k] = v.strip("'\"")
        elif line and not line.startswith("r,"):
            a, b = line.split(",")
            rows.append((float(a), float(b)))
    if N is None:
        raise ConfigurationError("missing grid header")
    arr = np.array(rows)
    grid = RadialGrid(arr[:, 0], N, r_lin, q)
    return RadialField(grid, arr[:, 1], tail, meta)
