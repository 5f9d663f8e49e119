"""Barenblatt solutions of the fast diffusion equation and derived constants."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NoBracket, NonIntegrableRegime
from .grid import PowerTail, RadialField, RadialGrid, l1_distance, signed_difference_integral


class Regime(str, enum.Enum):
    INTEGRABLE = "Integrable"
    NONINTEGRABLE = "NonIntegrable"
    OUT_OF_RANGE = "OutOfRange"


@dataclass(frozen=True)
class ProblemParams:
    N: int
    m: float
    T: float
    beta: float
    gamma: float
    Cstar: float
    weight_alpha: float
    regime: Regime
    is_yamabe: bool

    @property
    def in_range(self) -> bool:
        return self.regime is not Regime.OUT_OF_RANGE

    @property
    def abs_gamma(self) -> float:
        return -self.gamma

    @property
    def tail_exponent(self) -> float:
        """Decay exponent 2/(1-m) of Barenblatt profiles."""
        return 2.0 / (1.0 - self.m)

    @property
    def fast_tail_exponent(self) -> float:
        """Decay exponent (N-2)/m of the anomalous self-similar profiles."""
        return (self.N - 2) / self.m

    def as_dict(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and not math.isfinite(x) else x

        return {
            "N": self.N,
            "m": self.m,
            "T": self.T,
            "beta": clean(self.beta),
            "gamma": clean(self.gamma),
            "Cstar": clean(self.Cstar),
            "weight_alpha": clean(self.weight_alpha),
            "regime": self.regime.value,
            "is_yamabe": self.is_yamabe,
        }


@dataclass(frozen=True)
class BarenblattSpec:
    k: float
    T: float

    def __post_init__(self):
        if not (self.k > 0 and self.T > 0):
            raise ConfigurationError(f"Barenblatt needs k > 0 and T > 0, got k={self.k}, T={self.T}")


def classify_regime(N: int, m: float) -> Regime:
    if not (0.0 < m < (N - 2) / N):
        return Regime.OUT_OF_RANGE
    if N > 4 and m <= (N - 4) / (N - 2):
        return Regime.NONINTEGRABLE
    return Regime.INTEGRABLE


def derive_params(N: int, m: float, T: float = 1.0) -> ProblemParams:
    """Derived exponents and constants for dimension N and exponent m.

    >>> p = derive_params(3, 0.2, 1.0)
    >>> round(p.beta, 12), round(p.gamma, 12), round(p.Cstar, 12), p.regime.value
    (7.5, -2.5, 0.2, 'Integrable')
    """
    if int(N) != N or N < 3:
        raise ConfigurationError(f"dimension N must be an integer >= 3, got {N}")
    N = int(N)
    if not T > 0:
        raise ConfigurationError(f"T must be positive, got {T}")
    if not m > 0:
        raise ConfigurationError(f"m must be positive, got {m}")
    m = float(m)
    regime = classify_regime(N, m)
    yam = (N - 2) / (N + 2)
    is_yamabe = abs(m - yam) <= 1e-12 * yam
    weight_alpha = (N - 2) * (1.0 - m) / 2.0 - 1.0
    if regime is Regime.OUT_OF_RANGE:
        nan = math.nan
        return ProblemParams(N, m, float(T), nan, nan, nan, weight_alpha, regime, is_yamabe)
    denom = N - 2 - N * m
    beta = N / denom
    Cstar = 2.0 * m * denom / (1.0 - m)
    return ProblemParams(N, m, float(T), beta, -beta / N, Cstar, weight_alpha, regime, is_yamabe)


def _require_range(p: ProblemParams):
    if not p.in_range:
        raise ConfigurationError(f"m={p.m} is outside (0, (N-2)/N) for N={p.N}")


class Barenblatt:
    """B_k(r, t) = (C*(T-t) / (k (T-t)^{2 gamma} + r^2))^{1/(1-m)}, zero for t >= T."""

    def __init__(self, p: ProblemParams, k: float, T: Optional[float] = None):
        _require_range(p)
        self.p = p
        self.spec = BarenblattSpec(float(k), float(p.T if T is None else T))

    @property
    def k(self):
        return self.spec.k

    @property
    def T(self):
        return self.spec.T

    def _pieces(self, r, t):
        p = self.p
        s = self.T - np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            kappa = self.k * np.power(s, 2.0 * p.gamma)
            D = kappa + np.asarray(r, dtype=float) ** 2
        return s, kappa, D

    def __call__(self, r, t):
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        s, kappa, D = self._pieces(r, t)
        p = self.p
        alive = s > 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            val = np.exp((np.log(p.Cstar * s) - np.log(D)) / (1.0 - p.m))
        out = np.where(alive, val, 0.0)
        out = np.where(np.isfinite(out), out, 0.0)
        return out if out.ndim else float(out)

    def derivatives(self, r, t):
        """Return (u, u_t, w_r, w_rr) with w = u^m, for t < T."""
        p = self.p
        r = np.asarray(r, dtype=float)
        s, kappa, D = self._pieces(r, t)
        u = self(r, t)
        q = p.m / (1.0 - p.m)
        w = u**p.m
        w_r = -2.0 * q * r * w / D
        w_rr = -2.0 * q * (w / D) * (1.0 - 2.0 * (q + 1.0) * r * r / D)
        u_t = u * (-1.0 / s + 2.0 * p.gamma * kappa / (s * D)) / (1.0 - p.m)
        return u, u_t, w_r, w_rr

    def tail(self, t) -> Optional[PowerTail]:
        s = self.T - t
        if s <= 0:
            return None
        p = self.p
        return PowerTail(p.tail_exponent, (p.Cstar * s) ** (1.0 / (1.0 - p.m)), self.k * s ** (2.0 * p.gamma))

    def field(self, grid: RadialGrid, t: float) -> RadialField:
        return RadialField(grid, self(grid.nodes, t), self.tail(t), {"k": self.k, "T": self.T, "t": t})


class RescaledBarenblatt:
    """Stationary profile (C*/(k + r^2))^{1/(1-m)} of the rescaled flow."""

    def __init__(self, p: ProblemParams, k: float):
        _require_range(p)
        if not k > 0:
            raise ConfigurationError(f"k must be positive, got {k}")
        self.p = p
        self.k = float(k)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(over="ignore", under="ignore"):
            out = np.exp((math.log(self.p.Cstar) - np.log(self.k + r * r)) / (1.0 - self.p.m))
        return out if out.ndim else float(out)

    def derivatives(self, r):
        """Return (u, u_r, w_r, w_rr) with w = u^m."""
        p = self.p
        r = np.asarray(r, dtype=float)
        D = self.k + r * r
        u = self(r)
        q = p.m / (1.0 - p.m)
        w = u**p.m
        u_r = -2.0 * r * u / ((1.0 - p.m) * D)
        w_r = -2.0 * q * r * w / D
        w_rr = -2.0 * q * (w / D) * (1.0 - 2.0 * (q + 1.0) * r * r / D)
        return u, u_r, w_r, w_rr

    @property
    def tail(self) -> PowerTail:
        return PowerTail(self.p.tail_exponent, self.p.Cstar ** (1.0 / (1.0 - self.p.m)), self.k)

    def field(self, grid: RadialGrid) -> RadialField:
        return RadialField(grid, self(grid.nodes), self.tail, {"k": self.k})


def eval_barenblatt(p: ProblemParams, b: BarenblattSpec, r, t):
    if np.any(np.asarray(r) < 0):
        raise ValueError("radius must be nonnegative")
    return Barenblatt(p, b.k, b.T)(r, t)


def eval_rescaled_barenblatt(p: ProblemParams, k: float, r):
    if np.any(np.asarray(r) < 0):
        raise ValueError("radius must be nonnegative")
    return RescaledBarenblatt(p, k)(r)


def radial_laplacian(w, w_r, w_rr, r, N):
    """w_rr + (N-1) w_r / r, with the limit N w_rr at r = 0."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = np.where(r > 0, w_rr + (N - 1) * w_r / np.where(r > 0, r, 1.0), N * w_rr)
    return lap


def pde_residual(u, p: ProblemParams, r, t, h: Optional[float] = None):
    """Residual u_t - Laplacian(u^m) of a radial profile ``u(r, t)``.

    If ``u`` exposes ``derivatives(r, t) -> (u, u_t, w_r, w_rr)`` and ``h`` is
    None, the analytic derivatives are used; otherwise centered differences
    with step ``h`` (default 1e-4) in both r and t.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    if h is None and hasattr(u, "derivatives"):
        _, u_t, w_r, w_rr = u.derivatives(r, t)
        return u_t - radial_laplacian(None, w_r, w_rr, r, p.N)
    h = 1e-4 if h is None else h
    m = p.m

    def w(x):
        return np.asarray(u(x, t), dtype=float) ** m

    u_t = (np.asarray(u(r, t + h)) - np.asarray(u(r, t - h))) / (2 * h)
    rp = r + h
    rm = np.abs(r - h)  # reflection keeps the stencil even-symmetric at r < h
    w0, wp, wm = w(r), w(rp), w(rm)
    w_r = (wp - wm) / (2 * h)
    w_rr = (wp - 2 * w0 + wm) / (h * h)
    res = u_t - radial_laplacian(w0, w_r, w_rr, r, p.N)
    return res if np.ndim(res) else float(res)


def find_k0(u0: RadialField, p: ProblemParams, k_lo: float, k_hi: float, tol: Optional[float] = None,
            max_iter: int = 200) -> float:
    """Bisect for k0 with F(k0) = integral of (u0 - B_k0(., 0)) = 0.

    ``k_lo`` is the lower trapping parameter (the larger k), so F(k_lo) >= 0 >= F(k_hi).
    """
    if p.regime is not Regime.INTEGRABLE:
        raise NonIntegrableRegime(f"mass matching needs the integrable regime, got {p.regime.value}")
    if not (k_lo >= k_hi > 0):
        raise ConfigurationError(f"need k_lo >= k_hi > 0, got k_lo={k_lo}, k_hi={k_hi}")
    grid = u0.grid

    def F(k):
        return signed_difference_integral(u0, Barenblatt(p, k).field(grid, 0.0))

    if tol is None:
        scale = l1_distance(u0, Barenblatt(p, k_hi).field(grid, 0.0))
        tol = 1e-8 * scale if scale > 0 else 1e-300
    a, b = float(k_hi), float(k_lo)
    Fa, Fb = F(a), F(b)
    if abs(Fa) < tol:
        return a
    if abs(Fb) < tol:
        return b
    if not (Fa < 0 < Fb):
        raise NoBracket(f"F does not change sign on [{a}, {b}]: F={Fa:.3e}, {Fb:.3e}")
    mid = 0.5 * (a + b)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        Fm = F(mid)
        if abs(Fm) < tol or (b - a) <= 1e-15 * mid:
            return mid
        if Fm < 0:
            a = mid
        else:
            b = mid
    return mid
