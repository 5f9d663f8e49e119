"""Self-similar profiles of the second kind, Theta = (T-t)^alpha f(r / (T-t)^theta).

Substituting Theta into u_t = Laplacian(u^m) gives the profile equation

    (f^m)'' + (N-1)/eta (f^m)' - theta eta f' + alpha f = 0,  alpha = (1-2 theta)/(1-m),

whose solutions generically decay like eta^{-2/(1-m)}; for one anomalous
theta the decay is the faster eta^{-(N-2)/m}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import Blowup, ConfigurationError, NoSignChange
from .grid import PowerTail, RadialField, fit_tail_exponent, make_grid
from .profiles import ProblemParams, radial_laplacian
from .rescaling import _map_field


def alpha_for(theta: float, m: float) -> float:
    return (1.0 - 2.0 * theta) / (1.0 - m)


def theta_range(p: ProblemParams):
    """Open interval of admissible theta: (-m/((1-m)N - 2), 1/2)."""
    return -p.m / ((1.0 - p.m) * p.N - 2.0), 0.5


@dataclass(frozen=True)
class SelfSimilarSpec:
    theta: float
    alpha_ss: float
    lam: float
    Tstar: float
    profile: Optional[RadialField] = None
    m: Optional[float] = None

    def __post_init__(self):
        if self.m is not None and abs(self.alpha_ss * (1 - self.m) - (1 - 2 * self.theta)) > 1e-12:
            raise ConfigurationError("alpha_ss(1-m) must equal 1 - 2 theta")
        if not self.lam > 0:
            raise ConfigurationError("lambda must be positive")


def profile_ode_residual(f, p: ProblemParams, theta: float, eta, h: Optional[float] = None):
    """Residual of the profile equation at radii ``eta``.

    ``f`` is a callable; analytic derivatives are used when it provides
    ``derivatives(eta) -> (f, f', w', w'')`` and ``h`` is None, otherwise
    centred differences with step ``h`` (default 1e-4).
    """
    eta = np.asarray(eta, dtype=float)
    alpha = alpha_for(theta, p.m)
    if h is None and hasattr(f, "derivatives"):
        fv, f1, w1, w2 = f.derivatives(eta)
    else:
        h = 1e-4 if h is None else h
        ep, em = eta + h, np.abs(eta - h)
        fv, fp, fm = (np.asarray(f(x), dtype=float) for x in (eta, ep, em))
        w0, wp, wm = fv**p.m, fp**p.m, fm**p.m
        f1 = (fp - fm) / (2 * h)
        w1 = (wp - wm) / (2 * h)
        w2 = (wp - 2 * w0 + wm) / (h * h)
    return radial_laplacian(None, w1, w2, eta, p.N) - theta * eta * f1 + alpha * fv


def yamabe_constant(N: int) -> float:
    """K_N such that (K_N lam/(lam^2+eta^2))^{(N+2)/2} solves the theta=0 profile equation."""
    return 2.0 * math.sqrt(N * (N - 2) / (N + 2))


class YamabeProfile:
    """f(eta; lam) = (K_N lam / (lam^2 + eta^2))^{(N+2)/2} for m = (N-2)/(N+2)."""

    def __init__(self, N: int, lam: float = 1.0):
        if not lam > 0:
            raise ConfigurationError("lambda must be positive")
        self.N = N
        self.lam = float(lam)
        self.K = yamabe_constant(N)
        self.m = (N - 2) / (N + 2)

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        lam = self.lam
        out = np.exp(0.5 * (self.N + 2) * (math.log(self.K * lam) - np.log(lam * lam + eta * eta)))
        return out if out.ndim else float(out)

    def derivatives(self, eta):
        eta = np.asarray(eta, dtype=float)
        N = self.N
        D = self.lam**2 + eta * eta
        f = self(eta)
        w = f**self.m
        a = 0.5 * (N - 2)
        f1 = -(N + 2) * eta * f / D
        w1 = -2 * a * eta * w / D
        w2 = -2 * a * (w / D) * (1 - N * eta * eta / D)
        return f, f1, w1, w2

    @property
    def tail(self) -> PowerTail:
        return PowerTail(float(self.N + 2), (self.K * self.lam) ** (0.5 * (self.N + 2)), self.lam**2)

    def field(self, grid) -> RadialField:
        return RadialField(grid, self(grid.nodes), self.tail, {"lambda": self.lam, "theta": 0.0})


def yamabe_profile(N: int, lam: float, eta):
    return YamabeProfile(N, lam)(eta)


def scale_profile(f: RadialField, lam: float, m: float, grid=None) -> RadialField:
    """f(eta; lam) = lam^{-2/(1-m)} f(eta / lam; 1)."""
    if not lam > 0:
        raise ConfigurationError("lambda must be positive")
    g = _map_field(f, lam ** (-2.0 / (1.0 - m)), lam, grid)
    meta = dict(f.meta)
    meta["lambda"] = meta.get("lambda", 1.0) * lam
    return RadialField(g.grid, g.values, g.tail, meta)


# -- shooting ------------------------------------------------------------------------

def _integrate_shot(p: ProblemParams, theta: float, f0: float, eta_max: float, rtol: float = 1e-11):
    """Integrate (w, w') in s = log(eta); returns (outcome, eta_stop, eta_start, solution)."""
    N, m = p.N, p.m
    alpha = alpha_for(theta, m)
    inv_m = 1.0 / m
    w0 = f0**m
    w2 = -alpha * f0 / (2.0 * N)
    # start where the quadratic Taylor term is a small relative correction
    eta0 = 1e-4 * math.sqrt(w0 / max(abs(w2), 1e-300))
    s0 = math.log(eta0)
    s1 = math.log(eta_max)
    y0 = [w0 + w2 * eta0**2, 2.0 * w2 * eta0]
    big = (1e6 * f0) ** m

    def rhs(s, y):
        eta = math.exp(s)
        w, q = y  # q = dw/deta
        wp = max(w, 0.0)
        f = wp**inv_m
        fprime = inv_m * wp ** (inv_m - 1.0) * q if wp > 0 else 0.0
        qq = -(N - 1) / eta * q + theta * eta * fprime - alpha * f
        return [eta * q, eta * qq]

    def hit_zero(s, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1

    def blow(s, y):
        return y[0] - big

    blow.terminal = True
    blow.direction = 1

    sol = solve_ivp(rhs, (s0, s1), y0, method="DOP853", rtol=rtol, atol=1e-14 * w0,
                    events=(hit_zero, blow), dense_output=True)
    outcome = "complete"
    s_stop = s1
    if sol.t_events[0].size:
        outcome, s_stop = "zero", float(sol.t_events[0][0])
    elif sol.t_events[1].size:
        outcome, s_stop = "blowup", float(sol.t_events[1][0])
    elif sol.status != 0:
        outcome, s_stop = "zero", float(sol.t[-1])
    eta_stop = eta_max if outcome == "complete" else math.exp(s_stop)
    return outcome, eta_stop, eta0, sol


def shoot_profile(p: ProblemParams, theta: float, f0: float = 1.0, eta_max: float = 1e6, M: int = 2000,
                  r_lin: Optional[float] = None) -> RadialField:
    """Integrate the profile equation from f(0)=f0, f'(0)=0 out to ``eta_max``.

    The result is sampled on a stretched grid; beyond a zero crossing the
    profile is zero. ``meta['outcome']`` records how the shot ended.
    Raises :class:`Blowup` if f exceeds 1e6 f0.
    """
    lo, hi = theta_range(p)
    if not (lo < theta < hi):
        raise ConfigurationError(f"theta={theta} outside ({lo}, {hi})")
    if not f0 > 0:
        raise ConfigurationError("f0 must be positive")
    outcome, eta_stop, eta0, sol = _integrate_shot(p, theta, f0, eta_max)
    if outcome == "blowup":
        raise Blowup(f"profile exceeded 1e6 f0 at eta={eta_stop:.3e} (theta={theta})")
    if r_lin is None:
        r_lin = min(5.0, eta_max / 20.0)
    grid = make_grid(eta_max, M, r_lin, p.N)
    eta = grid.nodes
    w = np.zeros_like(eta)
    inside = eta <= eta_stop
    w[inside] = sol.sol(np.log(np.maximum(eta[inside], eta0)))[0]
    small = eta < eta0  # Taylor start region
    w[small] = f0**p.m - alpha_for(theta, p.m) * f0 / (2 * p.N) * eta[small] ** 2
    f = np.maximum(w, 0.0) ** (1.0 / p.m)
    tail = None
    meta = {"theta": theta, "alpha": alpha_for(theta, p.m), "f0": f0, "lambda": 1.0,
            "outcome": outcome, "eta_stop": eta_stop}
    if outcome == "complete" and f[-1] > 0:
        try:
            pt = fit_tail_exponent(RadialField(grid, f), eta_max / 10.0)
            tail = PowerTail(pt, float(f[-1]) * eta_max**pt)
        except ValueError:
            tail = None
    return RadialField(grid, f, tail, meta)


def classify_shot(p: ProblemParams, theta: float, f0: float = 1.0, eta_max: float = 1e6) -> bool:
    """True if the shot lies on the fast-decay side of the anomalous theta.

    A shot is fast if it crosses zero, or if its local decay exponent at
    ``eta_max`` is at least the fast exponent (N-2)/m. Close to the anomalous
    theta the switch to the generic tail happens far beyond any practical
    eta_max, so a fitted exponent alone would misclassify; the local slope
    sees the sign of the departure instead.
    """
    outcome, _, _, sol = _integrate_shot(p, theta, f0, eta_max)
    if outcome == "blowup":
        return False
    if outcome == "zero":
        return True
    w, q = sol.y[0, -1], sol.y[1, -1]
    slope_f = -(eta_max * q / w) / p.m
    return slope_f >= p.fast_tail_exponent


def find_anomalous_theta(p: ProblemParams, f0: float = 1.0, eta_max: float = 1e6, width: float = 1e-8,
                         lo: Optional[float] = None, hi: Optional[float] = None) -> float:
    """Bisect theta until the shot switches between fast and generic decay."""
    if not p.in_range:
        raise ConfigurationError("parameters outside the fast diffusion range")
    if abs(p.fast_tail_exponent - p.tail_exponent) <= 0.5:
        raise ConfigurationError("the two candidate tail exponents are too close to separate")
    a0, b0 = theta_range(p)
    pad = 1e-3 * (b0 - a0)
    a = a0 + pad if lo is None else lo
    b = b0 - pad if hi is None else hi
    ca, cb = classify_shot(p, a, f0, eta_max), classify_shot(p, b, f0, eta_max)
    if ca == cb:
        raise NoSignChange(f"tail classification does not change on [{a}, {b}]")
    while b - a > width:
        mid = 0.5 * (a + b)
        if classify_shot(p, mid, f0, eta_max) == ca:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)
