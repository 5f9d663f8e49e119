"""Similarity variables: the first-kind frame around extinction and the
second-kind scaling used for anomalous self-similar profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigurationError
from .grid import RadialField, RadialGrid, interpolate
from .profiles import ProblemParams, radial_laplacian
from .solver import Trajectory


@dataclass(frozen=True, eq=False)
class RescaledField:
    """u~(y, tau) = (T-t)^{-beta} u(y (T-t)^gamma, t) with tau = -log(T-t)."""

    tau: float
    field: RadialField
    T: float
    meta: Mapping = field(default_factory=dict)

    @property
    def t(self) -> float:
        return self.T - math.exp(-self.tau)


def _map_field(f: RadialField, amplitude: float, length: float, grid: Optional[RadialGrid]) -> RadialField:
    """Field of ``amplitude * u(y / length)``, on mapped nodes or resampled onto ``grid``."""
    tail = f.tail.scaled(amplitude, length) if f.tail is not None else None
    if grid is None:
        new_grid = f.grid.scaled(length)
        return RadialField(new_grid, amplitude * f.values, tail, f.meta)
    if grid.N != f.N:
        raise ConfigurationError("target grid has a different dimension")
    vals = amplitude * np.asarray(interpolate(f, grid.nodes / length))
    return RadialField(grid, vals, tail, f.meta)


def to_rescaled(f: RadialField, t: float, p: ProblemParams, grid: Optional[RadialGrid] = None) -> RescaledField:
    """Map a physical snapshot at time ``t`` to the first-kind similarity frame.

    By default nodes are mapped exactly (y_i = r_i (T-t)^{-gamma}); pass
    ``grid`` to resample onto a fixed grid instead.
    """
    s = p.T - t
    if not s > 0:
        raise ValueError(f"rescaling needs t < T, got t={t}, T={p.T}")
    amp = s ** (-p.beta)
    length = s ** (-p.gamma)
    g = _map_field(f, amp, length, grid)
    return RescaledField(-math.log(s), g, p.T, {"t": t})


def from_rescaled(g: RescaledField, p: ProblemParams, grid: Optional[RadialGrid] = None):
    """Inverse of :func:`to_rescaled`; returns (physical field, t)."""
    s = math.exp(-g.tau)
    t = p.T - s
    f = _map_field(g.field, s**p.beta, s**p.gamma, grid)
    return f, t


def rescale_trajectory(traj: Trajectory, p: ProblemParams, grid: Optional[RadialGrid] = None) -> Trajectory:
    """Rescaled copy of every snapshot with t < T, indexed by tau."""
    taus, fields = [], []
    for t, f in traj:
        if t < p.T:
            g = to_rescaled(f, t, p, grid)
            taus.append(g.tau)
            fields.append(g.field)
    return Trajectory(taus, fields, None, traj.config, label="tau")


def _node_derivatives(r: np.ndarray, v: np.ndarray):
    """Three-point first and second derivatives on a nonuniform grid (even at r=0)."""
    d1 = np.full_like(v, np.nan)
    d2 = np.full_like(v, np.nan)
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    vm, v0, vp = v[:-2], v[1:-1], v[2:]
    d1[1:-1] = (hm**2 * vp - hp**2 * vm + (hp**2 - hm**2) * v0) / (hm * hp * (hm + hp))
    d2[1:-1] = 2.0 * (hm * vp + hp * vm - (hm + hp) * v0) / (hm * hp * (hm + hp))
    d1[0] = 0.0
    d2[0] = 2.0 * (v[1] - v[0]) / r[1] ** 2
    return d1, d2


def rescaled_residual(g, p: ProblemParams, r=None, h: Optional[float] = None) -> np.ndarray:
    """Residual Laplacian(g^m) + |gamma| y^{1-N} (y^N g)_y of the rescaled flow.

    ``g`` may be a :class:`RescaledField` / :class:`RadialField` (three-point
    differences on its nodes, last node NaN) or a profile callable at radii
    ``r``: analytic if it provides ``derivatives`` and ``h`` is None,
    centred differences with step ``h`` otherwise.
    """
    N, m, ag = p.N, p.m, p.abs_gamma
    if isinstance(g, RescaledField):
        g = g.field
    if isinstance(g, RadialField):
        y = g.r
        u = g.values
        if np.any(u <= 0):
            raise ValueError("rescaled residual needs positive nodal values")
        w = u**m
        w1, w2 = _node_derivatives(y, w)
        u1, _ = _node_derivatives(y, u)
        return radial_laplacian(w, w1, w2, y, N) + ag * (N * u + y * u1)
    y = np.asarray(r, dtype=float)
    if h is None and hasattr(g, "derivatives"):
        u, u_r, w_r, w_rr = g.derivatives(y)
        return radial_laplacian(None, w_r, w_rr, y, N) + ag * (N * u + y * u_r)
    h = 2e-4 if h is None else h
    yp, ym = y + h, np.abs(y - h)
    u0, up, um = g(y), g(yp), g(ym)
    w0, wp, wm = u0**m, up**m, um**m
    w_r = (wp - wm) / (2 * h)
    w_rr = (wp - 2 * w0 + wm) / (h * h)
    u_r = (up - um) / (2 * h)
    return radial_laplacian(w0, w_r, w_rr, y, N) + ag * (N * u0 + y * u_r)


def second_kind_rescale(f: RadialField, t: float, Tstar: float, theta: float, alpha_ss: float, m: float,
                        grid: Optional[RadialGrid] = None) -> RadialField:
    """Profile g(eta) = (T*-t)^{-alpha} u(eta (T*-t)^theta, t).

    Requires alpha (1-m) = 1 - 2 theta to 1e-12.
    """
    if abs(alpha_ss * (1.0 - m) - (1.0 - 2.0 * theta)) > 1e-12 * max(1.0, abs(alpha_ss)):
        raise ConfigurationError(f"alpha={alpha_ss} is inconsistent with theta={theta} for m={m}")
    s = Tstar - t
    if not s > 0:
        raise ValueError(f"second-kind rescaling needs t < T*, got t={t}, T*={Tstar}")
    g = _map_field(f, s ** (-alpha_ss), s ** (-theta), grid)
    meta = dict(f.meta)
    meta.update({"theta": theta, "alpha": alpha_ss, "Tstar": Tstar, "t": t})
    return RadialField(g.grid, g.values, g.tail, meta)
