import math

import numpy as np
import pytest

from fastdiff.errors import ConfigurationError
from fastdiff.grid import make_grid
from fastdiff.profiles import Barenblatt, RescaledBarenblatt, derive_params
from fastdiff.rescaling import (from_rescaled, rescale_trajectory, rescaled_residual, second_kind_rescale,
                                to_rescaled)
from fastdiff.solver import Trajectory


@pytest.mark.parametrize("N,m", [(3, 0.2), (6, 0.4)])
@pytest.mark.parametrize("frac", [0.1, 0.5, 0.99])
def test_barenblatt_maps_to_stationary_profile(N, m, frac):
    p = derive_params(N, m, 2.0)
    g = make_grid(1e3, 400, 5.0, N)
    t = frac * p.T
    r = to_rescaled(Barenblatt(p, 1.7).field(g, t), t, p)
    assert r.tau == pytest.approx(-math.log(p.T - t))
    assert r.t == pytest.approx(t)
    exact = RescaledBarenblatt(p, 1.7)(r.field.r)
    assert np.max(np.abs(r.field.values - exact)) / exact[0] < 1e-12
    back, tb = from_rescaled(r, p)
    np.testing.assert_allclose(back.r, g.nodes, rtol=1e-13)
    assert tb == pytest.approx(t, abs=1e-14)


def test_to_rescaled_after_extinction():
    p = derive_params(3, 0.2)
    g = make_grid(1e3, 400, 5.0, 3)
    with pytest.raises(ValueError):
        to_rescaled(Barenblatt(p, 1.0).field(g, 0.0), 1.0, p)


def test_rescale_trajectory_skips_late_snapshots():
    p = derive_params(3, 0.2)
    g = make_grid(1e3, 400, 5.0, 3)
    B = Barenblatt(p, 1.0)
    traj = Trajectory([0.0, 0.5], [B.field(g, 0.0), B.field(g, 0.5)])
    traj.times.append(1.0)
    traj.fields.append(B.field(g, 0.5))
    resc = rescale_trajectory(traj, p)
    assert resc.label == "tau" and len(resc) == 2


def test_resample_onto_grid():
    p = derive_params(3, 0.2)
    g = make_grid(1e3, 1600, 5.0, 3)
    target = make_grid(50.0, 400, 5.0, 3)
    r = to_rescaled(Barenblatt(p, 1.0).field(g, 0.5), 0.5, p, target)
    np.testing.assert_allclose(r.field.values, RescaledBarenblatt(p, 1.0)(target.nodes), rtol=1e-4)


@pytest.mark.parametrize("N,m", [(3, 0.2), (5, 0.5), (8, 0.5)])
def test_stationarity_residual(N, m):
    p = derive_params(N, m)
    b = RescaledBarenblatt(p, 1.0)
    y = np.linspace(0.0, 5.0, 51)
    assert np.max(np.abs(rescaled_residual(b, p, y))) < 1e-12 * b(0.0)
    assert np.max(np.abs(rescaled_residual(lambda x: b(x), p, y))) < 1e-6 * b(0.0)
    # on a grid the three-point stencil is second order
    errs = []
    for M in (800, 1600):
        g = make_grid(20.0, M, 5.0, N)
        res = rescaled_residual(b.field(g), p)
        errs.append(np.nanmax(np.abs(res[: M // 4])))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_second_kind_rescale():
    p = derive_params(3, 0.2)
    g = make_grid(100.0, 400, 5.0, 3)
    B = Barenblatt(p, 1.0)
    # with the first-kind exponents the Barenblatt maps onto its stationary profile
    alpha = p.beta
    theta = p.gamma
    f = second_kind_rescale(B.field(g, 0.3), 0.3, 1.0, theta, alpha, p.m)
    np.testing.assert_allclose(f.values, RescaledBarenblatt(p, 1.0)(f.r), rtol=1e-12)
    with pytest.raises(ConfigurationError):
        second_kind_rescale(B.field(g, 0.3), 0.3, 1.0, 0.0, 1.0, p.m)
    with pytest.raises(ValueError):
        second_kind_rescale(B.field(g, 0.3), 1.3, 1.0, 0.0, 1.25, p.m)
