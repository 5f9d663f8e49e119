import math

import numpy as np
import pytest

from fastdiff.errors import ConfigurationError, NotDecaying
from fastdiff.grid import PowerTail, field_from_function, make_grid
from fastdiff.profiles import Barenblatt, BarenblattSpec, derive_params
from fastdiff.solver import (AtExtinction, AtTime, DirichletAnalytic, SolverConfig, TailExtrapolation, Trajectory,
                             _geometry, estimate_extinction_time, init_state, interior_mass, run, step)

P3 = derive_params(3, 0.2)


def _cfg(k=1.0, t_end=0.5, **kw):
    return SolverConfig(0.2, DirichletAnalytic(P3, BarenblattSpec(k, 1.0)), AtTime(t_end), **kw)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(1.2)
    with pytest.raises(ConfigurationError):
        SolverConfig(0.2, adapt_target=0.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(0.2, dt_init=-1.0)
    d = _cfg().describe()
    assert d["boundary"]["mode"] == "DirichletAnalytic" and d["stop"]["t"] == 0.5


def test_envelope_mismatch_rejected():
    g = make_grid(1e3, 400, 5.0, 3)
    u0 = Barenblatt(P3, 2.0).field(g, 0.0)
    with pytest.raises(ConfigurationError):
        init_state(u0.with_values(u0.values * 1.01), _cfg(2.0))
    q = derive_params(6, 0.4)
    with pytest.raises(ConfigurationError):
        init_state(Barenblatt(q, 1.0).field(make_grid(N=6), 0.0), _cfg())


def test_barenblatt_run_tracks_closed_form():
    g = make_grid(1e3, 800, 5.0, 3)
    B = Barenblatt(P3, 1.0)
    tr = run(B.field(g, 0.0), _cfg(t_end=0.5), [0.1, 0.25, 0.5])
    assert tr.times == [0.0, 0.1, 0.25, 0.5]
    for t, f in tr:
        assert np.max(np.abs(f.values - B(f.r, t))) < 0.02 * B(0.0, t)
    assert tr.final_state.stats.steps > 0


def test_boundary_flux_closes_mass_balance():
    # total discrete mass plus what left through R stays constant
    g = make_grid(50.0, 400, 5.0, 3)
    u0 = field_from_function(g, lambda r: np.exp(-r * r) + 1e-6 * (1 + r * r) ** -2.5, PowerTail(5.0, 1e-6, 1.0))
    cfg = SolverConfig(0.2, TailExtrapolation(5.0), AtTime(0.05))
    s = init_state(u0, cfg)
    geo = _geometry(g)
    total = lambda f: geo.omega * float(np.sum(geo.mass(f.values)))
    m0 = total(s.field)
    assert interior_mass(s.field) < m0
    for _ in range(20):
        s = step(s, 1e-3)
    m1 = total(s.field)
    assert m1 < m0
    assert m1 + s.stats.boundary_flux == pytest.approx(m0, rel=1e-9)


def test_dirichlet_difference_mass_conserved():
    # two ordered Barenblatts with the same T: the L1 distance is conserved in the integrable regime
    g = make_grid(1e5, 800, 1e-2, 3)
    tr = {k: run(Barenblatt(P3, k).field(g, 0.0), _cfg(k, t_end=0.3), [0.1, 0.3]) for k in (1.0, 2.0)}
    from fastdiff.grid import l1_distance
    d = [l1_distance(a, b) for (_, a), (_, b) in zip(tr[1.0], tr[2.0])]
    assert max(d) - min(d) < 1e-4 * d[0]


def test_extinction_of_compact_bump():
    g = make_grid(100.0, 200, 5.0, 3)
    u0 = field_from_function(g, lambda r: 0.5 * (1 + r * r) ** -2.5, PowerTail(5.0, 0.5, 1.0))
    cfg = SolverConfig(0.2, TailExtrapolation(), AtExtinction(1e-30, 1.0), adapt_target=1e-2)
    tr = run(u0, cfg, list(np.arange(1, 100) * 0.01))
    # separable solution: extinction at A^{1-m} / K_3^2 with K_3^2 = 12/5
    T = 0.5**0.8 / 2.4
    assert estimate_extinction_time(tr) == pytest.approx(T, rel=0.02)


def test_extinction_estimate_on_exact_power_law():
    g = make_grid(10.0, 100, 1.0, 3)
    ts = np.linspace(0.5, 0.9, 20)
    fields = [field_from_function(g, lambda r, t=t: np.full_like(r, (1.3 - t) ** 2.5)) for t in ts]
    assert estimate_extinction_time(Trajectory(list(ts), fields)) == pytest.approx(1.3, rel=1e-8)
    with pytest.raises(NotDecaying):
        estimate_extinction_time(Trajectory(list(ts), fields[::-1]))
    with pytest.raises(ValueError):
        estimate_extinction_time(Trajectory(list(ts[:3]), fields[:3]))


def test_output_times_validated():
    g = make_grid(1e3, 400, 5.0, 3)
    with pytest.raises(ValueError):
        run(Barenblatt(P3, 1.0).field(g, 0.0), _cfg(), [0.2, 0.1])


def test_trajectory_round_trip(tmp_path):
    g = make_grid(1e3, 400, 5.0, 3)
    B = Barenblatt(P3, 1.0)
    tr = run(B.field(g, 0.0), _cfg(t_end=0.1), [0.05, 0.1])
    tr.save(str(tmp_path / "traj"))
    back = Trajectory.load(str(tmp_path / "traj"))
    assert back.times == tr.times
    for (_, a), (_, b) in zip(tr, back):
        np.testing.assert_array_equal(a.values, b.values)
        assert a.tail == b.tail
