"""Property tests for invariants of the closed forms, the similarity maps and the distances."""

import math

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st

from fastdiff.config import default_config
from fastdiff.diagnostics import _running_increase
from fastdiff.grid import PowerTail, field_from_function, l1_distance, make_grid, sup_distance
from fastdiff.profiles import Barenblatt, Regime, RescaledBarenblatt, classify_regime, derive_params, pde_residual
from fastdiff.rescaling import from_rescaled, to_rescaled
from fastdiff.selfsimilar import YamabeProfile, profile_ode_residual


@st.composite
def fast_params(draw):
    N = draw(st.integers(3, 10))
    frac = draw(st.floats(0.05, 0.95))
    m = frac * (N - 2) / N
    assume(classify_regime(N, m) is not Regime.OUT_OF_RANGE)
    T = draw(st.floats(0.1, 10.0))
    return derive_params(N, m, T)


@given(fast_params(), st.floats(0.1, 10.0), st.floats(0.0, 20.0), st.floats(0.0, 0.95))
def test_barenblatt_solves_pde(p, k, r, frac):
    B = Barenblatt(p, k)
    t = frac * p.T
    u, u_t, _, _ = B.derivatives(np.array([r]), t)
    res = pde_residual(B, p, r, t)
    assert abs(res) <= 1e-11 * max(abs(u_t[0]), 1e-300) + 1e-300


@given(fast_params(), st.floats(0.1, 10.0), st.floats(1.01, 5.0), st.floats(0.0, 50.0), st.floats(0.0, 0.99))
def test_barenblatt_ordering(p, k, factor, r, frac):
    # larger k is pointwise smaller
    t = frac * p.T
    assert Barenblatt(p, k * factor)(r, t) <= Barenblatt(p, k)(r, t)


@given(fast_params(), st.floats(0.1, 10.0), st.floats(0.01, 0.99))
def test_rescaling_maps_barenblatt_to_profile(p, k, frac):
    g = make_grid(1e3, 128, 5.0, p.N)
    t = frac * p.T
    r = to_rescaled(Barenblatt(p, k).field(g, t), t, p)
    exact = RescaledBarenblatt(p, k)(r.field.r)
    assert np.max(np.abs(r.field.values - exact)) <= 1e-11 * exact[0]
    back, tb = from_rescaled(r, p)
    assert abs(tb - t) <= 1e-12 * p.T
    np.testing.assert_allclose(back.r, g.nodes, rtol=1e-12)


@given(fast_params())
def test_weight_exponent_relation(p):
    # the weighted distance of two Barenblatts has a 1/r integrand at infinity
    expo = p.N - 1 - (p.tail_exponent + 2) - 2 * p.weight_alpha / (1 - p.m)
    assert math.isclose(expo, -1.0, abs_tol=1e-12)


@given(st.integers(3, 12), st.floats(0.05, 20.0), st.floats(0.0, 100.0))
def test_yamabe_profile_residual(N, lam, eta):
    p = derive_params(N, (N - 2) / (N + 2))
    yp = YamabeProfile(N, lam)
    _, f1, w1, w2 = yp.derivatives(np.array([eta]))
    scale = abs(yp(eta)) + abs(w2[0]) + abs(w1[0]) * (N - 1) / max(eta, 1e-3)
    assert abs(profile_ode_residual(yp, p, 0.0, np.array([eta]))[0]) <= 1e-12 * scale


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
def test_running_increase_properties(d):
    rise, i = _running_increase(d)
    assert rise >= 0
    if all(b <= a for a, b in zip(d, d[1:])):
        assert rise == 0
    assert rise <= max(d) - min(d) + 1e-9


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_l1_is_a_metric(a, b, c):
    g = make_grid(20.0, 128, 2.0, 3)
    fs = [field_from_function(g, lambda r, s=s: s * np.exp(-r * r)) for s in (a, b, c)]
    dab, dbc, dac = l1_distance(fs[0], fs[1]), l1_distance(fs[1], fs[2]), l1_distance(fs[0], fs[2])
    assert dab == l1_distance(fs[1], fs[0])
    assert dac <= dab + dbc + 1e-12
    assert abs(dab - abs(a - b) * math.pi**1.5) <= 1e-3 * max(dab, 1e-12)
    assert sup_distance(fs[0], fs[1]) == abs(a - b)


@given(st.floats(0.5, 8.0), st.floats(0.0, 5.0), st.floats(0.0, 4.0), st.floats(0.0, 1e4))
def test_power_tail_matches_formula(p, c, d, r):
    t = PowerTail(p, c, d)
    expect = c * (r * r + d) ** (-p / 2) if (r > 0 or d > 0) else (math.inf if c > 0 else 0.0)
    val = float(t(np.array([r]))[0])
    if math.isfinite(expect):
        assert math.isclose(val, expect, rel_tol=1e-12, abs_tol=1e-300)


@given(st.sampled_from(["thm-integrable", "thm-nonintegrable", "example-longer", "yamabe",
                        "appendix-onesided", "barenblatt-selftest"]),
       st.integers(64, 5000), st.floats(1e-5, 0.5))
def test_config_override_round_trip(name, M, target):
    cfg = default_config(name, [f"grid.M={M}", f"solver.adapt_target={target!r}"])
    assert cfg.grid["M"] == M and cfg.solver["adapt_target"] == target
