import math

import numpy as np
import pytest
import sympy as sp

from fastdiff.errors import Blowup, ConfigurationError
from fastdiff.profiles import derive_params
from fastdiff.selfsimilar import (SelfSimilarSpec, YamabeProfile, alpha_for, classify_shot, find_anomalous_theta,
                                  profile_ode_residual, scale_profile, shoot_profile, theta_range,
                                  yamabe_constant, yamabe_profile)


def test_yamabe_constant_symbolic():
    # independent route: substitute the profile into the theta = 0 equation symbolically
    for N in (3, 4, 6):
        eta, lam, K = sp.symbols("eta lam K", positive=True)
        m = sp.Rational(N - 2, N + 2)
        f = (K * lam / (lam**2 + eta**2)) ** sp.Rational(N + 2, 2)
        w = sp.simplify(f**m)
        res = sp.diff(w, eta, 2) + (N - 1) / eta * sp.diff(w, eta) + f / (1 - m)
        sol = sp.solve(sp.simplify(res.subs(eta, 1).subs(lam, 1)), K)
        assert any(abs(float(s) - yamabe_constant(N)) < 1e-12 for s in sol)


def test_k3_value():
    assert yamabe_constant(3) == pytest.approx(2.0 * math.sqrt(0.6), rel=1e-15)


@pytest.mark.parametrize("N", [3, 4, 5, 10])
@pytest.mark.parametrize("lam", [0.3, 1.0, 4.0])
def test_yamabe_residual(N, lam):
    p = derive_params(N, (N - 2) / (N + 2))
    yp = YamabeProfile(N, lam)
    eta = np.linspace(0.0, 50.0, 201)
    scale = yp(0.0)
    assert np.max(np.abs(profile_ode_residual(yp, p, 0.0, eta))) < 1e-12 * max(scale, 1.0)
    assert np.max(np.abs(profile_ode_residual(lambda x: yp(x), p, 0.0, eta[1:], h=1e-4))) < 1e-5 * max(scale, 1)


def test_yamabe_profile_scaling():
    N, lam = 3, 1.7
    m = 0.2
    base = YamabeProfile(N, 1.0)
    eta = np.linspace(0.0, 10.0, 11)
    np.testing.assert_allclose(yamabe_profile(N, lam, eta), lam ** (-2 / (1 - m)) * base(eta / lam), rtol=1e-13)
    from fastdiff.grid import make_grid
    g = make_grid(100.0, 400, 5.0, N)
    scaled = scale_profile(base.field(g), lam, m)
    np.testing.assert_allclose(scaled.values, yamabe_profile(N, lam, scaled.r), rtol=1e-13)
    with pytest.raises(ConfigurationError):
        YamabeProfile(3, -1.0)


def test_spec_validation():
    SelfSimilarSpec(0.0, 1.25, 1.0, 2.0, m=0.2)
    with pytest.raises(ConfigurationError):
        SelfSimilarSpec(0.1, 1.25, 1.0, 2.0, m=0.2)
    with pytest.raises(ConfigurationError):
        SelfSimilarSpec(0.0, 1.25, 0.0, 2.0)


def test_theta_range_and_alpha():
    p = derive_params(3, 0.2)
    lo, hi = theta_range(p)
    assert lo == pytest.approx(-0.5) and hi == 0.5
    assert alpha_for(0.0, 0.2) == pytest.approx(1.25)


def test_shot_at_theta_zero_matches_yamabe():
    p = derive_params(3, 0.2)
    f = shoot_profile(p, 0.0, f0=1.0, eta_max=1e3)
    lam = yamabe_constant(3) ** 1.0  # f(0) = (K/lam)^{5/2} = 1
    np.testing.assert_allclose(f.values, yamabe_profile(3, lam, f.r), rtol=1e-7)
    assert f.meta["outcome"] == "complete"


def test_shot_classification_brackets_zero():
    p = derive_params(3, 0.2)
    assert classify_shot(p, -0.05) != classify_shot(p, 0.05)


def test_anomalous_theta_yamabe():
    # frozen from the bisection; the exact value is 0
    p = derive_params(3, 0.2)
    theta = find_anomalous_theta(p)
    assert abs(theta) < 1e-6


def test_anomalous_theta_bad_params():
    with pytest.raises(ConfigurationError):
        find_anomalous_theta(derive_params(3, 0.5))


def test_shoot_validation():
    p = derive_params(3, 0.2)
    with pytest.raises(ConfigurationError):
        shoot_profile(p, 0.6)
    with pytest.raises(ConfigurationError):
        shoot_profile(p, 0.0, f0=0.0)


def test_blowup_is_reported():
    # theta near the lower end gives a growing shot for this f0
    p = derive_params(3, 0.2)
    try:
        shoot_profile(p, -0.49, f0=1.0, eta_max=1e6)
    except Blowup:
        pass
