import math

import numpy as np
import pytest
from scipy.special import erf

from fastdiff.errors import ConfigurationError
from fastdiff.grid import (PowerTail, RadialField, field_from_csv, field_from_function, field_to_csv,
                           fit_tail_exponent, interpolate, l1_distance, make_grid, newtonian_potential,
                           signed_difference_integral, sphere_area, sup_distance, volume_integral,
                           weighted_l1_distance)
from fastdiff.profiles import RescaledBarenblatt, derive_params


def test_make_grid_layout():
    g = make_grid(1000.0, 400, 5.0, 3)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 1000.0
    assert g.nodes[100] == pytest.approx(5.0)
    assert np.all(np.diff(g.nodes) > 0)
    with pytest.raises(ConfigurationError):
        make_grid(1000.0, 10, 5.0, 3)
    with pytest.raises(ConfigurationError):
        make_grid(1.0, 400, 5.0, 3)


def test_sphere_area():
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(6) == pytest.approx(math.pi**3)


def test_gaussian_mass():
    g = make_grid(30.0, 3200, 5.0, 3)
    f = field_from_function(g, lambda r: np.exp(-r * r))
    assert volume_integral(f) == pytest.approx(math.pi**1.5, rel=1e-5)


def test_power_tail_mass():
    # u = (1+r^2)^{-2} in R^5: tail decays like r^{-4} < 5, divergent; in R^3 the mass is pi^2
    g3 = make_grid(1e3, 1600, 5.0, 3)
    f = field_from_function(g3, lambda r: (1 + r * r) ** -2.0, PowerTail(4.0, 1.0, 1.0))
    assert volume_integral(f) == pytest.approx(math.pi**2, rel=1e-5)
    g5 = make_grid(1e3, 1600, 5.0, 5)
    f5 = field_from_function(g5, lambda r: (1 + r * r) ** -2.0, PowerTail(4.0, 1.0, 1.0))
    assert math.isinf(volume_integral(f5))


def test_tail_is_finite_at_origin():
    t = PowerTail(-1.2, 2.0, 0.5)
    assert np.isfinite(t(np.array([0.0, 1.0]))).all()
    with pytest.raises(ConfigurationError):
        PowerTail(math.nan, 1.0)
    g = make_grid(10.0, 100, 1.0, 3)
    with pytest.raises(ConfigurationError):
        RadialField(g, np.ones(g.nodes.size), PowerTail(-1.0, 1.0))


def test_field_validation():
    g = make_grid(10.0, 100, 1.0, 3)
    with pytest.raises(ValueError):
        RadialField(g, -np.ones(g.nodes.size))
    with pytest.raises(ConfigurationError):
        RadialField(g, np.ones(3))


def test_barenblatt_l1_distance_integrable():
    # 4 pi int r^2 (B~_1 - B~_2) dr for N=3, m=0.2, from 30-digit quadrature
    p = derive_params(3, 0.2)
    g = make_grid(1e5, 3200, 1e-2, 3)
    d = l1_distance(RescaledBarenblatt(p, 1.0).field(g), RescaledBarenblatt(p, 2.0).field(g))
    assert d == pytest.approx(0.762030703999756647814, rel=1e-4)
    s = signed_difference_integral(RescaledBarenblatt(p, 1.0).field(g), RescaledBarenblatt(p, 2.0).field(g))
    assert s == pytest.approx(d, rel=1e-12)


def test_barenblatt_distances_nonintegrable():
    p = derive_params(6, 0.4)
    g = make_grid(100.0, 800, 1e-2, 6)
    b1, b2 = RescaledBarenblatt(p, 1.0).field(g), RescaledBarenblatt(p, 2.0).field(g)
    assert math.isinf(l1_distance(b1, b2))
    # the weight exactly compensates up to a 1/r integrand: logarithmic divergence
    assert math.isinf(weighted_l1_distance(b1, b2, p, 0.5))
    assert sup_distance(b1, b2) == pytest.approx(b1.values[0] - b2.values[0])


def test_newtonian_potential_of_gaussian():
    # Z = sqrt(pi) erf(r) / (4 r) solves -Laplacian Z = exp(-r^2) in R^3
    g = make_grid(30.0, 3200, 5.0, 3)
    f = field_from_function(g, lambda r: np.exp(-r * r))
    Z = newtonian_potential(f)
    r = g.nodes[1:]
    np.testing.assert_allclose(Z.values[1:], math.sqrt(math.pi) * erf(r) / (4 * r), rtol=2e-5)


def test_fit_tail_exponent():
    g = make_grid(1e3, 800, 5.0, 3)
    f = field_from_function(g, lambda r: 3.0 * (1 + r * r) ** -1.25)
    assert fit_tail_exponent(f, 100.0) == pytest.approx(2.5, rel=1e-4)


def test_interpolation_hits_nodes_and_tail():
    g = make_grid(100.0, 400, 5.0, 3)
    f = field_from_function(g, lambda r: (1 + r * r) ** -1.0, PowerTail(2.0, 1.0, 1.0))
    np.testing.assert_allclose(interpolate(f, g.nodes), f.values, rtol=1e-14)
    assert interpolate(f, 200.0) == pytest.approx(1 / (1 + 200.0**2))
    assert interpolate(f, 2.55) == pytest.approx(1 / (1 + 2.55**2), rel=1e-5)


def test_csv_round_trip(tmp_path):
    g = make_grid(100.0, 200, 5.0, 4)
    f = field_from_function(g, lambda r: (2 + r * r) ** -1.5, PowerTail(3.0, 1.0, 2.0), {"k": 2.0})
    path = tmp_path / "f.csv"
    field_to_csv(f, str(path))
    h = field_from_csv(str(path))
    np.testing.assert_array_equal(h.values, f.values)
    np.testing.assert_array_equal(h.r, f.r)
    assert h.tail == f.tail and h.N == 4
