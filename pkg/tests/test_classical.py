import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specmono.classical import (
    MODEL,
    action_integral,
    circle_loop,
    classical_monodromy,
    closure_errors,
    compare_monodromies,
    continue_theta,
    period_lattice,
    radial_turning_points,
)
from specmono.errors import NotRegularValue, UndersampledLoop

ENCLOSING = ((0.0, 0.1), 0.3)
OFFSIDE = ((0.3, 0.2), 0.15)


def v_min(j):
    r0 = MODEL.well_minimum(abs(j))
    return float(MODEL.v_eff(r0, j))


regular = st.tuples(st.floats(0.02, 0.5), st.floats(0.02, 0.4), st.booleans()).map(
    lambda t: ((1 if t[2] else -1) * t[0], v_min(t[0]) + t[1]))


def test_poisson_bracket_vanishes():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(1000, 4))
    assert np.max(np.abs(MODEL.poisson_pq(z))) < 1e-12


def test_turning_points():
    rm, rp = radial_turning_points(0.1, 0.0)
    assert rm < MODEL.well_minimum(0.1) < rp
    assert abs(MODEL.v_eff(rm, 0.1)) < 1e-10 and abs(MODEL.v_eff(rp, 0.1)) < 1e-10
    assert radial_turning_points(-0.1, 0.0) == (rm, rp)
    with pytest.raises(NotRegularValue):
        radial_turning_points(0.1, v_min(0.1) - 1e-3)
    with pytest.raises(NotRegularValue):
        radial_turning_points(0.0, 0.1)


def test_theta_is_odd_and_action_even():
    a, b = period_lattice(0.2, 0.1), period_lattice(-0.2, 0.1)
    assert b.Theta == -a.Theta and b.T == a.T
    assert action_integral(-0.2, 0.1) == action_integral(0.2, 0.1)


def test_small_oscillation_limit():
    j = 0.3
    r0 = MODEL.well_minimum(j)
    curv = 3 * j * j / r0 ** 4 + 12 * r0 * r0 - 2
    lat = period_lattice(j, v_min(j) + 1e-7)
    assert abs(lat.T / (2 * math.pi / math.sqrt(curv)) - 1) < 1e-3


def test_closure():
    for err in closure_errors(0.1, 0.2):
        assert err < 1e-6


@settings(max_examples=8, deadline=None)
@given(regular)
def test_closure_property(je):
    for err in closure_errors(*je):
        assert err < 1e-6


def test_action_derivatives():
    j, e, s = 0.1, 0.2, 1e-4
    lat = period_lattice(j, e)
    d_e = (action_integral(j, e + s) - action_integral(j, e - s)) / (2 * s)
    d_j = (action_integral(j + s, e) - action_integral(j - s, e)) / (2 * s)
    assert abs(d_e / (lat.T / (2 * math.pi)) - 1) <= 1e-5
    assert abs(d_j / (-lat.Theta / (2 * math.pi)) - 1) <= 1e-5


@settings(max_examples=20, deadline=None)
@given(regular)
def test_action_derivative_property(je):
    j, e = je
    s = 1e-5
    lat = period_lattice(j, e)
    d_e = (action_integral(j, e + s) - action_integral(j, e - s)) / (2 * s)
    assert abs(d_e / (lat.T / (2 * math.pi)) - 1) <= 1e-5


def test_action_increasing_in_e():
    es = np.linspace(v_min(0.2) + 0.01, 0.5, 30)
    values = [action_integral(0.2, e) for e in es]
    assert np.all(np.diff(values) > 0)


def test_enclosing_loop_winds_once():
    res = continue_theta(circle_loop(*ENCLOSING, 200))
    assert abs(res.theta_change - 2 * math.pi) < 1e-3
    assert res.winding == 1
    assert np.array_equal(res.matrix, [[1, 0], [-1, 1]])
    assert compare_monodromies(np.array([[1, 1], [0, 1]]), res.matrix).equal


def test_reversed_loop_inverts():
    fwd = classical_monodromy(circle_loop(*ENCLOSING, 200))
    back = classical_monodromy(circle_loop(*ENCLOSING, 200)[::-1])
    assert np.array_equal(fwd @ back, np.eye(2))


def test_offside_loop_is_trivial():
    assert np.array_equal(classical_monodromy(circle_loop(*OFFSIDE, 60)), np.eye(2))


@pytest.mark.parametrize("center,radius", [((0.0, 0.05), 0.2), ((0.05, 0.1), 0.25), ((-0.1, 0.0), 0.2)])
def test_winding_quantized(center, radius):
    res = continue_theta(circle_loop(center, radius, 300))
    assert abs(res.theta_change - 2 * math.pi * res.winding) < 1e-3
    assert res.winding == 1


def test_undersampled_loop():
    with pytest.raises(UndersampledLoop):
        continue_theta(circle_loop(*ENCLOSING, 4))


def test_compare_monodromies():
    eye = np.eye(2, dtype=int)
    assert compare_monodromies(eye, eye).equal
    assert compare_monodromies(np.array([[1, 1], [0, 1]]), eye).equal is False
    m_cl = np.array([[1, 0], [1, 1]])
    assert compare_monodromies(np.array([[1, -1], [0, 1]]), m_cl).equal
