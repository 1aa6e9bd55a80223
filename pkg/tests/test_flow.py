import math

import numpy as np
import pytest

from gradflow.energy import constant, cusp, quadratic
from gradflow.errors import InputError
from gradflow.flow import (PIECEWISE_CONSTANT, Curve, curve_from_function, detect_t_star,
                           energy_identity_residual, integrate_flow, metric_dinf, metric_dinf_bounds,
                           metric_dT, set_distance)


def test_quadratic_flow_matches_exponential():
    res = integrate_flow(quadratic(), 1.0, 1.0)
    assert res.curve(1.0)[0] == pytest.approx(math.exp(-1.0), abs=1e-8)
    t = np.linspace(0, 1, 37)
    assert np.max(np.abs(res.curve(t)[:, 0] - np.exp(-t))) < 1e-8


def test_constant_energy_rests():
    res = integrate_flow(constant(), 0.7, 2.0)
    assert np.all(res.curve.values == 0.7)
    assert res.t_star == 0.0


def test_cusp_reaches_zero_and_stays():
    res = integrate_flow(cusp(), 1.0, 2.0)
    assert res.curve(0.5)[0] == pytest.approx(0.25, abs=1e-6)
    assert res.curve(2.0)[0] == pytest.approx(0.0, abs=1e-6)


def test_energy_identity_residual_cases():
    q = quadratic()
    exact = integrate_flow(q, 1.0, 2.0).curve
    assert energy_identity_residual(q, exact) <= 1e-6
    flat = curve_from_function(lambda t: 0 * t, 1.0, 0.01)
    assert energy_identity_residual(q, flat) == 0.0
    line = curve_from_function(lambda t: 1 - t, 1.0, 1e-3, deriv=lambda t: -np.ones_like(t))
    assert energy_identity_residual(q, line) == pytest.approx(1 / 6, abs=1e-6)


def test_detect_t_star_cases():
    assert detect_t_star(curve_from_function(lambda t: 0 * t + 3, 1.0, 0.1)) == 0.0
    u = curve_from_function(lambda t: np.maximum(1 - t, 0) ** 2, 2.0, 1e-3)
    assert abs(detect_t_star(u) - 1.0) <= 1e-3 + 1e-12
    e = curve_from_function(lambda t: np.exp(-t), 5.0, 1e-3)
    assert math.isinf(detect_t_star(e, 1e-3))


def test_metric_examples():
    u = curve_from_function(lambda t: np.sin(t), 3.0, 0.01)
    assert metric_dT(u, u, 3.0) == 0.0
    a = curve_from_function(lambda t: 0 * t, 3.0, 0.1)
    b = curve_from_function(lambda t: 0 * t + 2, 3.0, 0.1)
    assert metric_dT(a, b, 3.0) == 1.0
    assert metric_dinf(a, b) == 1.0
    c = curve_from_function(lambda t: 0 * t + 0.5, 3.0, 0.1)
    assert metric_dT(a, c, 3.0) == 0.5
    assert metric_dinf(a, c) == 0.5
    lo, hi = metric_dinf_bounds(a, c)
    assert lo == 0.5 and hi >= lo


def test_set_distance_conventions():
    v = curve_from_function(lambda t: t, 1.0, 0.01)
    w = curve_from_function(lambda t: t + 0.3, 1.0, 0.01)
    assert set_distance(v, [v], 1.0) == 0.0
    assert math.isinf(set_distance(v, []))
    assert set_distance(v, [v, w], 1.0) == pytest.approx(0.3)


def test_piecewise_constant_right_limits():
    U = Curve([0.0, 1.0], [[0.0], [1.0]], PIECEWISE_CONSTANT)
    zero = Curve([0.0, 1.0], [[0.0], [0.0]], PIECEWISE_CONSTANT)
    assert U(0.5)[0] == 1.0
    assert U(0.0)[0] == 0.0
    # the jump at 0 is seen through the right limit
    assert metric_dT(U, zero, 1.0) == 1.0


def test_curve_validation():
    with pytest.raises(InputError):
        Curve([0.1, 1.0], [0, 1])
    with pytest.raises(InputError):
        Curve([0.0, 0.0], [0, 1])
    with pytest.raises(InputError):
        Curve([0.0, 1.0], [0, np.nan])
    with pytest.raises(InputError):
        metric_dT(Curve([0.0, 1.0], [0, 1]), Curve([0.0, 2.0], [0, 1]), 1.5)
