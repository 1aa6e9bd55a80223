import numpy as np
import pytest
from scipy.integrate import quad

from gradflow.energy import circle_valley, cusp, cusp_plane, quadratic
from gradflow.errors import InputError
from gradflow.flow import Curve, curve_from_function, flow_curve, integrate_flow, metric_dT
from gradflow.onedim import (DiscreteMeasure, arclength, decompose_derivative, kernel, kernel_max, lift,
                             mollify_measure, pseudo_inverse, rectify, smooth_energy)
from gradflow.reparam import minimal_cusp, minimalize, paused_cusp


def cusp_profile(x):
    return 2 * np.sqrt(np.abs(1 - np.asarray(x)))


def test_pseudo_inverse_examples():
    u = curve_from_function(lambda t: t, 1.0, 1e-3, deriv=lambda t: np.ones_like(t))
    tm = pseudo_inverse(u)
    assert np.max(np.abs(tm.t - tm.x)) < 1e-12
    s = curve_from_function(lambda t: 0.5 + 0.5 * np.sin(np.pi * (t - 0.5)), 1.0, 1e-3,
                            deriv=lambda t: 0.5 * np.pi * np.cos(np.pi * (t - 0.5)))
    tm = pseudo_inverse(s, np.linspace(0, 1, 501))
    assert np.max(np.abs(tm.t - (0.5 + np.arcsin(2 * tm.x - 1) / np.pi))) < 1e-7
    plateau = Curve([0.0, 1.0, 2.0, 3.0], [0.0, 0.5, 0.5, 1.0], slopes=[0.5, 0.0, 0.0, 0.5])
    assert pseudo_inverse(plateau, np.array([0.0, 0.5, 1.0]))(0.5) == pytest.approx(1.0, abs=1e-8)


def test_decomposition_single_atom_and_none():
    c = cusp()
    dec = decompose_derivative(pseudo_inverse(arclength(c, paused_cusp(0.5))), cusp_profile)
    assert dec.atoms.shape == (1, 2)
    assert dec.atoms[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert dec.atoms[0, 1] == pytest.approx(0.5, abs=1e-6)
    assert np.max(np.abs(dec.reconstruct() - pseudo_inverse(arclength(c, paused_cusp(0.5))).t)) < 1e-7
    none = decompose_derivative(pseudo_inverse(arclength(c, minimal_cusp())), cusp_profile)
    assert none.total_mass <= 1e-6


def test_kernel_mass_and_scaling():
    assert quad(kernel, 0, 1)[0] == pytest.approx(1.0, abs=1e-8)
    m = mollify_measure(DiscreteMeasure([0.0], [1.0]), 1.0)
    assert m.mass_between(-1.0, 2.0) == pytest.approx(1.0, abs=1e-8)
    m2 = mollify_measure(DiscreteMeasure([0.5], [2.0]), 0.1)
    assert m2.mass_between(0.5, 0.6) == pytest.approx(2.0, abs=1e-8)
    assert m2.mass_between(0.6, 5.0) == pytest.approx(0.0, abs=1e-12)
    s = np.linspace(0.5, 0.6, 20001)
    assert np.max(m2(s)) == pytest.approx(2 * kernel_max() / 0.1, rel=1e-4)
    zero = mollify_measure(DiscreteMeasure([], []), 0.1)
    assert np.all(zero(np.linspace(-1, 1, 11)) == 0)


def test_smoothing_without_mu_is_identity():
    c = cusp()
    v = minimal_cusp(0.9)
    s = arclength(c, v)
    dec = decompose_derivative(pseudo_inverse(s), cusp_profile)
    se = smooth_energy(dec, cusp_profile, 0.05)
    assert se.sup_diff == 0.0
    assert metric_dT(se.u_eps, s, min(se.u_eps.horizon, s.horizon)) <= 1e-6


def test_smoothing_ladder_on_paused_cusp():
    c = cusp()
    s = arclength(c, paused_cusp(0.5))
    dec = decompose_derivative(pseudo_inverse(s), cusp_profile)
    sup, dts = [], []
    for eps in (0.1, 0.05, 0.025):
        se = smooth_energy(dec, cusp_profile, eps)
        # 2 sup_{N_eps} f with f = 2 sqrt(|1 - x|) and N_eps = [1 - eps, 1 + eps]
        assert se.bound == pytest.approx(4 * np.sqrt(eps), rel=1e-3)
        assert se.sup_diff <= se.bound
        assert se.off_support_mismatch == 0.0
        sup.append(se.sup_diff)
        dts.append(metric_dT(se.u_eps, s, min(se.u_eps.horizon, s.horizon)))
    assert sup[0] > sup[1] > sup[2]
    assert dts[0] > dts[1] > dts[2]


def test_rectify_straight_line():
    q = quadratic(2)
    v = flow_curve(q, lambda t: np.stack([np.exp(-t), 0 * t], -1), 10.0, 1e-3)
    r = rectify(q, v)
    assert r.L_star == pytest.approx(1 - np.exp(-10), abs=1e-9)
    assert np.max(np.abs(r.y.values[:, 0] - (1 - r.s))) < 1e-9
    assert np.max(np.abs(r.Eprime - (1 - r.s))) < 1e-9
    assert r.speed_error < 1e-6


def test_rectify_scalar_and_circle():
    c = cusp()
    v = minimal_cusp(0.9)
    r = rectify(c, v)
    assert np.max(np.abs(r.Eprime - cusp_profile(r.s))) < 1e-6
    cv = circle_valley()
    fr = integrate_flow(cv, np.array([-0.9, 0.3]), 5.0, max_dt=1e-3).curve
    rc = rectify(cv, fr)
    assert rc.speed_error <= 1e-6
    with pytest.raises(InputError):
        rectify(c, paused_cusp(0.5))


def test_lift_roundtrip_without_mu():
    cv = circle_valley()
    fr = integrate_flow(cv, np.array([-0.9, 0.3]), 5.0, max_dt=1e-3).curve
    rc = rectify(cv, fr)
    lr = lift(rc, arclength(cv, fr))
    assert metric_dT(lr.curve, fr, 5.0) <= 1e-4
    c = cusp()
    v = minimal_cusp(0.9)
    r1 = rectify(c, v)
    sc = arclength(c, v)
    assert metric_dT(lift(r1, sc).curve, v, 0.9) <= 1e-6


def test_lift_one_atom_straight_line():
    cp = cusp_plane()
    p = paused_cusp(0.5)
    xy = np.column_stack([p.values[:, 0], np.zeros(len(p))])
    p2 = Curve(p.times, xy, slopes=np.column_stack([p.slopes[:, 0], np.zeros(len(p))]))
    rr = rectify(cp, minimalize(cp, p2))
    dec = decompose_derivative(pseudo_inverse(arclength(cp, p2)), rr.f)
    se = smooth_energy(dec, rr.f, 0.05, dt=5e-4)
    assert lift(rr, se.u_eps, se.mollified).gradient_residual <= 1e-3
