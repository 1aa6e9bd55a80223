import math

import numpy as np
import pytest

from gradflow.energy import ModulusEstimate, PointCloud, constant, cusp, quadratic
from gradflow.errors import InfeasibleError, InputError
from gradflow.flow import curve_from_function
from gradflow.penalize import (EpsSchedule, build_phi_tau_family, energy_domination_excess,
                               estimate_tau_cloud, find_horizon, make_penalized, sample_range,
                               select_lambda, select_tau_bar, verify_confinement)


def modulus(fn):
    return ModulusEstimate.from_function(fn)


def test_select_lambda_examples():
    # lam^2 > 14 * 3e-4 = 4.2e-3, sqrt = 0.064807 -> next lattice point 0.0649
    assert select_lambda(1.0, modulus(lambda r: r), 1e-4, 0.0) == pytest.approx(0.0649)
    assert select_lambda(1.0, modulus(lambda r: 0 * r), 1e-4, 0.0) == pytest.approx(1e-4)
    with pytest.raises(InfeasibleError):
        select_lambda(1.0, modulus(lambda r: np.minimum(1, 2 * np.sqrt(r))), 0.01, 0.05)
    with pytest.raises(InputError):
        select_lambda(0.5, modulus(lambda r: r), 1e-4, 0.0)
    with pytest.raises(InputError):
        select_lambda(1.0, modulus(lambda r: r), 1e-4, 0.3)


def test_select_tau_bar_examples():
    assert select_tau_bar(1.0, modulus(lambda r: r), 0.1) == 2.0 ** -14
    assert select_tau_bar(1.0, modulus(lambda r: 0 * r), 0.1) == 0.5
    assert select_tau_bar(1.0, modulus(lambda r: 0 * r), 0.1, tau_cloud=0.2) == 0.125
    assert select_tau_bar(1.0, modulus(lambda r: np.minimum(1, 2 * np.sqrt(r))), 0.2) == 2.0 ** -23
    with pytest.raises(InputError):
        select_tau_bar(1.0, modulus(lambda r: r), 0.3)


def tau_cloud_oracle(field, cloud, tau, ys):
    """Every near-minimizer y of the penalized step from x must keep |grad| within 1/2."""
    for x in cloud.points[:, 0]:
        lhs = field.eval(ys[:, None]) + (x - ys) ** 2 / (2 * tau)
        rhs = field.eval(np.array([[x]]))[0] + np.abs(x - ys)
        sel = lhs <= rhs
        gap = np.abs(field.grad(ys[sel][:, None])[:, 0] - field.grad(np.array([[x]]))[0, 0])
        if gap.size and gap.max() > 0.5:
            return False
    return True


def test_tau_cloud_brute_force_quadratic():
    q = quadratic(tau_star=2.0)
    cloud = PointCloud(np.linspace(0, 1, 11))
    tU = estimate_tau_cloud(q, cloud)
    assert 0 < tU < 2.0
    assert tau_cloud_oracle(q, cloud, tU, np.linspace(-5, 6, 22001))


def test_tau_cloud_brute_force_cusp():
    c = cusp()
    cloud = PointCloud([0.0])
    tU = estimate_tau_cloud(c, cloud)
    assert tU == 2.0 ** -13
    assert tau_cloud_oracle(c, cloud, tU, np.linspace(-3, 3, 60001))


def test_penalized_values():
    q = quadratic()
    pen = make_penalized(q, PointCloud([1.0]), 0.05)
    assert pen.value(3.0) == pytest.approx(4.6)
    zero = make_penalized(constant(), PointCloud([0.0]), 0.1)
    assert np.allclose(zero.eval(np.array([[-2.0], [0.5]])), [0.2, 0.05])
    plain = make_penalized(q, PointCloud([0.0, 1.0]), 0.0)
    x = np.linspace(-2, 2, 9)[:, None]
    assert np.array_equal(plain.eval(x), q.eval(x))
    assert np.isnan(make_penalized(q, PointCloud([0.0, 1.0]), 0.1).grad(np.array([[0.5]]))).all()


def test_sample_range_examples():
    u = curve_from_function(lambda t: np.exp(-t), 2.0, 1e-3, deriv=lambda t: -np.exp(-t))
    cl = sample_range(u, 0.5, 1.0)
    assert np.allclose(np.sort(cl.points[:, 0]), np.sort(np.exp(-np.array([0.0, 0.5, 1.0]))))
    assert len(sample_range(u, 0.3, 1.0)) == 5
    flat = curve_from_function(lambda t: 0 * t + 2, 2.0, 0.1)
    assert len(sample_range(flat, 0.3, 1.0)) == 1
    with pytest.raises(InputError):
        sample_range(u, 0.3, 2.0)


def test_confinement_negative_control_quadratic():
    # prox from 1 is 1/(1+tau), which is not in the cloud {1} when lambda = 0
    rep = verify_confinement(quadratic(), PointCloud([1.0]), 0.0, 0.1, 1.0, 3, check_hypothesis=False)
    assert rep.escapes >= 1


def test_confinement_constant_flow():
    rep = verify_confinement(constant(), PointCloud([0.3]), 0.01, 0.1, 0.3, 5)
    assert rep.all_confined and rep.hypothesis_ok


def test_confinement_cusp_small_window():
    c = cusp()
    u = curve_from_function(lambda t: (1 - t) * np.abs(1 - t), 2.0, 1e-3, deriv=lambda t: -2 * np.abs(1 - t))
    tau = 2.0 ** -12
    cl = sample_range(u, tau, 0.25)
    rep = verify_confinement(c, cl, 0.08, tau, 1.0, len(cl) - 1)
    assert rep.all_confined
    assert rep.residual_upper_violations == 0 and rep.residual_lower_violations == 0
    assert rep.max_residual <= 0.08 + rep.slack + 1e-12
    assert energy_domination_excess(c, rep.run, u, 0.25) <= 1e-10


def test_find_horizon_quadratic_closed_form():
    q = quadratic()
    u = curve_from_function(lambda t: np.exp(-t), 10.0, 1e-4, deriv=lambda t: -np.exp(-t))
    for eps in (0.2, 0.1):
        assert find_horizon(q, u, eps, enforce_min=False) == pytest.approx(math.log(4 / eps), abs=1e-4)
        assert find_horizon(q, u, eps) >= 1 / eps - 1e-12


def test_schedule_validation():
    with pytest.raises(InputError):
        EpsSchedule([0.1, 0.2], [0.01, 0.005])
    with pytest.raises(InputError):
        EpsSchedule([0.2, 0.1], [0.01, 0.02])
    with pytest.raises(InputError):
        EpsSchedule([0.3], [0.01])
    with pytest.raises(InputError):
        EpsSchedule([0.2], [0.1], tau_bar=[0.05])


def test_family_bands_and_constant_curve():
    flat = curve_from_function(lambda t: 0 * t + 0.7, 30.0, 0.01)
    fam = build_phi_tau_family(quadratic(), flat, EpsSchedule([0.2, 0.1], [0.04, 0.02], [5.0, 10.0]))
    assert fam.band(0.04) == 0 and fam.band(0.03) == 0 and fam.band(0.02) == 1 and fam.band(1e-5) == 1
    with pytest.raises(InputError):
        fam.band(0.05)
    pen = fam(0.01)
    assert len(pen.cloud) == 1 and pen.lam == 0.1
    assert fam.table()[0][:3] == (0.02, 0.04, 0.2)
