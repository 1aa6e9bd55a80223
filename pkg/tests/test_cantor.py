import math

import numpy as np
import pytest
from scipy.integrate import quad

from gradflow.cantor import (DEFAULT_H, AtomicClock, base_primitive, base_profile, base_solution,
                             base_solution_derivative, build_cantor_model, cantor_energy, cantor_flows,
                             demonstrate_nonminimality)
from gradflow.errors import InputError, ResolutionError


def brute_force_removed(depth):
    """Middle thirds by repeated splitting of closed cells."""
    cells, out = [(0.0, 1.0)], []
    for _ in range(depth):
        nxt = []
        for a, b in cells:
            l = (b - a) / 3
            out.append((a + l, a + 2 * l))
            nxt += [(a, a + l), (a + 2 * l, b)]
        cells = nxt
    return sorted(out), sorted(cells)


def test_depth_one_and_two():
    m1 = build_cantor_model(1)
    assert m1.intervals == [(1 / 3, 2 / 3)]
    assert m1.beta[0] == pytest.approx(3 ** -0.75)
    assert m1.B == pytest.approx(0.43869, abs=1e-5)
    m2 = build_cantor_model(2)
    assert len(m2.intervals) == 3
    assert np.allclose(m2.lengths, [1 / 3, 1 / 9, 1 / 9])
    assert m2.B == pytest.approx(3 ** -0.75 + 2 * 9 ** -0.75, abs=1e-12)


@pytest.mark.parametrize("depth", [1, 3, 5])
def test_intervals_match_brute_force(depth):
    m = build_cantor_model(depth)
    removed, cells = brute_force_removed(depth)
    assert np.allclose(sorted(m.intervals), removed, atol=1e-15)
    assert np.allclose(m.cells, cells, atol=1e-15)
    assert len(m.intervals) == 2 ** depth - 1
    # tail = sum over the discarded stages of 2^(k-1) 3^(-3k/4)
    tail = sum(2.0 ** (k - 1) * 3.0 ** (-0.75 * k) for k in range(depth + 1, 400))
    assert m.tail == pytest.approx(tail, rel=1e-12)
    assert m.v_horizon == pytest.approx(m.B + m.tail, rel=1e-12)
    assert m.mu_mass == pytest.approx(1.0)


def test_alpha_is_quarter_power_and_decreasing():
    m = build_cantor_model(5)
    assert np.allclose(m.alpha, 3.0 ** (-m.stages / 4))
    per_stage = [m.alpha[m.stages == k][0] for k in range(1, 6)]
    assert all(a > b for a, b in zip(per_stage, per_stage[1:]))


def test_depth_bounds():
    with pytest.raises(InputError):
        build_cantor_model(0)
    with pytest.raises(InputError):
        build_cantor_model(15)


def test_base_functions():
    assert base_solution(0.0) == 0.0 and base_solution(1.0) == 1.0
    assert base_solution(0.5) == pytest.approx(0.5)
    assert base_solution(-1.0) == 0.0 and base_solution(3.0) == 1.0
    assert base_profile(0.5) == pytest.approx(math.pi / 2)
    assert base_profile(-0.1) == 0.0 and base_profile(1.0) == 0.0
    t = np.arange(0, 1 + 1e-12, 1e-4)
    assert np.max(np.abs(base_solution_derivative(t[1:-1]) - base_profile(base_solution(t[1:-1])))) <= 1e-8
    assert base_primitive(1.0) == pytest.approx(math.pi ** 2 / 8)
    assert base_primitive(0.3) == pytest.approx(quad(base_profile, 0, 0.3)[0], abs=1e-10)


def test_g_and_G():
    m = build_cantor_model(3)
    fl = cantor_flows(m)
    g = fl.g
    assert np.all(g(m.knots_x) == 0.0)
    assert np.all(g(np.array([-1.0, 1.5])) == 0.0)
    assert np.all(g(0.5 * (m.knots_x[1:] + m.knots_x[:-1])) > 0)
    total = sum(quad(g, a, b)[0] for a, b in zip(m.knots_x[:-1], m.knots_x[1:]))
    assert g.total == pytest.approx(total, abs=1e-10)
    assert g.primitive(0.5) == pytest.approx(sum(quad(g, a, min(b, 0.5))[0]
                                                 for a, b in zip(m.knots_x[:-1], m.knots_x[1:]) if a < 0.5),
                                             abs=1e-10)
    # every removed interval of stage k contributes at most pi/2 * alpha_k
    assert g.values.max() <= 0.5 * math.pi * max(m.alpha.max(), m.g_tail_bound) + 1e-12
    field = cantor_energy(m)
    x = np.linspace(0, 1, 17)[:, None]
    assert np.allclose(field.grad(x)[:, 0], -g(x[:, 0]))


def test_flow_clock_matches_quadrature():
    m = build_cantor_model(2)
    field = cantor_energy(m)
    g = cantor_flows(m).g
    a, b = m.intervals[0]
    lo, hi = a + 0.1 * (b - a), a + 0.8 * (b - a)
    ref = quad(lambda x: 1 / g(x), lo, hi)[0]
    assert field.flow_time(np.array(hi)) - field.flow_time(np.array(lo)) == pytest.approx(ref, rel=1e-8)


def test_maps_and_curves():
    m = build_cantor_model(4)
    g, R, S, v, psi, eta, w = cantor_flows(m)
    x = np.linspace(0, 1, 1001)
    assert np.max(np.abs(S(R(x)) - x)) <= 1e-12
    assert np.all(np.diff(R(m.knots_x)) > 0)
    assert v(0.0)[0] == 0.0 and v(m.v_horizon)[0] == pytest.approx(1.0, abs=1e-15)
    assert np.all(np.diff(v.scalar()) >= 0)
    assert w.horizon == pytest.approx(m.horizon)
    s = np.linspace(0, w.horizon, 4001)
    assert np.max(np.abs(w(s)[:, 0] - v(eta(s))[:, 0])) <= 1e-12
    # psi against a direct sum of atoms strictly before t
    t = np.linspace(0, m.v_horizon, 301)
    ref = t + np.array([m.mu_atoms[m.mu_atoms[:, 0] < ti, 1].sum() for ti in t])
    assert np.allclose(psi(t), ref, atol=1e-14)
    assert np.allclose(AtomicClock(np.array([1.0]), np.array([0.5]))([0.5, 1.0, 1.5]), [0.5, 1.0, 2.0])


def test_resolution_error():
    with pytest.raises(ResolutionError):
        cantor_flows(build_cantor_model(7))
    m = build_cantor_model(2)
    with pytest.raises(ResolutionError):
        cantor_flows(m, h=m.l_min / 8)
    assert cantor_flows(m, h=m.l_min / 16).h == m.l_min / 16
    assert DEFAULT_H <= build_cantor_model(6).l_min / 16


def test_flows_and_critical_measure():
    m = build_cantor_model(4)
    fl = cantor_flows(m)
    assert fl.residual_v <= 1e-4 and fl.residual_w <= 1e-4
    assert fl.crit_measure_v <= 0.05
    assert fl.crit_measure_w == pytest.approx(m.mu_mass, abs=0.05)
    tab = fl.tables()
    assert set(tab) == {"g", "v", "w", "psi", "energy_w"}
    assert np.all(np.diff(tab["energy_w"][1][:, 1]) <= 0)


def test_depth6_report():
    m = build_cantor_model(6)
    rep = demonstrate_nonminimality(m)
    assert rep.ok, rep.checks
    assert rep.defect_v <= 0.05
    assert rep.defect_w >= 0.9
    assert rep.drop_w == pytest.approx(rep.drop_exact, abs=1e-6)
    assert rep.drop_v == pytest.approx(rep.drop_exact, abs=1e-6)
    assert rep.strict_drops == rep.moving_cells
    assert rep.stagnation == pytest.approx(m.mu_mass, abs=1e-9)
    d = rep.to_dict()
    assert d["ok"] and d["checks"]["w_succ_v"]
