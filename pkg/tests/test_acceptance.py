"""Acceptance criteria. Each test prints one PASS/FAIL line and the run ends with a summary."""
import math
import time

import numpy as np
import pytest

from gradflow.cantor import build_cantor_model, cantor_flows, demonstrate_nonminimality
from gradflow.cli import run_scenario
from gradflow.energy import cusp, cusp_plane, multicusp, quadratic
from gradflow.errors import RangeError
from gradflow.flow import Curve, curve_from_function, metric_dinf_bounds, metric_dT, set_distance
from gradflow.mm import convergence_study
from gradflow.onedim import arclength, decompose_derivative, lift, pseudo_inverse, rectify, smooth_energy
from gradflow.reparam import (construct_time_change, minimal_cusp, minimality_defect, minimalize,
                              multicusp_solution, paused_cusp, splice_family)
from gradflow.scenarios import SCENARIOS, ScenarioConfig, run


def cusp_phi(x):
    return (4.0 / 3.0) * np.sign(x) * np.abs(x) ** 1.5


def cusp_u(t):
    return (1.0 - t) * np.abs(1.0 - t)


def cusp_profile(x):
    return 2.0 * np.sqrt(np.abs(1.0 - np.asarray(x)))


@pytest.fixture(scope="module")
def runs():
    """Every built-in scenario at its default configuration, with wall times."""
    out = {}
    for name in SCENARIOS:
        t0 = time.perf_counter()
        res = run(ScenarioConfig.from_dict({"scenario": name}))
        out[name] = (res, time.perf_counter() - t0)
    return out


def table(outcome, name):
    header, rows = outcome.tables[name]
    return header, rows


def test_criterion_01_mm_consistency(verdict):
    taus = [0.1, 0.05, 0.025, 0.0125]
    ref = curve_from_function(lambda t: np.exp(-t), 1.0, 1e-4, deriv=lambda t: -np.exp(-t))
    t0 = time.perf_counter()
    tab = convergence_study(quadratic(), 1.0, taus, 1.0, ref)
    wall = time.perf_counter() - t0
    D = tab.D_by_tau()
    # oracle iterates U^n = (1 + tau)^-n
    it_err = max(np.max(np.abs(r.values[:, 0] - (1 + tau) ** -np.arange(len(r.values))))
                 for tau, branches in tab.branches.items() for r in branches)
    gap_ok = all(D[tau] <= 0.5 * tau + tau for tau in taus)
    order = np.polyfit(np.log(taus), np.log([D[t] for t in taus]), 1)[0]
    ok = gap_ok and order >= 0.9 and it_err <= 1e-9 and wall < 5.0
    verdict(1, ok, f"D_T={[round(D[t], 5) for t in taus]} <= 1.5 tau, order={order:.3f}, "
                   f"iterate error={it_err:.1e}, {wall:.2f}s")


def test_criterion_02_residual_law(verdict, runs):
    bad = [n for n, (res, _) in runs.items()
           if any(c.name == "residual-law" and not c.passed for c in res.checks)]
    missing = [n for n, (res, _) in runs.items() if n in ("mm-convergence", "confinement", "strong-approx")
               and not any(c.name == "residual-law" for c in res.checks)]
    conf = runs["confinement"][0].summary["confinement"]
    # independent check of the unpenalized Euler residual on the quadratic iterates
    header, rows = table(runs["mm-convergence"][0], "iterates")
    arr = np.array([(r[0], r[2], r[4]) for r in rows], dtype=float)
    worst = 0.0
    for tau in np.unique(arr[:, 0]):
        x = arr[arr[:, 0] == tau][:, 2]
        worst = max(worst, float(np.max(np.abs((x[:-1] - x[1:]) / tau - x[1:]))))
    ok = (not bad and not missing and conf["residual_upper_violations"] == 0
          and conf["residual_lower_violations"] == 0 and worst <= 1e-8)
    verdict(2, ok, f"violating runs={bad}, confinement upper/lower="
                   f"{conf['residual_upper_violations']}/{conf['residual_lower_violations']}, "
                   f"quadratic max|xi|={worst:.1e}")


def test_criterion_03_confinement(verdict, runs):
    res, wall = runs["confinement"]
    s = res.summary
    conf = s["confinement"]
    in_all = all(b["in_cloud"] == b["steps"] for b in conf["branches"].values())
    lam = s["lambda"]
    on_lattice = abs(lam * 1e4 - round(lam * 1e4)) < 1e-9
    ok = (in_all and conf["escapes"] == 0 and s["control_escapes"] >= 1 and s["tau"] <= s["tau_bar"]
          and 0 < lam < 0.25 and on_lattice and wall < 30.0)
    verdict(3, ok, f"{len(conf['branches'])} branches fully confined, tau={s['tau']:.3g} <= "
                   f"tau_bar={s['tau_bar']:.3g}, lambda={lam}, control escapes={s['control_escapes']}, "
                   f"{wall:.1f}s")


def test_criterion_04_energy_domination(verdict, runs):
    res, _ = runs["confinement"]
    Tw = ScenarioConfig(scenario="confinement").window
    header, rows = table(res, "iterates")
    t = np.array([r[2] for r in rows], dtype=float)
    x = np.array([r[3] for r in rows], dtype=float)
    # U_tau equals U^n on ((n-1) tau, n tau], where phi(u) is smallest at n tau
    excess = float(np.max(cusp_phi(x) - cusp_phi(cusp_u(np.minimum(t, Tw)))))
    ok = excess <= 1e-10 and res.summary["domination_excess"] <= 1e-10
    verdict(4, ok, f"max phi(U) - phi(u) = {excess:.2e} over {len(t)} grid times")


def test_criterion_05_strong_approximability(verdict, runs):
    res, _ = runs["strong-approx"]
    D = res.summary["D"]
    ok = len(D) == 3 and D[-1] <= 0.05 and all(a > b for a, b in zip(D, D[1:]))
    verdict(5, ok, f"D_T ladder {[round(d, 4) for d in D]} at sigmas {res.summary['sigmas']}, T=2")


def test_criterion_06_minimalization(verdict):
    c = cusp()
    t0 = time.perf_counter()
    p = paused_cusp(0.5, 2.0)
    d_in = minimality_defect(c, p)
    w = minimalize(c, p)
    d_out = minimality_defect(c, w)
    tt = w.times
    dist = float(np.max(np.minimum(1.0, np.abs(w.values[:, 0] - cusp_u(tt)))))
    ww = minimalize(c, w)
    idem = metric_dT(ww, w, min(ww.horizon, w.horizon))
    wall = time.perf_counter() - t0
    ok = 0.45 <= d_in <= 0.55 and d_out <= 0.01 and dist <= 1e-3 and idem <= 1e-6 and wall < 5.0
    verdict(6, ok, f"defect in={d_in:.4f}, out={d_out:.1e}, d_T to (1-t)|1-t|={dist:.1e}, "
                   f"idempotence={idem:.1e}, {wall:.2f}s")


def related(field, u, v):
    """``u`` above ``v``; a range mismatch means no time change exists."""
    try:
        return construct_time_change(field, u, v).ok
    except RangeError:
        return False


def test_criterion_07_order_axioms(verdict):
    centers = [0.0, -0.5, -1.3]
    f = multicusp(centers)
    dt, H = 1e-3, 4.0
    rng = np.random.default_rng(7)
    base = multicusp_solution(centers, 1.0, H, dt)
    fam = splice_family(centers, 1.0, H, dt, np.random.default_rng(11), 20)
    fails = []
    for i, u in enumerate(fam):
        if not construct_time_change(f, u, u).is_identity():
            fails.append((i, "identity"))
        z = construct_time_change(f, u, base)
        if not z.ok or z.lipschitz_violation > 1e-9 or z.monotonicity_violation > 0:
            fails.append((i, "u above minimal"))
    for i in range(20):
        # nested pauses: u rests twice as long as v at every center, v rests where u does
        k = rng.integers(1, 150, size=3) * (rng.random(3) < 0.7)
        pu = {j: 2 * dt * int(k[j]) for j in range(3) if k[j]}
        pv = {j: dt * int(k[j]) for j in range(3) if k[j]}
        u = multicusp_solution(centers, 1.0, H, dt, pu)
        v = multicusp_solution(centers, 1.0, H, dt, pv)
        z_uv = construct_time_change(f, u, v)
        z_vb = construct_time_change(f, v, base)
        z_ub = construct_time_change(f, u, base)
        comp = z_vb.compose(z_uv)
        if not (z_uv.ok and z_vb.ok and z_ub.ok) or np.max(np.abs(comp.values - z_ub.values)) > 1e-6:
            fails.append((i, "composition"))
        # antisymmetry proxy: both directions only for equal curves
        twin = multicusp_solution(centers, 1.0, H, dt, dict(pu))
        if not (related(f, u, twin) and related(f, twin, u) and metric_dT(u, twin, H) == 0.0):
            fails.append((i, "antisymmetry equal"))
        if pu and related(f, v, u):
            fails.append((i, "antisymmetry distinct"))
    verdict(7, not fails, f"identity, composition and antisymmetry on 20 + 20 random splice curves; "
                          f"failures={fails}")


def test_criterion_08_onedim_smoothing(verdict):
    c = cusp()
    s = arclength(c, paused_cusp(0.5))
    dec = decompose_derivative(pseudo_inverse(s), cusp_profile)
    sup, dts, ok = [], [], True
    for eps in (0.1, 0.05, 0.025):
        se = smooth_energy(dec, cusp_profile, eps)
        ok &= se.sup_diff <= se.bound
        ok &= abs(se.bound - 4 * math.sqrt(eps)) <= 1e-3 * 4 * math.sqrt(eps)
        ok &= se.off_support_mismatch == 0.0
        sup.append(se.sup_diff)
        dts.append(metric_dT(se.u_eps, s, min(se.u_eps.horizon, s.horizon)))
    ok &= all(a > b for a, b in zip(sup, sup[1:])) and all(a > b for a, b in zip(dts, dts[1:]))
    verdict(8, bool(ok), f"sup|E'_eps - E'|={[round(x, 4) for x in sup]} <= 4 sqrt(eps), "
                         f"d_T={[round(x, 4) for x in dts]}, exact off the support")


def test_criterion_09_rectify_lift(verdict):
    c = cusp()
    v = minimal_cusp(0.9)
    round_trip = metric_dT(lift(rectify(c, v), arclength(c, v)).curve, v, 0.9)
    cp = cusp_plane()
    p = paused_cusp(0.5)
    p2 = Curve(p.times, np.column_stack([p.values[:, 0], np.zeros(len(p))]),
               slopes=np.column_stack([p.slopes[:, 0], np.zeros(len(p))]))
    rr = rectify(cp, minimalize(cp, p2))
    dec = decompose_derivative(pseudo_inverse(arclength(cp, p2)), rr.f)
    se = smooth_energy(dec, rr.f, 0.05, dt=5e-4)
    grad = lift(rr, se.u_eps, se.mollified).gradient_residual
    verdict(9, round_trip <= 1e-4 and grad <= 1e-3,
            f"mu=0 round trip d_T={round_trip:.1e}, one-atom lift gradient residual={grad:.2e}")


def test_criterion_10_cantor(verdict):
    t0 = time.perf_counter()
    m = build_cantor_model(6)
    fl = cantor_flows(m)
    rep = demonstrate_nonminimality(m, flows=fl)
    wall = time.perf_counter() - t0
    # independent G(1): each tile of length l crossed in time beta contributes (l^2 / beta) pi^2 / 8
    d = 6
    tail = sum(2.0 ** (k - 1) * 3.0 ** (-0.75 * k) for k in range(d + 1, 400))
    G1 = sum(2 ** (k - 1) * 3.0 ** (-2 * k) / 3.0 ** (-0.75 * k) for k in range(1, d + 1))
    G1 += 2 ** d * 3.0 ** (-2 * d) / (tail / 2 ** d)
    G1 *= math.pi ** 2 / 8
    ok = (rep.residual_v <= 1e-4 and rep.residual_w <= 1e-4 and rep.defect_v <= 0.05 and rep.defect_w >= 0.9
          and rep.checks["w_succ_v"] and abs(rep.drop_w - G1) <= 1e-6 and abs(rep.drop_v - G1) <= 1e-6
          and rep.checks["strict_decrease"] and wall < 60.0)
    verdict(10, ok, f"residuals {rep.residual_v:.1e}/{rep.residual_w:.1e}, defect v={rep.defect_v:.1e}, "
                    f"w={rep.defect_w:.4f}, eta Lipschitz excess={rep.eta_lipschitz_violation:.0e}, "
                    f"drop={rep.drop_w:.8f} vs {G1:.8f}, strict drops {rep.strict_drops}/{rep.moving_cells}, "
                    f"{wall:.2f}s")


def random_curve(rng, T):
    a = rng.normal(size=3)
    k = rng.uniform(0.2, 3.0, size=3)
    dt = rng.uniform(0.005, 0.05)
    return curve_from_function(lambda t: a[0] + a[1] * np.sin(k[0] * t) + a[2] * np.cos(k[1] * t + k[2]), T, dt)


def test_criterion_11_metric_laws(verdict):
    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(50):
        T = rng.uniform(0.5, 10.0)
        u, v = random_curve(rng, T), random_curve(rng, T)
        dT = metric_dT(u, v, T)
        lo, hi = metric_dinf_bounds(u, v)
        w = 1.0 / (1.0 + T)
        bad += not (w * dT <= lo + 1e-15 and lo <= dT and hi <= max(dT, w) + 1e-15)
        bad += not math.isinf(set_distance(u, []))
        bad += set_distance(u, [u], T) != 0.0
        bad += set_distance(u, [u, v], T) != dT
    verdict(11, bad == 0, f"sandwich and set-distance conventions on 50 random pairs, violations={bad}")


def test_criterion_12_determinism(verdict, tmp_path):
    same = {}
    for name, cfg, threads in [("mm", {"scenario": "mm-convergence", "seed": 5, "solver": {"policy": "random"}}, 4),
                               ("onedim", {"scenario": "onedim-smoothing"}, 3),
                               ("cantor", {"scenario": "cantor", "depth": 4}, 2)]:
        bodies = []
        for i, th in enumerate((1, 1, threads)):
            out = tmp_path / f"{name}{i}"
            run_scenario(ScenarioConfig.from_dict(cfg), out, th)
            bodies.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        same[name] = bool(bodies[0]) and bodies[0] == bodies[1] == bodies[2]
    verdict(12, all(same.values()), f"byte-identical CSVs across repeats and thread counts: {same}")
