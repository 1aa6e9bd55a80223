"""Scenario configurations and the pipelines behind ``gradflow run``.

Every pipeline returns a :class:`Outcome`: named CSV tables, a list of
checks (each named after the claim it instantiates) and a JSON summary.
Independent cells of a pipeline (steps ``tau`` of a ladder, scales ``eps``)
may run on a thread pool; results are merged in input order, so outputs do
not depend on the number of threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .cantor import DEFAULT_H, build_cantor_model, cantor_flows, demonstrate_nonminimality
from .energy import EnergyField, PointCloud, catalog_names, circle_valley, cusp, cusp_plane, get_energy
from .errors import InputError
from .flow import Curve, integrate_flow, metric_dT
from .mm import (ProxConfig, convergence_study, descent_violation, euler_residuals, fit_order,
                 interpolate_pc, n_steps, run_mm)
from .onedim import arclength, decompose_derivative, lift, pseudo_inverse, rectify, smooth_energy
from .penalize import (EpsSchedule, build_phi_tau_family, cloud_lipschitz, cloud_modulus,
                       energy_domination_excess, estimate_tau_cloud, sample_range, select_lambda,
                       select_tau_bar, verify_confinement)
from .reparam import (construct_time_change, defect_rows, minimal_cusp, minimality_defect, minimalize,
                      paused_cusp)

SCENARIOS = ("mm-convergence", "confinement", "strong-approx", "minimalize", "onedim-smoothing", "cantor")
ALL_SCENARIOS = SCENARIOS + ("custom",)

_KEYS = {"scenario", "energy", "u0", "taus", "T", "eps", "sigmas", "T_list", "seed", "solver",
         "output", "depth", "dwell", "delta", "window", "control_steps", "h", "dt"}
_SOLVER_KEYS = {"policy", "r_search", "grid_factor", "tie_rel", "merge_tol", "n_seeds", "grad_tol",
                "max_branches"}


@dataclass
class ScenarioConfig:
    """Resolved configuration of one run; unset fields take scenario defaults."""

    scenario: str
    energy: Any = None
    u0: Any = None
    taus: Optional[list] = None
    T: Optional[float] = None
    eps: Optional[list] = None
    sigmas: Optional[list] = None
    T_list: Optional[list] = None
    seed: int = 0
    solver: dict = dc_field(default_factory=dict)
    output: Optional[str] = None
    depth: int = 6
    dwell: float = 0.5
    delta: float = 0.05
    window: float = 0.25
    control_steps: int = 200
    h: float = DEFAULT_H
    dt: float = 1e-3

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise InputError("config must be a JSON object")
        unknown = set(d) - _KEYS
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" not in d:
            raise InputError("config needs a 'scenario'")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.scenario not in ALL_SCENARIOS:
            raise InputError(f"unknown scenario {self.scenario!r}; choose from {list(ALL_SCENARIOS)}")
        if self.energy is not None:
            get_energy(self.energy)
        elif self.scenario == "custom":
            raise InputError("scenario 'custom' needs an energy")
        if self.taus is not None:
            t = np.asarray(self.taus, dtype=float)
            if t.size == 0:
                raise InputError("taus must not be empty")
            if np.any(~np.isfinite(t)) or np.any(t <= 0) or np.any(np.diff(t) >= 0):
                raise InputError("taus must be positive and strictly decreasing")
        if self.scenario == "custom" and (self.taus is None or self.u0 is None or self.T is None):
            raise InputError("scenario 'custom' needs taus, u0 and T")
        if self.T is not None and not self.T > 0:
            raise InputError("T must be positive")
        bad = set(self.solver) - _SOLVER_KEYS
        if bad:
            raise InputError(f"unknown solver keys: {sorted(bad)}")
        if not 1 <= int(self.depth) <= 14:
            raise InputError("depth must lie in [1, 14]")

    def prox_config(self, **defaults) -> ProxConfig:
        kw = {k: v for k, v in self.solver.items() if k != "policy"}
        return ProxConfig(**{**defaults, **kw})

    @property
    def policy(self) -> str:
        return self.solver.get("policy", "all-branches")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Check:
    name: str
    passed: bool
    value: Any = None
    bound: Any = None
    detail: str = ""


@dataclass
class Outcome:
    tables: dict = dc_field(default_factory=dict)
    checks: list = dc_field(default_factory=list)
    summary: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _energy(cfg: ScenarioConfig, default) -> EnergyField:
    return get_energy(cfg.energy) if cfg.energy is not None else get_energy(default)


def _reference(field: EnergyField, u0, horizon: float, dt: float) -> Curve:
    """Minimal solution from ``u0``: closed form for the cusp, the reference solver otherwise."""
    if field.label == "cusp" and field.dim == 1:
        return minimal_cusp(horizon, dt, float(np.ravel(u0)[0]))
    return integrate_flow(field, u0, horizon, max_dt=dt).curve


def _residual_law(field, branches, ell: float) -> tuple[int, float]:
    """Violations of ``|xi_n| <= ell + slack`` and the largest ``|xi_n|``."""
    bad, worst = 0, 0.0
    for seq in branches:
        xi = euler_residuals(field, seq)
        if xi.size:
            worst = max(worst, float(xi.max()))
            bad += int(np.sum(xi > ell + seq.slack + 1e-12 * (1 + ell)))
    return bad, worst


# ---------------------------------------------------------------------------
# pipelines


def _mm_study(cfg: ScenarioConfig, threads: int, field: EnergyField, u0, taus, T) -> tuple:
    ref = _reference(field, u0, T, min(1e-3, T / 100))
    pc = cfg.prox_config()

    def one(tau):
        return convergence_study(field, u0, [tau], T, ref, cfg.policy, pc)

    parts = _pmap(one, list(taus), threads)
    rows, D, bad, worst, desc, trunc = [], [], 0, 0.0, -math.inf, False
    paths = []
    for tau, tab in zip(taus, parts):
        rows += tab.csv_rows()
        D.append(tab.D_by_tau()[float(tau)])
        br = tab.branches[float(tau)]
        b, w = _residual_law(field, br, 0.0)
        bad, worst = bad + b, max(worst, w)
        desc = max(desc, max(descent_violation(field, s) for s in br))
        trunc |= tab.truncated[float(tau)]
        for s in br:
            for n, x in enumerate(s.values):
                paths.append((float(tau), s.branch_id, n, n * float(tau), *np.ravel(x)))
    return rows, D, bad, worst, desc, trunc, paths


def run_mm_convergence(cfg: ScenarioConfig, threads: int = 1) -> Outcome:
    field = _energy(cfg, "quadratic")
    u0 = 1.0 if cfg.u0 is None else cfg.u0
    taus = cfg.taus or [0.1, 0.05, 0.025, 0.0125]
    T = cfg.T or 1.0
    rows, D, bad, worst, desc, trunc, paths = _mm_study(cfg, threads, field, u0, taus, T)
    order = fit_order(taus, D)
    g0 = float(np.linalg.norm(field.gradient(np.atleast_1d(np.asarray(u0, dtype=float)))))
    scale = max(1.0, g0)
    gap_ok = all(d <= 1.5 * t * scale for t, d in zip(taus, D))
    dim = field.dim
    out = Outcome()
    out.tables["convergence"] = (["tau", "branch", "dT", "D"], rows)
    out.tables["iterates"] = (["tau", "branch", "n", "t"] + [f"x{i}" for i in range(dim)], paths)
    out.checks = [
        Check("mm-consistency-interpolation-gap", gap_ok, D, [1.5 * t * scale for t in taus],
              "D_T over all branches against the reference solution"),
        Check("mm-consistency-fitted-order", bool(order >= 0.9), order, 0.9, "log-log slope of D_T(tau)"),
        Check("residual-law", bad == 0, bad, 0, f"max |xi| = {worst:.3g}"),
        Check("discrete-energy-descent", desc <= 1e-10, desc, 1e-10, "phi(U^n) + |dU|^2/(2 tau) <= phi(U^n-1)"),
    ]
    out.summary = {"taus": list(taus), "D": D, "order": order, "truncated": trunc}
    return out


def run_custom(cfg: ScenarioConfig, threads: int = 1) -> Outcome:
    field = get_energy(cfg.energy)
    rows, D, bad, worst, desc, trunc, paths = _mm_study(cfg, threads, field, cfg.u0, cfg.taus, cfg.T)
    out = Outcome()
    out.tables["convergence"] = (["tau", "branch", "dT", "D"], rows)
    out.tables["iterates"] = (["tau", "branch", "n", "t"] + [f"x{i}" for i in range(field.dim)], paths)
    out.checks = [
        Check("residual-law", bad == 0, bad, 0, f"max |xi| = {worst:.3g}"),
        Check("discrete-energy-descent", desc <= 1e-10, desc, 1e-10),
    ]
    out.summary = {"taus": list(cfg.taus), "D": D, "truncated": trunc}
    return out


def run_confinement(cfg: ScenarioConfig, threads: int = 1) -> Outcome:
    field = _energy(cfg, "cusp")
    u0 = 1.0 if cfg.u0 is None else cfg.u0
    eps = (cfg.eps or [0.1])[0]
    Tw = cfg.window
    u = _reference(field, u0, Tw + 1.0, cfg.dt)
    K = PointCloud(u(np.linspace(0.0, Tw + 0.01, 20001)), field.dim)
    L = cloud_lipschitz(field, K)
    omega = cloud_modulus(field, K, max(4.0, 3 * L), 1e-4)
    tau_K = estimate_tau_cloud(field, K, omega) if field.tau_star is not None else math.inf
    tau_bar = select_tau_bar(L, omega, eps, tau_K)
    tau = cfg.taus[0] if cfg.taus else tau_bar
    if tau > tau_bar:
        raise InputError(f"tau={tau} exceeds tau_bar={tau_bar}")
    cloud = sample_range(u, tau, Tw)
    lam = select_lambda(L, omega, tau, cfg.delta)
    pc = cfg.prox_config(grid_factor=1e-3)
    N = len(cloud) - 1
    rep = verify_confinement(field, cloud, lam, tau, u0, N, cfg.delta, pc)
    excess = energy_domination_excess(field, rep.run, u, Tw)
    ctrl = verify_confinement(field, cloud, 0.0, tau, u0, min(cfg.control_steps, N), cfg.delta, pc,
                              check_hypothesis=False)
    out = Outcome()
    mem_rows = []
    for seq in rep.run:
        m = rep.membership[seq.branch_id]
        xi = np.concatenate([[np.nan], euler_residuals(field, seq)])
        for n, (x, inside, r) in enumerate(zip(seq.values, m, xi)):
            mem_rows.append((seq.branch_id, n, n * tau, *np.ravel(x), bool(inside), r))
    out.tables["iterates"] = (["branch", "n", "t"] + [f"x{i}" for i in range(field.dim)]
                              + ["in_cloud", "residual"], mem_rows)
    out.tables["hypothesis"] = (["i", "j", "residual"], [tuple(r) for r in rep.hypothesis])
    out.checks = [
        Check("lambda-confinement", rep.all_confined, rep.membership_fraction, 1.0,
              f"{rep.escapes} escapes over {len(rep.membership)} branches"),
        Check("lambda-selection-hypothesis", rep.hypothesis_ok, None, cfg.delta),
        Check("residual-law", rep.residual_upper_violations + rep.residual_lower_violations == 0,
              rep.residual_upper_violations + rep.residual_lower_violations, 0,
              f"max |xi| = {rep.max_residual:.6g}, lambda = {lam}"),
        Check("step-bound", rep.step_bound_violations == 0, rep.step_bound_violations, 0),
        Check("energy-domination", excess <= 1e-10, excess, 1e-10),
        Check("invariance-negative-control", ctrl.escapes >= 1, ctrl.escapes, 1,
              "lambda = 0 must leave the cloud"),
    ]
    out.summary = {"tau": tau, "tau_bar": tau_bar, "lambda": lam, "L": L, "n_cloud": len(cloud),
                   "confinement": rep.to_json(), "control_escapes": ctrl.escapes,
                   "domination_excess": excess}
    return out


def run_strong_approx(cfg: ScenarioConfig, threads: int = 1) -> Outcome:
    field = _energy(cfg, "cusp")
    u0 = 1.0 if cfg.u0 is None else cfg.u0
    eps = cfg.eps or [0.2, 0.1, 0.05]
    sig = cfg.sigmas or [0.04, 0.02, 0.01]
    T_list = cfg.T_list or [1.0 / e for e in eps]
    T = cfg.T or 2.0
    u = _reference(field, u0, max(T_list) + 5.0, cfg.dt)
    sched = EpsSchedule(eps, sig, T_list)
    fam = build_phi_tau_family(field, u, sched)
    for s in sig:
        fam(s)
    pc = cfg.prox_config()

    def one(tau):
        run = run_mm(fam, u0, tau, n_steps(tau, T), cfg.policy, pc, seed=cfg.seed)
        d = [metric_dT(u, interpolate_pc(b), T) for b in run]
        return run, d

    parts = _pmap(one, list(sig), threads)
    rows, D, bad, worst, escapes, it_rows = [], [], 0, 0.0, 0, []
    for tau, e, (run, d) in zip(sig, eps, parts):
        pen = fam(tau)
        for b, x in zip(run, d):
            rows.append((float(tau), float(e), b.branch_id, x))
            escapes += int((~pen.cloud.contains(b.values, 1e-9)).sum())
            for n, v in enumerate(b.values):
                it_rows.append((float(tau), b.branch_id, n, n * tau, *np.ravel(v)))
        D.append(max(d))
        bb, w = _residual_law(field, run, e)
        bad, worst = bad + bb, max(worst, w)
    out = Outcome()
    out.tables["ladder"] = (["tau", "eps", "branch", "dT"], rows)
    out.tables["family"] = (["tau_low", "tau_high", "eps", "lambda", "n_cloud", "T_bar"], fam.table())
    out.tables["iterates"] = (["tau", "branch", "n", "t"] + [f"x{i}" for i in range(field.dim)], it_rows)
    out.checks = [
        Check("strong-approximability", D[-1] <= 0.05, D[-1], 0.05, "D_T(u, all branches) at the smallest tau"),
        Check("strong-approximability-ladder", bool(np.all(np.diff(D) < 0)), D, None, "D_T decreasing"),
        Check("residual-law", bad == 0, bad, 0, f"max |xi| = {worst:.3g}"),
        Check("lambda-confinement", escapes == 0, escapes, 0, "iterates inside the sampled range"),
    ]
    out.summary = {"eps": eps, "sigmas": sig, "T_list": T_list, "T": T, "D": D}
    return out


def run_minimalize(cfg: ScenarioConfig, threads: int = 1) -> Outcome:
    field = _energy(cfg, "cusp")
    dwell = cfg.dwell
    H = cfg.T or 2.0
    p = paused_cusp(dwell, H, cfg.dt)
    v = minimal_cusp(H - dwell, cfg.dt)
    d_in = minimality_defect(field, p)
    w = minimalize(field, p)
    d_out = minimality_defect(field, w)
    T = min(w.horizon, v.horizon)
    dist = metric_dT(w, v, T)
    ww = minimalize(field, w)
    idem = metric_dT(ww, w, min(ww.horizon, w.horizon))
    tc = construct_time_change(field, p, w)
    out = Outcome()
    out.tables["defect"] = (["t", "grad_norm", "dwell"], defect_rows(field, p))
    out.tables["minimal"] = (["t", "x"], np.column_stack([w.times, w.scalar()]))
    out.tables["time_change"] = (["t", "z"], np.column_stack([tc.grid, tc.values]))
    out.checks = [
        Check("max-gf-defect-input", 0.45 <= d_in <= 0.55, d_in, [0.45, 0.55]),
        Check("max-gf-minimal-output", d_out <= 0.01, d_out, 0.01),
        Check("max-gf-unpaused-distance", dist <= 1e-3, dist, 1e-3),
        Check("max-gf-idempotence", idem <= 1e-6, idem, 1e-6),
        Check("max-gf-time-change", bool(tc.ok), tc.lipschitz_violation, 0.0, tc.reason),
    ]
    out.summary = {"dwell": dwell, "defect_input": d_in, "defect_output": d_out, "dT": dist,
                   "idempotence": idem, "horizon_out": w.horizon}
    return out


def _cusp_profile(x):
    return 2.0 * np.sqrt(np.abs(1.0 - np.asarray(x, dtype=float)))


def run_onedim_smoothing(cfg: ScenarioConfig, threads: int = 1) -> Outcome:
    c = cusp()
    eps = cfg.eps or [0.1, 0.05, 0.025]
    p = paused_cusp(cfg.dwell, cfg.T or 2.0, cfg.dt)
    s = arclength(c, p)
    dec = decompose_derivative(pseudo_inverse(s), _cusp_profile)

    def one(e):
        se = smooth_energy(dec, _cusp_profile, e)
        return se, metric_dT(se.u_eps, s, min(se.u_eps.horizon, s.horizon))

    parts = _pmap(one, list(eps), threads)
    sup = [se.sup_diff for se, _ in parts]
    bound = [se.bound for se, _ in parts]
    dts = [d for _, d in parts]
    off = max(se.off_support_mismatch for se, _ in parts)

    # mu = 0 round trip on a curved valley, and the one-atom straight line
    cv = circle_valley()
    fr = integrate_flow(cv, np.array([-0.9, 0.3]), 5.0, max_dt=1e-3).curve
    rc = rectify(cv, fr)
    rt = metric_dT(lift(rc, arclength(cv, fr)).curve, fr, 5.0)
    cp = cusp_plane()
    xy = np.column_stack([p.values[:, 0], np.zeros(len(p))])
    p2 = Curve(p.times, xy, slopes=np.column_stack([p.slopes[:, 0], np.zeros(len(p))]))
    rr = rectify(cp, minimalize(cp, p2))
    d2 = decompose_derivative(pseudo_inverse(arclength(cp, p2)), rr.f)
    se2 = smooth_energy(d2, rr.f, 0.05, dt=cfg.dt / 2)
    lres = lift(rr, se2.u_eps, se2.mollified).gradient_residual

    out = Outcome()
    out.tables["atoms"] = (["x", "weight"], dec.atoms)
    out.tables["ladder"] = (["eps", "sup_diff", "bound", "dT", "off_support_mismatch"],
                            [(e, a, b, d, se.off_support_mismatch) for e, a, b, d, (se, _)
                             in zip(eps, sup, bound, dts, parts)])
    for e, (se, _) in zip(eps, parts):
        out.tables[f"energy_eps{e:g}"] = (["x", "ac_density", "m_eps", "Eprime", "Eprime_eps"],
                                          se.csv_rows(dec))
    out.checks = [
        Check("one-dimensional-setting-sup-bound", all(a <= b for a, b in zip(sup, bound)), sup, bound),
        Check("one-dimensional-setting-ladder", bool(np.all(np.diff(sup) < 0)), sup, None),
        Check("one-dimensional-setting-convergence", bool(np.all(np.diff(dts) < 0)), dts, None),
        Check("one-dimensional-setting-off-support", off == 0.0, off, 0.0),
        Check("rectify-lift-roundtrip", rt <= 1e-4, rt, 1e-4, "mu = 0 on circle_valley"),
        Check("lift-gradient", lres <= 1e-3, lres, 1e-3, "one atom on a straight line, eps = 0.05"),
    ]
    out.summary = {"eps": eps, "sup_diff": sup, "bound": bound, "dT": dts, "atoms": dec.atoms,
                   "roundtrip_dT": rt, "lift_residual": lres}
    return out


def run_cantor(cfg: ScenarioConfig, threads: int = 1) -> Outcome:
    model = build_cantor_model(cfg.depth)
    fl = cantor_flows(model, h=cfg.h)
    rep = demonstrate_nonminimality(model, flows=fl)
    out = Outcome()
    for name, (hdr, rows) in fl.tables().items():
        out.tables[f"cantor_{name}"] = (hdr, rows)
    ck = rep.checks
    out.checks = [
        Check("cantor-flow-residual", ck["flow_residual_v"] and ck["flow_residual_w"],
              [rep.residual_v, rep.residual_w], rep.flow_tol),
        Check("cantor-minimal-v", ck["defect_v"], rep.defect_v, rep.defect_v_bound),
        Check("cantor-nonminimal-w", rep.defect_w >= 0.9 * rep.mu_mass, rep.defect_w, 0.9 * rep.mu_mass),
        Check("cantor-order-witness", ck["w_succ_v"], rep.eta_lipschitz_violation, 1e-9,
              "eta is increasing and 1-Lipschitz, w = v o eta"),
        Check("cantor-energy-drop", ck["energy_drop"], rep.drop_w, rep.drop_exact),
        Check("cantor-strict-decrease", ck["strict_decrease"], rep.stagnation, rep.defect_w,
              "strict drops where w moves; plateau time equals dwell"),
    ]
    out.summary = {"model": model.manifest(), "report": rep.to_dict()}
    return out


PIPELINES: dict[str, Callable[[ScenarioConfig, int], Outcome]] = {
    "mm-convergence": run_mm_convergence,
    "confinement": run_confinement,
    "strong-approx": run_strong_approx,
    "minimalize": run_minimalize,
    "onedim-smoothing": run_onedim_smoothing,
    "cantor": run_cantor,
    "custom": run_custom,
}

DESCRIPTIONS = {
    "mm-convergence": ("Discrete solutions of every branch against the exact flow over a tau ladder.",
                       ["energy", "u0", "taus", "T"]),
    "confinement": ("Distance-penalized scheme on the cusp: all iterates stay in the sampled range.",
                    ["energy", "u0", "eps", "delta", "window"]),
    "strong-approx": ("The phi_tau family forces every branch toward the chosen cusp solution.",
                      ["eps", "sigmas", "T_list", "T"]),
    "minimalize": ("Removing the dwell of a paused cusp solution recovers the minimal one.",
                   ["dwell", "T", "dt"]),
    "onedim-smoothing": ("Mollified singular measure of a paused solution, plus rectify and lift.",
                         ["eps", "dwell"]),
    "cantor": ("Flow whose velocity vanishes on a Cantor set: minimal v and non-minimal w.",
               ["depth", "h"]),
}


def run(cfg: ScenarioConfig, threads: int = 1) -> Outcome:
    return PIPELINES[cfg.scenario](cfg, max(1, int(threads)))


def catalog() -> list[dict]:
    return [{"name": k, "description": DESCRIPTIONS[k][0], "fields": DESCRIPTIONS[k][1]} for k in SCENARIOS]


__all__ = ["ScenarioConfig", "Check", "Outcome", "run", "catalog", "SCENARIOS", "catalog_names"]
