"""Minimizing movements: global proximal steps and branching discrete solutions.

One step of the scheme replaces ``x`` by any global minimizer of

    Phi(tau, x, V) = |V - x|^2 / (2 tau) + phi(V).

Because ``phi`` need not be convex the minimizer can be non-unique, and the
whole point of the scheme is to follow every global minimizer. In one
dimension :func:`prox_step` scans a fine grid of the search ball before
refining; in two or three dimensions it runs a seeded multi-start
quasi-Newton search. Ties within ``tie_tol`` are kept and :func:`run_mm`
forks on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .energy import EnergyField, as_points
from .errors import InputError, SearchRadiusError
from .flow import PIECEWISE_CONSTANT, Curve, metric_dT


@dataclass(frozen=True)
class ProxConfig:
    """Solver settings for :func:`prox_step` and :func:`run_mm`.

    ``r_search=None`` uses ``4 tau (|grad phi(x)| + 1)``. The 1-D grid has
    spacing ``grid_factor * r_search``.
    """

    r_search: Optional[float] = None
    grid_factor: float = 1e-4
    tie_rel: float = 1e-8
    merge_tol: float = 1e-9
    n_seeds: int = 32
    grad_tol: float = 1e-10
    max_branches: int = 64

    def tie_tol(self, best: float) -> float:
        return self.tie_rel * (1.0 + abs(best))


DEFAULT = ProxConfig()


@dataclass
class ProxResult:
    """Global minimizers of one proximal step.

    ``slack`` bounds the stationarity error of the returned points: it is
    the largest ``|(v - x)/tau + grad phi_tau(v)|`` over smooth minimizers
    and zero for minimizers sitting exactly on a penalty kink.
    """

    minimizers: np.ndarray
    best_value: float
    certified_gap: float
    slack: float = 0.0


def _phi_tau(field, x, tau):
    def Phi(v):
        d = v - x
        return np.sum(d * d, axis=-1) / (2.0 * tau) + field.eval(v)
    return Phi


def _cloud_of(field):
    return getattr(field, "cloud", None)


def _kink_admissible(field, x, tau, pts):
    """Cloud points whose subdifferential of ``Phi`` contains zero.

    Value comparisons cannot separate a cloud point from a smooth minimizer
    a few ulps away, so only points passing this test may win as kinks.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, field.dim)
    r = np.linalg.norm((pts - x) / tau + field.base.grad(pts), axis=-1)
    lam = float(getattr(field, "lam", 0.0))
    return r <= lam * (1 + 1e-9) + 1e-12 * (1 + np.abs(pts).max(axis=-1) / tau)


def prox_step(field, x, tau: float, cfg: ProxConfig = DEFAULT) -> ProxResult:
    """All global minimizers of ``|V - x|^2/(2 tau) + phi(V)`` in the search ball."""
    field.check_step(tau)
    x = as_points(x, field.dim).reshape(field.dim)
    g0 = field.grad(x)
    gnorm = float(np.linalg.norm(g0)) if np.all(np.isfinite(g0)) else float(
        np.linalg.norm(field.base.grad(x))) + float(getattr(field, "lam", 0.0))
    R = cfg.r_search if cfg.r_search is not None else 4.0 * tau * (gnorm + 1.0)
    if field.dim == 1:
        return _prox_1d(field, x, tau, R, cfg)
    return _prox_nd(field, x, tau, R, cfg)


def _stationarity(field, x, tau, v):
    g = field.grad(v)
    if not np.all(np.isfinite(g)):
        return math.nan
    return float(np.linalg.norm((v - x) / tau + g))


def _polish_1d(field, x, tau, v, lo, hi, Phi):
    """Newton iterations on the stationarity equation, kept inside ``[lo, hi]``."""
    best_v, best_f = v, float(Phi(np.array([v])))
    for _ in range(12):
        p = np.array([best_v])
        g = field.grad(p)[0]
        if not np.isfinite(g):
            break
        r = (best_v - x) / tau + g
        if abs(r) <= 1e-13 * (1.0 + abs(best_v) / tau):
            break
        e = 1e-7 * (1.0 + abs(best_v))
        gp = field.grad(np.array([best_v + e]))[0]
        gm = field.grad(np.array([best_v - e]))[0]
        if not (np.isfinite(gp) and np.isfinite(gm)):
            break
        d2 = 1.0 / tau + (gp - gm) / (2 * e)
        if d2 <= 0:
            break
        nv = best_v - r / d2
        if not lo <= nv <= hi:
            break
        nf = float(Phi(np.array([nv])))
        if nf > best_f + 1e-15 * (1.0 + abs(best_f)):
            break
        best_v, best_f = nv, nf
    return best_v, best_f


def _zoom_1d(Phi, lo, hi, v, fv, levels=3, m=64):
    """Refine a bracketed minimum by repeated uniform sampling around the best point."""
    for _ in range(levels):
        t = np.linspace(lo, hi, m + 1)
        f = Phi(t[:, None])
        k = int(np.argmin(f))
        if f[k] < fv:
            v, fv = float(t[k]), float(f[k])
        step = t[1] - t[0]
        lo, hi = max(lo, v - step), min(hi, v + step)
    return v, fv


def _prox_1d(field, x, tau, R, cfg):
    xs = float(x[0])
    n = max(16, int(math.ceil(2.0 / cfg.grid_factor)))
    grid = xs + np.linspace(-R, R, n + 1)
    h = grid[1] - grid[0]
    Phi = _phi_tau(field, x, tau)
    vals = Phi(grid[:, None])
    if not np.all(np.isfinite(vals)):
        raise InputError("energy is not finite on the search ball")
    i_best = int(np.argmin(vals))
    if i_best == 0 or i_best == n:
        raise SearchRadiusError(f"grid minimum on the boundary of the search ball (R={R:.3g})")

    # local Lipschitz estimate for the missed-minimum bound
    dv = np.abs(np.diff(vals)) / h
    lip = np.maximum(dv, np.concatenate([dv[1:], dv[-1:]]))
    lip = np.maximum(lip, np.concatenate([dv[:1], dv[:-1]]))
    lower = 0.5 * (vals[:-1] + vals[1:]) - 0.5 * h * lip

    interior = np.arange(1, n)
    is_min = (vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])
    cand_idx = interior[is_min]
    # drop local minima that cannot compete with the best grid value
    reach = vals[cand_idx] - h * np.maximum(lip[cand_idx - 1], lip[cand_idx])
    cand_idx = cand_idx[reach <= vals[i_best] + cfg.tie_tol(vals[i_best])]

    cands: list[tuple[float, float, bool, float]] = []  # (v, Phi, on_kink, slack)
    for i in cand_idx:
        lo, hi = grid[i - 1], grid[i + 1]
        v, fv = _zoom_1d(Phi, lo, hi, float(grid[i]), float(vals[i]))
        v, fv = _polish_1d(field, xs, tau, v, lo, hi, lambda p: Phi(p[:, None])[0])
        cands.append((v, fv, False, _stationarity(field, x, tau, np.array([v]))))

    cloud = _cloud_of(field)
    if cloud is not None:
        idx = cloud.within(x, R)
        if idx.size:
            pts = cloud.points[idx, 0]
            pts = pts[_kink_admissible(field, x, tau, pts[:, None])]
            pv = Phi(pts[:, None])
            for p, fp in zip(pts, pv):
                cands.append((float(p), float(fp), True, 0.0))
        # a refined point next to a cloud point that is at least as good is that cloud point
        free = [k for k, c in enumerate(cands) if not c[2]]
        if free:
            d, j = cloud.nearest(np.array([[cands[k][0]] for k in free]))
            d, j = np.atleast_1d(d), np.atleast_1d(j)
            near = cloud.points[j, 0]
            fp = Phi(near[:, None])
            ok = _kink_admissible(field, x, tau, near[:, None])
            for k, dk, p, f, a in zip(free, d, near, fp, ok):
                if a and dk <= h and f <= cands[k][1]:
                    cands[k] = (float(p), float(f), True, 0.0)

    best = min(c[1] for c in cands)
    tol = cfg.tie_tol(best)
    keep = sorted([c for c in cands if c[1] <= best + tol], key=lambda c: c[0])
    merged: list[tuple[float, float, bool, float]] = []
    for c in keep:
        if merged and abs(c[0] - merged[-1][0]) <= max(cfg.merge_tol, 0.0):
            prev = merged[-1]
            if (c[2] and not prev[2]) or (c[2] == prev[2] and c[1] < prev[1]):
                merged[-1] = c
        else:
            merged.append(c)
    if any(abs(c[0] - xs) >= R * (1 - 1e-9) for c in merged):
        raise SearchRadiusError(f"minimizer on the boundary of the search ball (R={R:.3g})")
    gap = max(0.0, best - float(lower.min()))
    slack = max([0.0] + [c[3] for c in merged if not c[2] and np.isfinite(c[3])])
    return ProxResult(np.array([[c[0]] for c in merged]), float(best), gap, slack)


def _prox_nd(field, x, tau, R, cfg):
    d = field.dim
    Phi = _phi_tau(field, x, tau)

    def fun(v):
        return float(Phi(v))

    def jac(v):
        g = (v - x) / tau + field.grad(v)
        return g if np.all(np.isfinite(g)) else None

    sampler = qmc.Sobol(d, scramble=True, seed=0)
    u = sampler.random(cfg.n_seeds)
    seeds = x + R * (2.0 * u - 1.0) / math.sqrt(d)
    seeds[0] = x
    cands = []
    for s in seeds:
        j = jac(s)
        if j is not None:
            res = minimize(fun, s, jac=lambda v: jac(v) if jac(v) is not None else np.zeros(d),
                           method="BFGS", options={"gtol": cfg.grad_tol, "maxiter": 500})
        else:
            res = minimize(fun, s, method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        v = np.asarray(res.x, dtype=float)
        cands.append((v, fun(v), False, _stationarity(field, x, tau, v)))
    cloud = _cloud_of(field)
    if cloud is not None:
        idx = cloud.within(x, R)
        pts = cloud.points[idx][_kink_admissible(field, x, tau, cloud.points[idx])] if idx.size else []
        for p in pts:
            cands.append((p.copy(), fun(p), True, 0.0))
        snapped = []
        for v, fv, kink, sl in cands:
            if not kink:
                dist, j = cloud.nearest(v)
                p = cloud.points[int(j)]
                if (float(dist) <= 1e-6 * (1.0 + R) and fun(p) <= fv
                        and _kink_admissible(field, x, tau, p)[0]):
                    v, fv, kink, sl = p.copy(), fun(p), True, 0.0
            snapped.append((v, fv, kink, sl))
        cands = snapped
    best = min(c[1] for c in cands)
    tol = cfg.tie_tol(best)
    keep = [c for c in cands if c[1] <= best + tol]
    keep.sort(key=lambda c: (not c[2], c[1]))
    merged = []
    for c in keep:
        if all(np.linalg.norm(c[0] - m[0]) > max(cfg.merge_tol, 1e-7) for m in merged):
            merged.append(c)
    merged.sort(key=lambda c: tuple(c[0]))
    if any(np.linalg.norm(c[0] - x) >= R * (1 - 1e-6) for c in merged):
        raise SearchRadiusError(f"minimizer on the boundary of the search ball (R={R:.3g})")
    slack = max([0.0] + [c[3] for c in merged if not c[2] and np.isfinite(c[3])])
    return ProxResult(np.array([c[0] for c in merged]), float(best), math.nan, slack)


# ---------------------------------------------------------------------------
# discrete solutions


@dataclass
class StepSequence:
    """One discrete minimizing sequence ``U^0, ..., U^N`` at step ``tau``."""

    tau: float
    values: np.ndarray
    branch_id: str = "b"
    slack: float = 0.0
    ell: float = 0.0

    @property
    def N(self) -> int:
        return self.values.shape[0] - 1

    def truncated(self, M: int) -> "StepSequence":
        return StepSequence(self.tau, self.values[: M + 1].copy(), self.branch_id, self.slack, self.ell)


@dataclass
class MMResult:
    """Enumerated branches (sorted by ``branch_id``) and the cap flag."""

    branches: list[StepSequence]
    truncated: bool = False

    def __iter__(self):
        return iter(self.branches)

    def __len__(self) -> int:
        return len(self.branches)

    def __getitem__(self, k):
        return self.branches[k]


FieldFamily = Union[EnergyField, Callable[[float], EnergyField], dict]


def resolve_field(fields: FieldFamily, tau: float):
    """Energy used at step ``tau``: a single field, a dict keyed by tau, or a callable."""
    if hasattr(fields, "eval") and hasattr(fields, "grad"):
        return fields
    if isinstance(fields, dict):
        for k, f in fields.items():
            if abs(k - tau) <= 1e-12 * max(1.0, abs(tau)):
                return f
        raise InputError(f"no energy registered for tau={tau}")
    return fields(tau)


def _branch_key(bid: str):
    if bid == "b":
        return ()
    return tuple(tuple(int(p) for p in part.split(":")) for part in bid.split(".")[1:])


def run_mm(fields: FieldFamily, u0, tau: float, N: int, policy: str = "all-branches",
           cfg: ProxConfig = DEFAULT, seed: Optional[int] = None) -> MMResult:
    """Iterate proximal steps from ``u0``.

    ``policy`` is ``"all-branches"`` (fork on every tie, up to
    ``cfg.max_branches`` branches), ``"first"`` (smallest minimizer) or
    ``"random"`` (uniform choice driven by ``seed``). Branch ids record the
    tie choices as ``b.<step>:<index>`` segments.
    """
    if N < 1:
        raise InputError("N must be at least 1")
    if policy not in ("all-branches", "first", "random"):
        raise InputError(f"unknown policy {policy!r}")
    field = resolve_field(fields, tau)
    x0 = as_points(u0, field.dim).reshape(field.dim).astype(float)
    rng = np.random.default_rng(seed)
    ell = float(getattr(field, "lam", 0.0))
    cache: dict[bytes, ProxResult] = {}

    def step(x):
        key = x.tobytes()
        if key not in cache:
            cache[key] = prox_step(field, x, tau, cfg)
        return cache[key]

    live = [("b", [x0], 0.0)]
    truncated = False
    for n in range(1, N + 1):
        nxt = []
        for bid, path, slack in live:
            res = step(path[-1])
            mins = res.minimizers
            if policy == "first" or len(mins) == 1:
                choices = [(0, mins[0])]
            elif policy == "random":
                k = int(rng.integers(len(mins)))
                choices = [(k, mins[k])]
            else:
                choices = list(enumerate(mins))
            for k, m in choices:
                nb = bid if len(mins) == 1 else f"{bid}.{n}:{k}"
                # extend in place unless the branch forks
                p = path if len(choices) == 1 else list(path)
                p.append(np.array(m, dtype=float))
                nxt.append((nb, p, max(slack, res.slack)))
        nxt.sort(key=lambda b: _branch_key(b[0]))
        if len(nxt) > cfg.max_branches:
            nxt = nxt[: cfg.max_branches]
            truncated = True
        live = nxt
    seqs = [StepSequence(tau, np.array(p), bid, s, ell) for bid, p, s in live]
    return MMResult(seqs, truncated)


def interpolate_pc(seq: StepSequence) -> Curve:
    """Piecewise-constant interpolant: ``U(t) = U^n`` on ``((n-1) tau, n tau]``."""
    times = seq.tau * np.arange(seq.N + 1)
    return Curve(times, seq.values, PIECEWISE_CONSTANT)


def euler_residuals(field, seq: StepSequence) -> np.ndarray:
    """``|xi_n|`` with ``xi_n = (U^n - U^{n-1})/tau + grad phi(U^n)``, ``n = 1..N``."""
    U = seq.values
    if len(U) < 2:
        return np.zeros(0)
    xi = (U[1:] - U[:-1]) / seq.tau + field.grad(U[1:])
    return np.linalg.norm(xi, axis=-1)


def euler_residual(field, seq: StepSequence) -> float:
    r = euler_residuals(field, seq)
    return float(r.max()) if r.size else 0.0


def descent_violation(field_tau, seq: StepSequence) -> float:
    """Largest excess in ``phi_tau(U^n) + |U^n - U^{n-1}|^2/(2 tau) <= phi_tau(U^{n-1})``."""
    U = seq.values
    if len(U) < 2:
        return 0.0
    e = field_tau.eval(U)
    inc = np.sum((U[1:] - U[:-1]) ** 2, axis=-1) / (2 * seq.tau)
    return float(np.max(e[1:] + inc - e[:-1]))


def n_steps(tau: float, T: float) -> int:
    """``min{n : n tau >= T}``."""
    n = int(math.ceil(T / tau))
    if (n - 1) * tau >= T * (1 - 1e-14):
        n -= 1
    return max(n, 1)


@dataclass
class ConvergenceTable:
    rows: list[tuple[float, str, float, float]] = dc_field(default_factory=list)
    order: float = math.nan
    truncated: dict = dc_field(default_factory=dict)
    branches: dict = dc_field(default_factory=dict)

    def D_by_tau(self) -> dict[float, float]:
        out: dict[float, float] = {}
        for tau, _, _, D in self.rows:
            out[tau] = D
        return out

    def csv_rows(self):
        return [(tau, bid, dT, D) for tau, bid, dT, D in self.rows]


def fit_order(taus: Sequence[float], D: Sequence[float]) -> float:
    taus = np.asarray(taus, dtype=float)
    D = np.asarray(D, dtype=float)
    ok = (D > 0) & np.isfinite(D)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(taus[ok]), np.log(D[ok]), 1)[0])


def convergence_study(fields: FieldFamily, u0, taus: Sequence[float], T: float, reference: Curve,
                      policy: str = "all-branches", cfg: ProxConfig = DEFAULT) -> ConvergenceTable:
    """Distances from every enumerated branch to ``reference`` over a tau ladder."""
    if reference.horizon < T * (1 - 1e-12):
        raise InputError("reference horizon shorter than T")
    table = ConvergenceTable()
    Ds = []
    for tau in taus:
        res = run_mm(fields, u0, tau, n_steps(tau, T), policy, cfg)
        dts = [metric_dT(interpolate_pc(s), reference, T) for s in res]
        D = max(dts)
        for s, d in zip(res, dts):
            table.rows.append((float(tau), s.branch_id, d, D))
        table.truncated[float(tau)] = res.truncated
        table.branches[float(tau)] = res.branches
        Ds.append(D)
    table.order = fit_order(taus, Ds)
    return table
