"""Order structure on solutions: time changes, minimal solutions and their defect.

``u`` dominates ``v`` (``u > v``) when ``u = v o z`` for an increasing
1-Lipschitz ``z`` with ``z(0) = 0``. Solutions sharing a range differ only
by how long they dwell at critical points; the minimal one dwells on a null
set of times. ``minimalize`` removes the dwell time of a given solution and
``minimality_defect`` measures it.

Critical points are detected through the threshold ``|grad phi| <= crit_tol``
(default ``1e-7``), since exact zero sets are invisible in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._numerics import endpoint_quad
from .energy import EnergyField, PointCloud
from .errors import InputError, RangeError
from .flow import CONTINUOUS, Curve, detect_t_star, energy_identity_residual, metric_dinf, uniform_grid

CRIT_TOL = 1e-7
LIP_TOL = 1e-9


@dataclass
class TimeChange:
    """Samples ``z(t)`` of a time change on ``grid``.

    ``ok`` is true when ``u(t) = v(z(t))`` held within ``match_tol`` on the
    whole grid and ``z`` passed the invariants; otherwise ``reason`` and
    ``first_violation`` say what failed and where.
    """

    grid: np.ndarray
    values: np.ndarray
    ok: bool = True
    reason: str = ""
    first_violation: float = math.nan
    max_mismatch: float = 0.0

    def __call__(self, t):
        return np.interp(t, self.grid, self.values)

    @property
    def lipschitz_violation(self) -> float:
        """``max_t (D_t - min_{s <= t} D_s)`` with ``D = z - t``; zero for a 1-Lipschitz ``z``."""
        D = self.values - self.grid
        return float(np.max(D - np.minimum.accumulate(D)))

    @property
    def monotonicity_violation(self) -> float:
        d = np.diff(self.values)
        return float(max(0.0, -d.min())) if d.size else 0.0

    def invariant_failure(self, tol: float = LIP_TOL) -> Optional[tuple[str, float]]:
        """First failed invariant as ``(reason, time)``, or ``None``."""
        z, t = self.values, self.grid
        if abs(z[0]) > tol:
            return "z(0) != 0", float(t[0])
        d = np.diff(z)
        bad = np.nonzero(d < -tol)[0]
        if bad.size:
            return "z decreases", float(t[bad[0] + 1])
        D = z - t
        bad = np.nonzero(D - np.minimum.accumulate(D) > tol)[0]
        if bad.size:
            return "z is not 1-Lipschitz", float(t[bad[0]])
        return None

    def compose(self, inner: "TimeChange") -> "TimeChange":
        """``self o inner`` on the inner grid."""
        return TimeChange(inner.grid.copy(), self(inner.values), self.ok and inner.ok)

    def is_identity(self, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.values - self.grid)) <= tol)


def _energy(field: EnergyField, x) -> np.ndarray:
    return np.asarray(field.eval(x), dtype=float)


def _directed_gap(a: np.ndarray, b: np.ndarray) -> float:
    """``sup_{x in a} dist(x, b)`` for sample sets."""
    return float(PointCloud(b, b.shape[1]).dist(a).max())


def construct_time_change(field: EnergyField, u: Curve, v: Curve,
                          match_tol: float = 1e-6) -> TimeChange:
    """Time change ``z`` with ``u = v o z``, or a failed :class:`TimeChange`.

    ``z(t) = min{s : phi(v(s)) <= phi(u(t))}`` is found on the running
    minimum of ``v``'s energy trace. Exact energy matches give grid times;
    other crossings are refined by bisection on the interpolated ``v``.

    Raises
    ------
    RangeError
        If ``u`` leaves the sampled range of ``v`` (directed gap above the
        grid resolution) or needs energies ``v`` never reaches.
    """
    if u.dim != v.dim or u.dim != field.dim:
        raise InputError("dimension mismatch")
    steps = np.linalg.norm(np.diff(v.values, axis=0), axis=-1)
    res = max(match_tol, float(steps.max()) if steps.size else 0.0)
    gap = _directed_gap(u.values, v.values)
    if gap > res:
        raise RangeError(f"range of u is not inside the range of v (gap {gap:.3g})")

    ev = _energy(field, v.values)
    em = np.minimum.accumulate(ev)
    eu = _energy(field, u.values)
    etol = 1e-12 * (1.0 + np.abs(ev).max())
    if np.any(eu < em[-1] - etol):
        t_bad = float(u.times[np.argmax(eu < em[-1] - etol)])
        raise RangeError(f"u reaches energies below v's horizon (first at t={t_bad:.6g})")

    z_lo = _first_crossing(field, v, em, eu, side="left")
    z_hi = _first_crossing(field, v, em, eu, side="right")
    # fastest 1-Lipschitz clock inside [z_lo, z_hi]: it threads dwell intervals
    # of u through plateaus of v and leaves the most room for later times
    t = u.times
    z = np.empty_like(z_lo)
    z[0] = z_lo[0]
    for i in range(1, len(t)):
        z[i] = max(z_lo[i], min(z[i - 1] + (t[i] - t[i - 1]), z_hi[i]))
    tc = TimeChange(u.times.copy(), z)

    mism = np.linalg.norm(u.values - v(z), axis=-1)
    tc.max_mismatch = float(mism.max())
    bad = np.nonzero(mism > match_tol)[0]
    if bad.size:
        tc.ok, tc.reason, tc.first_violation = False, "u(t) != v(z(t))", float(u.times[bad[0]])
        return tc
    fail = tc.invariant_failure()
    if fail is not None:
        tc.ok, (tc.reason, tc.first_violation) = False, fail
    return tc


def _first_crossing(field, v: Curve, em, eu, side: str) -> np.ndarray:
    """Ends of ``{s : phi(v(s)) = e}`` on the running-minimum energy trace.

    ``side="left"`` gives ``min{s : phi(v(s)) <= e}`` and ``side="right"``
    gives ``sup{s : phi(v(s)) >= e}``; the two differ only on plateaus.
    Exact energy matches return grid times, other crossings are refined by
    bisection on the interpolated ``v``.
    """
    s = v.times
    n = len(em)
    if side == "left":
        k = np.minimum(np.searchsorted(-em, -eu, side="left"), n - 1)
        exact = (k == 0) | (em[k] == eu)
        lo_i, hi_i = k - 1, k
    else:
        k = np.searchsorted(-em, -eu, side="right") - 1
        k = np.clip(k, 0, n - 1)
        exact = (k == n - 1) | (em[k] == eu) | (eu > em[0])
        lo_i, hi_i = k, k + 1
    z = s[k].astype(float)
    z[eu >= em[0]] = 0.0 if side == "left" else z[eu >= em[0]]
    need = np.nonzero(~exact & (eu < em[0]))[0]
    if need.size:
        lo = s[lo_i[need]].copy()
        hi = s[np.minimum(hi_i[need], n - 1)].copy()
        target = eu[need]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            above = _energy(field, v(mid)) > target
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        z[need] = hi
    return z


def _grad_norm(field: EnergyField, x) -> np.ndarray:
    return np.linalg.norm(field.grad(x), axis=-1)


def _moving_fraction(g: np.ndarray, crit_tol: float) -> np.ndarray:
    """Fraction of each cell where the linearly interpolated ``g`` exceeds ``crit_tol``."""
    a, b = g[:-1], g[1:]
    above_a, above_b = a > crit_tol, b > crit_tol
    frac = np.where(above_a & above_b, 1.0, 0.0)
    mixed = above_a != above_b
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = (crit_tol - a) / (b - a)
    frac = np.where(mixed & above_a, cross, frac)
    frac = np.where(mixed & above_b, 1.0 - cross, frac)
    return np.clip(frac, 0.0, 1.0)


def _range_time(field: EnergyField, a: float, b: float) -> float:
    """Flow time between ``a`` and ``b`` in one dimension: ``int du / |phi'(u)|``."""
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    if field.flow_time is not None:
        return float(field.flow_time(np.array(hi)) - field.flow_time(np.array(lo)))

    def inv(x):
        g = float(_grad_norm(field, np.array([[x]]))[0])
        return 1.0 / g if g > 0 else 0.0

    val = endpoint_quad(inv, lo, hi)
    return val if math.isfinite(val) else math.inf


def _dwell_cells(field: EnergyField, u: Curve, crit_tol: float) -> tuple[np.ndarray, float]:
    """Dwell length per cell, counted only before ``T_star``.

    In cells where ``|grad phi|`` crosses ``crit_tol`` the moving time of a
    scalar curve is the flow time across the traversed range, which places
    the edge of a dwell interval inside the cell. Elsewhere ``|grad phi|``
    is interpolated linearly.
    """
    t = u.times
    h = np.diff(t)
    T_star = detect_t_star(u)
    g = _grad_norm(field, u.values)
    frac = _moving_fraction(g, crit_tol)
    dwell = (1.0 - frac) * h
    if u.dim == 1:
        mixed = np.nonzero((g[:-1] > crit_tol) != (g[1:] > crit_tol))[0]
        x = u.values[:, 0]
        for i in mixed:
            moving = _range_time(field, x[i], x[i + 1])
            dwell[i] = h[i] - min(h[i], moving)
    if math.isfinite(T_star):
        dwell = np.where(t[1:] <= T_star, dwell, 0.0)
    return dwell, T_star


def minimality_defect(field: EnergyField, u: Curve, crit_tol: float = CRIT_TOL) -> float:
    """Time spent with ``|grad phi(u)| <= crit_tol`` before ``T_star(u)``.

    Curves still moving at the end of their horizon are measured up to it.
    """
    if len(u) < 2:
        return 0.0
    return float(_dwell_cells(field, u, crit_tol)[0].sum())


def defect_rows(field: EnergyField, u: Curve, crit_tol: float = CRIT_TOL):
    """Rows ``(t, grad_norm, in_dwell_set)`` for CSV reports."""
    g = _grad_norm(field, u.values)
    T_star = detect_t_star(u)
    dwell = (g <= crit_tol) & (u.times < T_star)
    return [(float(t), float(x), int(d)) for t, x, d in zip(u.times, g, dwell)]


def _solution_curve(field: EnergyField, times: np.ndarray, values: np.ndarray) -> Curve:
    return Curve(times, values, CONTINUOUS, slopes=-field.grad(values))


def minimalize(field: EnergyField, u: Curve, crit_tol: float = CRIT_TOL,
               solution_tol: Optional[float] = 1e-5) -> Curve:
    """Minimal solution with the range of ``u``: ``u`` with its dwell time removed.

    The new clock ``z(t)`` is the time ``u`` has spent moving up to ``t``
    (``z' = 1`` off the dwell set, ``0`` on it), so ``w(z(t)) = u(t)``.
    ``z^{-1}`` is the left-continuous pseudo-inverse, which sends each
    plateau of ``z`` to its left endpoint. ``w`` is resampled on a uniform
    grid with the largest step of ``u``.

    Parameters
    ----------
    solution_tol : float or None
        Bound on the energy-identity residual of ``u`` relative to its
        energy drop; ``None`` skips the check.
    """
    if crit_tol <= 0:
        raise InputError("crit_tol must be positive")
    t = u.times
    if len(u) < 2:
        return u
    if solution_tol is not None:
        e = _energy(field, u.values)
        scale = 1.0 + float(np.ptp(e))
        r = energy_identity_residual(field, u)
        if r > solution_tol * scale:
            raise InputError(f"u is not a solution (energy-identity residual {r:.3g})")
    dwell, T_star = _dwell_cells(field, u, crit_tol)
    if T_star == 0.0:
        return Curve(t.copy(), np.repeat(u.values[:1], len(t), axis=0), CONTINUOUS,
                     slopes=np.zeros_like(u.values))
    z = np.concatenate([[0.0], np.cumsum(np.diff(t) - dwell)])
    H = float(z[-1])
    dt = float(np.max(np.diff(t)))
    s = uniform_grid(H, dt) if H > 0 else np.array([0.0])
    # left-continuous inverse: first t with z(t) >= s, linear inside the cell
    j = np.clip(np.searchsorted(z, s, side="left"), 1, len(z) - 1)
    z0, z1 = z[j - 1], z[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(z1 > z0, (s - z0) / (z1 - z0), 1.0)
    # inside a partially dwelling cell the moving part sits at one end
    tt = _cell_time(t, j, w, dwell, field, u, crit_tol)
    tt[0] = t[0]
    return _solution_curve(field, s, u(tt))


def _cell_time(t, j, w, dwell, field, u, crit_tol):
    """Map a fraction ``w`` of a cell's moving time back to a time in that cell."""
    t0, t1 = t[j - 1], t[j]
    h = t1 - t0
    d = dwell[j - 1]
    moving = h - d
    g0 = _grad_norm(field, u.values[j - 1])
    # dwell at the start of the cell when the left node is critical
    start_dwell = g0 <= crit_tol
    off = np.where(start_dwell, d, 0.0)
    return t0 + off + w * moving


def is_minimal(field: EnergyField, u: Curve, crit_tol: float = CRIT_TOL, tol: float = 1e-6) -> bool:
    return minimality_defect(field, u, crit_tol) <= tol


@dataclass
class Splice:
    """``u`` on ``[0, t_n]`` followed by the minimalized tail, and ``d_inf`` to ``u``."""

    t_n: float
    curve: Curve
    dinf: float


def eventually_minimalize(field: EnergyField, u: Curve, t_list: Sequence[float],
                          crit_tol: float = CRIT_TOL) -> list[Splice]:
    """Splices that agree with ``u`` up to ``t_n`` and are minimal afterwards."""
    T_star = detect_t_star(u)
    out = []
    for tn in t_list:
        tn = float(tn)
        if not 0 <= tn < min(T_star, u.horizon):
            raise InputError(f"t_n={tn} must lie in [0, T_star)")
        if float(_grad_norm(field, u(tn))) <= crit_tol:
            raise InputError(f"t_n={tn} is a critical time")
        head_t = np.append(u.times[u.times < tn], tn)
        tail_t = np.concatenate([[tn], u.times[u.times > tn]])
        tail = Curve(tail_t - tn, u(tail_t), CONTINUOUS, slopes=-field.grad(u(tail_t)))
        w = minimalize(field, tail, crit_tol, solution_tol=None)
        times = np.concatenate([head_t, tn + w.times[1:]])
        vals = np.concatenate([u(head_t), w.values[1:]])
        c = _solution_curve(field, times, vals)
        out.append(Splice(tn, c, metric_dinf(c, u)))
    return out


# ---------------------------------------------------------------------------
# analytic solutions used as fixtures


def _cusp_segments(centers: np.ndarray, u0: float):
    """Pass-through solution of the multicusp flow as ``(t_start, kind, center, data)`` pieces.

    ``kind`` is ``"down"`` (``x = c + (a - s)^2`` for ``s <= a``, approaching
    ``c`` from above) or ``"away"`` (``x = c - s^2``, leaving ``c`` downward).
    """
    c = np.sort(centers)[::-1]
    segs = []
    t = 0.0
    above = u0 - c[0]
    if above < 0:
        raise InputError("u0 must lie above every center")
    a = math.sqrt(above)
    segs.append((t, "down", c[0], a))
    t += a
    for k in range(len(c)):
        if k + 1 < len(c):
            half = 0.5 * (c[k] - c[k + 1])
            r = math.sqrt(half)
            segs.append((t, "away", c[k], r))
            t += r
            segs.append((t, "down", c[k + 1], r))
            t += r
        else:
            segs.append((t, "away", c[k], math.inf))
    return segs


def multicusp_solution(centers: Sequence[float], u0: float, horizon: float, dt: float = 1e-3,
                       pauses: Optional[dict] = None) -> Curve:
    """Downward multicusp solution from ``u0`` with optional dwell ``{center_index: length}``.

    Center indices refer to the order in which the flow reaches them (0 is
    the highest). Dwell lengths should be multiples of ``dt`` so that paused
    and unpaused curves share grid values.
    """
    c = np.asarray(centers, dtype=float)
    pauses = dict(pauses or {})
    segs = _cusp_segments(c, float(u0))
    # insert dwell intervals at arrival times
    pieces = []
    shift = 0.0
    arrivals = 0
    for (ts, kind, cc, data) in segs:
        if kind == "away":
            d = float(pauses.get(arrivals, 0.0))
            if d > 0:
                pieces.append((ts + shift, "rest", cc, d))
                shift += d
            arrivals += 1
        pieces.append((ts + shift, kind, cc, data))
    starts = np.array([p[0] for p in pieces])

    def value(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        slope = np.empty_like(t)
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(pieces) - 1)
        for i, (ts, kind, cc, data) in enumerate(pieces):
            m = idx == i
            if not m.any():
                continue
            s = t[m] - ts
            if kind == "down":
                r = np.maximum(data - s, 0.0)
                out[m] = cc + r * r
                slope[m] = -2.0 * r
            elif kind == "away":
                out[m] = cc - s * s
                slope[m] = -2.0 * s
            else:
                out[m] = cc
                slope[m] = 0.0
        return out, slope

    grid = uniform_grid(horizon, dt)
    x, dx = value(grid)
    return Curve(grid, x[:, None], CONTINUOUS, slopes=dx[:, None])


def minimal_cusp(horizon: float = 2.0, dt: float = 1e-3, u0: float = 1.0) -> Curve:
    """``v(t) = (a - t)|a - t|`` with ``a = sqrt(u0)``: the cusp solution that never stops."""
    return multicusp_solution([0.0], u0, horizon, dt)


def paused_cusp(dwell: float = 0.5, horizon: float = 2.0, dt: float = 1e-3, u0: float = 1.0) -> Curve:
    """Cusp solution resting at 0 for ``dwell`` before moving on."""
    return multicusp_solution([0.0], u0, horizon, dt, pauses={0: dwell})


def splice_family(field_centers: Sequence[float], u0: float, horizon: float, dt: float,
                  rng: np.random.Generator, n: int, max_dwell: float = 0.3) -> list[Curve]:
    """Random paused multicusp solutions with dwell lengths on the ``dt`` lattice."""
    k = len(field_centers)
    out = []
    for _ in range(n):
        pauses = {}
        for i in range(k):
            if rng.random() < 0.6:
                pauses[i] = dt * int(rng.integers(1, int(max_dwell / dt) + 1))
        out.append(multicusp_solution(field_centers, u0, horizon, dt, pauses))
    return out


__all__ = [
    "TimeChange", "construct_time_change", "minimality_defect", "defect_rows", "minimalize",
    "is_minimal", "Splice", "eventually_minimalize", "multicusp_solution", "minimal_cusp",
    "paused_cusp", "splice_family", "CRIT_TOL",
]
