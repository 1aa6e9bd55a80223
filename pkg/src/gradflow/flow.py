"""Trajectories, a reference solver for u' = -grad phi(u), and curve metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .energy import EnergyField, as_points
from .errors import InputError, IntegrationError

CONTINUOUS = "continuous"
PIECEWISE_CONSTANT = "piecewise-constant"


class Curve:
    """A sampled trajectory ``[0, H] -> R^d``.

    ``kind="continuous"`` curves are cubic Hermite interpolants of the
    samples; node slopes come from ``slopes`` when given (for flows, the
    exact ``-grad phi``) and from a shape-preserving PCHIP fit otherwise.
    ``kind="piecewise-constant"`` curves take the value ``values[k]`` on
    ``(times[k-1], times[k]]`` and ``values[0]`` at time 0.

    Past the horizon the curve is continued by its last value.
    """

    def __init__(self, times, values, kind: str = CONTINUOUS, slopes=None,
                 max_dt: Optional[float] = None):
        t = np.asarray(times, dtype=float).ravel()
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if kind not in (CONTINUOUS, PIECEWISE_CONSTANT):
            raise InputError(f"unknown curve kind {kind!r}")
        if t.size == 0 or t.size != v.shape[0]:
            raise InputError("times and values must have the same nonzero length")
        if t[0] != 0.0:
            raise InputError("curve times must start at 0")
        if np.any(np.diff(t) <= 0):
            raise InputError("curve times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise InputError("curve values must be finite")
        self.times = t
        self.values = v
        self.kind = kind
        gaps = np.diff(t)
        self.max_dt = float(gaps.max()) if gaps.size else 0.0
        if max_dt is not None:
            if self.max_dt > max_dt * (1 + 1e-9):
                raise InputError(f"sample spacing {self.max_dt} exceeds declared max_dt {max_dt}")
            self.max_dt = float(max_dt)
        if kind == CONTINUOUS:
            if slopes is None:
                slopes = _pchip_slopes(t, v)
            slopes = np.asarray(slopes, dtype=float).reshape(v.shape)
        self.slopes = slopes

    # ------------------------------------------------------------------ basics
    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return self.times.size

    def scalar(self) -> np.ndarray:
        """Values of a one-dimensional curve as a flat array."""
        if self.dim != 1:
            raise InputError("scalar() needs a one-dimensional curve")
        return self.values[:, 0]

    def __repr__(self) -> str:
        return f"Curve(kind={self.kind}, n={len(self)}, dim={self.dim}, horizon={self.horizon:.6g})"

    # -------------------------------------------------------------- evaluation
    def __call__(self, t, side: str = "left") -> np.ndarray:
        """Evaluate at times ``t``; returns shape ``t.shape + (dim,)``.

        ``side="right"`` gives right limits, which only differ from values
        for piecewise-constant curves at their jump times.
        """
        tt = np.asarray(t, dtype=float)
        flat = np.clip(tt.ravel(), 0.0, self.horizon)
        if self.kind == PIECEWISE_CONSTANT:
            k = np.searchsorted(self.times, flat, side=side)
            out = self.values[np.clip(k, 0, len(self) - 1)]
        else:
            out = self._hermite(flat)
        return out.reshape(tt.shape + (self.dim,))

    def _hermite(self, t: np.ndarray, derivative: bool = False) -> np.ndarray:
        if len(self) == 1:
            return np.zeros((t.size, self.dim)) if derivative else np.repeat(self.values, t.size, axis=0)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self) - 2)
        t0 = self.times[k]
        h = self.times[k + 1] - t0
        s = ((t - t0) / h)[:, None]
        y0, y1 = self.values[k], self.values[k + 1]
        m0, m1 = self.slopes[k] * h[:, None], self.slopes[k + 1] * h[:, None]
        if derivative:
            d00 = 6 * s * s - 6 * s
            d10 = 3 * s * s - 4 * s + 1
            d01 = -d00
            d11 = 3 * s * s - 2 * s
            return (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h[:, None]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1

    def derivative(self, t) -> np.ndarray:
        """Derivative of the interpolant (zero for piecewise-constant curves)."""
        tt = np.asarray(t, dtype=float)
        if self.kind == PIECEWISE_CONSTANT:
            return np.zeros(tt.shape + (self.dim,))
        flat = np.clip(tt.ravel(), 0.0, self.horizon)
        return self._hermite(flat, derivative=True).reshape(tt.shape + (self.dim,))

    def resample(self, times) -> "Curve":
        times = np.asarray(times, dtype=float)
        if self.kind == PIECEWISE_CONSTANT:
            return Curve(times, self(times), PIECEWISE_CONSTANT)
        return Curve(times, self(times), CONTINUOUS, slopes=self.derivative(times))

    def truncate(self, T: float) -> "Curve":
        """Restriction to ``[0, T]`` (``T`` is added as the last node)."""
        keep = self.times < T - 1e-14 * max(1.0, T)
        times = np.append(self.times[keep], T)
        return self.resample(times)


def _pchip_slopes(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    if t.size == 1:
        return np.zeros_like(v)
    if t.size == 2:
        return np.repeat((v[1:] - v[:1]) / (t[1] - t[0]), 2, axis=0)
    return PchipInterpolator(t, v, axis=0).derivative()(t)


def uniform_grid(T: float, max_dt: float) -> np.ndarray:
    n = max(1, int(math.ceil(T / max_dt - 1e-9)))
    return np.linspace(0.0, T, n + 1)


def curve_from_function(fn, T: float, dt: float, deriv=None) -> Curve:
    """Sample ``fn`` (and optionally its derivative) on a uniform grid of ``[0, T]``."""
    t = uniform_grid(T, dt)
    vals = np.asarray(fn(t), dtype=float)
    slopes = None if deriv is None else np.asarray(deriv(t), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
        slopes = None if slopes is None else slopes[:, None]
    return Curve(t, vals, CONTINUOUS, slopes=slopes)


def flow_curve(field: EnergyField, fn, T: float, dt: float) -> Curve:
    """Sample a known solution and use ``-grad phi`` as its node slopes."""
    t = uniform_grid(T, dt)
    vals = as_points(np.asarray(fn(t), dtype=float), field.dim).reshape(t.size, field.dim)
    return Curve(t, vals, CONTINUOUS, slopes=-field.grad(vals))


# ---------------------------------------------------------------------------
# reference integrator

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# dense output coefficients (Shampine's fourth-order continuous extension)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class FlowResult:
    curve: Curve
    t_star: float
    energy_trace: np.ndarray
    accepted_steps: int
    rejected_steps: int
    t_rest: float = math.inf


def integrate_flow(field: EnergyField, u0, T: float, tol: float = 1e-10,
                   max_dt: float = 1e-2, rest_tol: Optional[float] = None,
                   max_steps: int = 10_000_000) -> FlowResult:
    """Integrate ``u' = -grad phi(u)`` on ``[0, T]`` with a Dormand-Prince 5(4) pair.

    Absolute and relative tolerances are both ``tol``. The trajectory is
    frozen once ``|grad phi|`` drops to ``rest_tol`` (default ``tol``),
    including inside a step: a sharp interior dip of the gradient norm is
    located by a bounded scalar search on the dense output. This is how the
    solver chooses the stay-at-rest branch at points like the cusp.
    """
    if not T > 0 or not tol > 0:
        raise InputError("integrate_flow needs T > 0 and tol > 0")
    rest_tol = tol if rest_tol is None else rest_tol
    y = as_points(u0, field.dim).reshape(field.dim).copy()

    def f(z):
        return -field.grad(z)

    t = 0.0
    ts, ys, ks = [0.0], [y.copy()], []
    fy = f(y)
    accepted = rejected = 0
    t_rest = math.inf
    if np.linalg.norm(fy) <= rest_tol:
        t_rest = 0.0
    h = min(max_dt, T, 1e-3)
    while t < T and t_rest == math.inf:
        if accepted + rejected > max_steps:
            raise IntegrationError("step budget exhausted", t)
        h = min(h, T - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError("step size underflow", t)
        K = np.empty((7, field.dim))
        K[0] = fy
        for s in range(1, 6):
            K[s] = f(y + h * np.dot(_A[s], K[:s]))
        y_new = y + h * np.dot(_B, K[:6])
        K[6] = f(y_new)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(K[6]))):
            rejected += 1
            h *= 0.2
            continue
        err = h * np.dot(_E, K)
        scale = tol + np.maximum(np.abs(y), np.abs(y_new)) * tol
        en = float(np.sqrt(np.mean((err / scale) ** 2)))
        if en > 1.0:
            rejected += 1
            h *= max(0.2, 0.9 * en ** -0.2)
            continue
        accepted += 1
        stop_theta = _rest_inside(field, y, h, K, y_new, rest_tol)
        if stop_theta is not None:
            theta, y_stop = stop_theta
            ks.append((t, h, y.copy(), K.copy()))
            t = t + theta * h
            y = y_stop
            ts.append(t)
            ys.append(y.copy())
            t_rest = t
            break
        ks.append((t, h, y.copy(), K.copy()))
        t += h
        y = y_new
        fy = K[6]
        ts.append(t)
        ys.append(y.copy())
        if np.linalg.norm(fy) <= rest_tol:
            t_rest = t
            break
        h *= min(10.0, 0.9 * max(en, 1e-10) ** -0.2)
        h = min(h, max_dt)

    grid = uniform_grid(T, max_dt)
    vals = _dense_eval(grid, np.asarray(ts), ks, ys, t_rest)
    curve = Curve(grid, vals, CONTINUOUS, slopes=-field.grad(vals))
    energy = field.eval(vals)
    t_star = t_rest if t_rest < math.inf else math.inf
    return FlowResult(curve, t_star, energy, accepted, rejected, t_rest)


def _dense(y, h, K, theta):
    p = np.cumprod(np.full(4, theta))
    return y + h * (K.T @ (_P @ p))


def _rest_inside(field, y, h, K, y_new, rest_tol):
    """Look for a critical point crossed strictly inside a step."""
    thetas = np.linspace(0.0, 1.0, 17)
    pts = np.array([_dense(y, h, K, th) for th in thetas])
    g = np.linalg.norm(field.grad(pts), axis=-1)
    ends = min(g[0], g[-1])
    j = int(np.argmin(g[1:-1])) + 1
    if g[j] > 0.5 * ends:
        return None
    lo, hi = thetas[j - 1], thetas[j + 1]

    def gnorm(th):
        return float(np.linalg.norm(field.grad(_dense(y, h, K, th))))

    # golden-section search; the dip is V-shaped at a crossed critical point
    r = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = gnorm(c), gnorm(d)
    for _ in range(120):
        if b - a <= 1e-16:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = gnorm(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = gnorm(d)
    th, gmin = (c, fc) if fc <= fd else (d, fd)
    if gmin <= max(rest_tol, 1e-3 * ends):
        return th, _dense(y, h, K, th)
    return None


def _dense_eval(grid, ts, ks, ys, t_rest):
    out = np.empty((grid.size, ys[0].size))
    idx = np.clip(np.searchsorted(ts, grid, side="right") - 1, 0, max(len(ks) - 1, 0))
    for i, tg in enumerate(grid):
        if t_rest < math.inf and tg >= t_rest:
            out[i] = ys[-1]
            continue
        if not ks:
            out[i] = ys[0]
            continue
        t0, h, y0, K = ks[idx[i]]
        theta = min(max((tg - t0) / h, 0.0), 1.0)
        out[i] = _dense(y0, h, K, theta)
    return out


# ---------------------------------------------------------------------------
# diagnostics


def energy_identity_residual(field: EnergyField, curve: Curve) -> float:
    """Largest violation of ``phi(u(t1)) - phi(u(t2)) = int_{t1}^{t2} |grad phi(u)|^2``.

    The integral is composite Simpson per grid cell with the midpoint taken
    from the curve's interpolant; the maximum runs over all pairs of grid
    times.
    """
    if curve.kind != CONTINUOUS:
        raise InputError("energy identity needs a continuous curve")
    t = curve.times
    if t.size < 2:
        return 0.0
    e = field.eval(curve.values)
    g2 = np.sum(field.grad(curve.values) ** 2, axis=-1)
    mid = 0.5 * (t[1:] + t[:-1])
    gm2 = np.sum(field.grad(curve(mid)) ** 2, axis=-1)
    cell = np.diff(t) / 6.0 * (g2[:-1] + 4 * gm2 + g2[1:])
    R = (e[0] - e) - np.concatenate([[0.0], np.cumsum(cell)])
    return float(R.max() - R.min())


def detect_t_star(curve: Curve, eps: float = 1e-9) -> float:
    """First grid time after which the curve stays within ``eps`` of its value.

    A curve still moving at the end of its horizon (last-cell speed above
    ``eps``) has no detectable rest time and gets ``+inf``.
    """
    if not eps > 0:
        raise InputError("eps must be positive")
    v = curve.values
    n = len(curve)
    if n == 1:
        return 0.0
    speed = np.linalg.norm(v[-1] - v[-2]) / (curve.times[-1] - curve.times[-2])
    if speed > eps:
        return math.inf
    if curve.dim == 1:
        x = v[:, 0]
        smax = np.maximum.accumulate(x[::-1])[::-1]
        smin = np.minimum.accumulate(x[::-1])[::-1]
        ok = np.maximum(smax - x, x - smin) <= eps
    else:
        ok = np.zeros(n, dtype=bool)
        # suffix bounding boxes rule out most candidates quickly
        hi = np.maximum.accumulate(v[::-1], axis=0)[::-1]
        lo = np.minimum.accumulate(v[::-1], axis=0)[::-1]
        box = np.linalg.norm(np.maximum(hi - v, v - lo), axis=1)
        for k in np.nonzero(box <= eps * math.sqrt(curve.dim) + eps)[0]:
            ok[k] = np.linalg.norm(v[k:] - v[k], axis=1).max() <= eps
    # the qualifying set is a suffix only if every later time also qualifies
    bad = np.nonzero(~ok)[0]
    first = 0 if bad.size == 0 else bad[-1] + 1
    return float(curve.times[first]) if first < n else math.inf


def _check_horizon(u: Curve, v: Curve, T: float) -> None:
    slack = 1e-9 * (1.0 + abs(T))
    if T < 0 or T > u.horizon + slack or T > v.horizon + slack:
        raise InputError(f"T={T} exceeds a curve horizon ({u.horizon}, {v.horizon})")


def _pointwise(u: Curve, v: Curve, T: float):
    """Times and clamped distances on the merged grid, right limits included."""
    grid = np.union1d(u.times[u.times <= T], v.times[v.times <= T])
    grid = np.union1d(grid, [T])
    d = np.minimum(1.0, np.linalg.norm(u(grid) - v(grid), axis=-1))
    jumps = [c.times[c.times < T] for c in (u, v) if c.kind == PIECEWISE_CONSTANT]
    if jumps:
        jt = np.unique(np.concatenate(jumps))
        dj = np.minimum(1.0, np.linalg.norm(u(jt, side="right") - v(jt, side="right"), axis=-1))
        grid = np.concatenate([grid, jt])
        d = np.concatenate([d, dj])
    return grid, d


def metric_dT(u: Curve, v: Curve, T: float) -> float:
    """``sup_{[0,T]} min(1, |u - v|)`` on the merged sampling grid.

    Piecewise-constant curves contribute their right limits at jump times,
    so for step curves the value is the exact supremum.
    """
    _check_horizon(u, v, T)
    if u.dim != v.dim:
        raise InputError("curves live in different dimensions")
    _, d = _pointwise(u, v, T)
    return float(d.max())


def metric_dinf_bounds(u: Curve, v: Curve) -> tuple[float, float]:
    """Lower and upper bounds for ``d_inf`` from the common horizon ``H``.

    The lower bound is the weighted sup on ``[0, H]``; past ``H`` every
    term is at most ``1/(1+H)``, which gives the upper bound.
    """
    H = min(u.horizon, v.horizon)
    t, d = _pointwise(u, v, H)
    lower = float(np.max(d / (1.0 + t)))
    return lower, max(lower, 1.0 / (1.0 + H))


def metric_dinf(u: Curve, v: Curve) -> float:
    """Weighted distance ``sup (1+t)^{-1} min(1, |u - v|)`` on the common horizon."""
    return metric_dinf_bounds(u, v)[0]


def set_distance(v: Curve, family: Sequence[Curve], horizon: float = math.inf) -> float:
    """Largest distance from ``v`` to a member of ``family`` (``+inf`` if empty)."""
    if len(family) == 0:
        return math.inf
    if math.isinf(horizon):
        return max(metric_dinf(v, u) for u in family)
    return max(metric_dT(v, u, horizon) for u in family)
