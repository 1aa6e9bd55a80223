"""One-dimensional reduction: pseudo-inverses, singular measures, smoothing and lifts.

A monotone scalar solution ``u`` of ``u' = f(u)`` is described by its time
map ``t(x)``, whose derivative splits into the density ``1/f`` and a
nonnegative measure ``mu`` recording dwell time at zeros of ``f``.
Mollifying ``mu`` at scale ``eps`` gives a smooth time map ``t_eps`` and a
new energy with ``E'_eps = f / (1 + m_eps f)``; its solution ``u_eps`` moves
without dwelling and converges to ``u``.

Curves in ``R^d`` are handled by rectification: the arc-length chart ``y``
of a minimal solution turns ``phi`` into a scalar energy with
``E'(s) = |grad phi(y(s))|``, and :func:`lift` maps scalar solutions back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.interpolate import PchipInterpolator

from ._numerics import endpoint_quad
from .energy import EnergyField
from .errors import ConsistencyError, DegenerateError, InputError
from .flow import CONTINUOUS, Curve, uniform_grid
from .reparam import CRIT_TOL, minimality_defect

ATOM_FACTOR = 5.0


# ---------------------------------------------------------------------------
# time maps


@dataclass
class TimeMap:
    """Left-continuous pseudo-inverse ``t(x) = min{t : u(t) >= x}`` sampled on ``x``."""

    x: np.ndarray
    t: np.ndarray
    dt: float

    def __call__(self, x):
        return np.interp(x, self.x, self.t)


def _refine_crossing(curve: Curve, lo, hi, target, iters: int = 60):
    """Bisection for ``curve(s) = target`` on brackets with ``curve(lo) < target <= curve(hi)``."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = curve(mid)[..., 0] < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi


def pseudo_inverse(u: Curve, x_grid: Optional[np.ndarray] = None, n: Optional[int] = None) -> TimeMap:
    """Pseudo-inverse of a nondecreasing scalar curve.

    ``t(x)`` is the first time where the interpolated ``u`` reaches ``x``.
    The crossing cell is found on the samples with a ``1e-12`` slack and
    refined by bisection, so plateaus map to their left endpoint.
    """
    if u.dim != 1:
        raise InputError("pseudo_inverse needs a scalar curve")
    y = u.values[:, 0]
    if np.any(np.diff(y) < -1e-12 * (1 + np.abs(y).max())):
        raise InputError("curve is not nondecreasing; reflect it first")
    if x_grid is None:
        x_grid = np.linspace(y[0], y[-1], n or len(u))
    x = np.asarray(x_grid, dtype=float)
    if np.any(x < y[0] - 1e-12) or np.any(x > y[-1] + 1e-12):
        raise InputError("x_grid leaves the range of the curve")
    ym = np.maximum.accumulate(y)
    k = np.searchsorted(ym, x - 1e-12, side="left")
    k = np.minimum(k, len(y) - 1)
    t = u.times[k].astype(float)
    # the slack only selects the cell; inside it the exact level is located
    need = np.nonzero((k > 0) & (ym[k] >= x))[0]
    if need.size:
        t[need] = _refine_crossing(u, u.times[k[need] - 1], u.times[k[need]], x[need])
    dt = float(np.max(np.diff(u.times))) if len(u) > 1 else 0.0
    return TimeMap(x, t, dt)


# ---------------------------------------------------------------------------
# singular decomposition


@dataclass
class SingularDecomposition:
    """``t(x) = t0 + int_{x0}^x 1/f [f > crit_tol] + mu([x0, x))`` on ``x``.

    ``ac_cell`` holds the absolutely continuous part per cell, ``atoms`` the
    pairs ``(location, weight)`` and ``hist`` the diffuse remainder per cell.
    """

    x: np.ndarray
    t0: float
    ac_density: np.ndarray
    ac_cell: np.ndarray
    atoms: np.ndarray
    hist: np.ndarray
    crit_tol: float
    dt: float = 0.0

    @property
    def total_mass(self) -> float:
        return float(self.atoms[:, 1].sum() + self.hist.sum())

    @property
    def atom_mass(self) -> float:
        return float(self.atoms[:, 1].sum())

    def mu_cell(self) -> np.ndarray:
        """Mass of ``mu`` attributed to each cell."""
        m = self.hist.copy()
        if len(self.atoms):
            j = np.clip(np.searchsorted(self.x, self.atoms[:, 0], side="right") - 1, 0, len(m) - 1)
            np.add.at(m, j, self.atoms[:, 1])
        return m

    def reconstruct(self) -> np.ndarray:
        """``t`` on the grid rebuilt from the parts."""
        return self.t0 + np.concatenate([[0.0], np.cumsum(self.ac_cell + self.mu_cell())])

    def measure(self) -> "DiscreteMeasure":
        """Atoms plus the histogram as point masses at cell midpoints."""
        mids = 0.5 * (self.x[1:] + self.x[:-1])
        keep = self.hist > 0
        locs = np.concatenate([self.atoms[:, 0], mids[keep]])
        w = np.concatenate([self.atoms[:, 1], self.hist[keep]])
        return DiscreteMeasure(locs, w)

    def support_mask(self, radius: float) -> np.ndarray:
        """Grid points within ``radius`` of the support of ``mu``."""
        pts = [self.atoms[:, 0]]
        keep = self.hist > 0
        pts.append(self.x[:-1][keep])
        pts.append(self.x[1:][keep])
        s = np.sort(np.concatenate(pts))
        if s.size == 0:
            return np.zeros(self.x.shape, dtype=bool)
        j = np.clip(np.searchsorted(s, self.x), 1, max(s.size - 1, 1))
        d = np.minimum(np.abs(self.x - s[j - 1]), np.abs(self.x - s[np.minimum(j, s.size - 1)]))
        if s.size == 1:
            d = np.abs(self.x - s[0])
        return d <= radius

    def csv_rows(self):
        return [(float(x), float(a)) for x, a in zip(self.x, self.ac_density)]


@dataclass
class DiscreteMeasure:
    locs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.locs = np.asarray(self.locs, dtype=float).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.locs.shape != self.weights.shape:
            raise InputError("locations and weights differ in length")
        if np.any(self.weights < 0):
            raise InputError("measure weights must be nonnegative")

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


def _cell_integrals(f: Callable, x: np.ndarray, crit_tol: float) -> np.ndarray:
    """``int_cell 1/f`` restricted to ``f > crit_tol``; adaptive quadrature near small ``f``."""
    a, b = x[:-1], x[1:]
    nodes, wts = np.polynomial.legendre.leggauss(10)
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
    fv = np.asarray(f(pts), dtype=float)
    ends = np.stack([np.asarray(f(a)), np.asarray(f(b))], axis=1)
    allv = np.concatenate([fv, ends], axis=1)
    inv = np.where(fv > crit_tol, 1.0 / np.where(fv > 0, fv, 1.0), 0.0)
    out = half * (inv @ wts)
    hard = (allv.min(axis=1) <= 0.9 * allv.max(axis=1)) | (allv.min(axis=1) <= 1e3 * crit_tol)
    for i in np.nonzero(hard)[0]:
        def g(s):
            v = float(f(np.array([s]))[0])
            return 1.0 / v if v > crit_tol else 0.0
        out[i] = endpoint_quad(g, a[i], b[i])
    return out


def decompose_derivative(tmap: TimeMap, f: Callable, crit_tol: float = CRIT_TOL,
                         atom_factor: float = ATOM_FACTOR, noise: Optional[float] = None
                         ) -> SingularDecomposition:
    """Split the increments of ``tmap`` into ``1/f`` and a nonnegative measure.

    A cell whose excess over the ``1/f`` integral is more than
    ``atom_factor`` times that integral becomes an atom, placed where ``f``
    is smallest in the cell. Smaller positive excess above the noise floor
    goes into the diffuse histogram.

    Raises
    ------
    ConsistencyError
        If some cell needs less time than ``1/f`` allows beyond the grid error.
    """
    x, t = tmap.x, tmap.t
    if x.size < 2:
        raise InputError("need at least two grid points")
    dT = np.diff(t)
    ac = _cell_integrals(f, x, crit_tol)
    excess = dT - ac
    tol = 1e-9 + 1e-6 * (np.abs(dT) + np.abs(ac))
    if np.any(excess < -tol):
        i = int(np.argmax(excess < -tol))
        raise ConsistencyError(f"cell [{x[i]:.6g}, {x[i + 1]:.6g}] needs {-excess[i]:.3g} less time "
                               "than 1/f allows")
    excess = np.maximum(excess, 0.0)
    floor = noise if noise is not None else 1e-9 + 1e-7 * float(np.abs(t).max())
    is_atom = (excess > atom_factor * ac) & (excess > floor)
    atoms = []
    for i in np.nonzero(is_atom)[0]:
        s = np.linspace(x[i], x[i + 1], 67)
        fv = np.asarray(f(s), dtype=float)
        atoms.append((float(s[int(np.argmin(fv))]), float(excess[i])))
    hist = np.where(is_atom | (excess <= floor), 0.0, excess)
    fx = np.asarray(f(x), dtype=float)
    dens = np.where(fx > crit_tol, 1.0 / np.where(fx > 0, fx, 1.0), np.nan)
    return SingularDecomposition(x.copy(), float(t[0]), dens, ac, np.array(atoms).reshape(-1, 2),
                                 hist, crit_tol, tmap.dt)


# ---------------------------------------------------------------------------
# mollification


def _bump_raw(s):
    s = np.asarray(s, dtype=float)
    z = 2.0 * s - 1.0
    inside = np.abs(z) < 1.0
    out = np.zeros_like(s)
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _kernel_tables():
    c = 1.0 / quad(lambda s: float(_bump_raw(s)), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)[0]
    s = np.linspace(0.0, 1.0, 400001)
    K = cumulative_trapezoid(c * _bump_raw(s), s, initial=0.0)
    return c, s, K / K[-1]


def kernel(s):
    """Forward bump supported in ``[0, 1]`` with unit integral."""
    return _kernel_tables()[0] * _bump_raw(s)


def kernel_cdf(s):
    _, grid, K = _kernel_tables()
    return np.interp(s, grid, K, left=0.0, right=1.0)


def kernel_max() -> float:
    return float(kernel(0.5))


@dataclass
class Mollified:
    """``m_eps(x) = sum_k w_k kappa((x - a_k)/eps)/eps``."""

    measure: DiscreteMeasure
    eps: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.measure.locs.size == 0:
            return np.zeros_like(x)
        s = (x[..., None] - self.measure.locs) / self.eps
        return (kernel(s) * self.measure.weights).sum(axis=-1) / self.eps

    def mass_between(self, a, b):
        """``int_a^b m_eps`` through the kernel's distribution function."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.measure.locs.size == 0:
            return np.zeros(np.broadcast(a, b).shape)
        loc, w = self.measure.locs, self.measure.weights
        return ((kernel_cdf((b[..., None] - loc) / self.eps)
                 - kernel_cdf((a[..., None] - loc) / self.eps)) * w).sum(axis=-1)

    @property
    def support(self) -> tuple[float, float]:
        if self.measure.locs.size == 0:
            return (math.nan, math.nan)
        return float(self.measure.locs.min()), float(self.measure.locs.max() + self.eps)


def mollify_measure(mu, eps: float) -> Mollified:
    """Mollify ``mu`` (a :class:`DiscreteMeasure` or decomposition) at scale ``eps``."""
    if not eps > 0:
        raise InputError("eps must be positive")
    if isinstance(mu, SingularDecomposition):
        mu = mu.measure()
    return Mollified(mu, float(eps))


# ---------------------------------------------------------------------------
# smoothed energies


@dataclass
class SmoothedEnergy:
    """Grid data of the smoothed energy at scale ``eps``.

    ``near`` marks the ``eps``-neighbourhood of the support of ``mu``;
    ``bound`` is ``2 max_near f``.
    """

    eps: float
    x: np.ndarray
    Eprime: np.ndarray
    Eprime_eps: np.ndarray
    m_eps: np.ndarray
    t_eps: np.ndarray
    u_eps: Curve
    near: np.ndarray
    mollified: Mollified = dc_field(repr=False)

    @property
    def sup_diff(self) -> float:
        return float(np.max(np.abs(self.Eprime_eps - self.Eprime)))

    @property
    def bound(self) -> float:
        return float(2.0 * self.Eprime[self.near].max()) if self.near.any() else 0.0

    @property
    def off_support_mismatch(self) -> float:
        """Largest ``|E'_eps - E'|`` away from the neighbourhood (exactly zero by construction)."""
        far = ~self.near
        return float(np.max(np.abs(self.Eprime_eps[far] - self.Eprime[far]))) if far.any() else 0.0

    def csv_rows(self, decomp: SingularDecomposition):
        return [(float(a), float(b), float(c), float(d), float(e)) for a, b, c, d, e in
                zip(self.x, decomp.ac_density, self.m_eps, self.Eprime, self.Eprime_eps)]


def _fine_time_table(f, mol, x, t_eps, crit_tol, dt, n_sub: int = 256):
    """``(t_eps, x)`` pairs, refined where ``1/f + m_eps`` varies quickly.

    Refined cells hold many time steps, a near-zero of ``f`` or part of the
    support of ``m_eps``.

    Inside a refined cell the partial integrals of ``1/f + m_eps`` use the
    smoothstep substitution and are rescaled to the exact cell increment.
    """
    inc = np.diff(t_eps)
    fa, fb = np.asarray(f(x[:-1]), dtype=float), np.asarray(f(x[1:]), dtype=float)
    hard = (inc > 4 * dt) | (np.minimum(fa, fb) <= 0.9 * np.maximum(fa, fb))
    lo, hi = mol.support
    if math.isfinite(lo):
        hard |= (x[1:] >= lo) & (x[:-1] <= hi)
    cells = np.nonzero(hard)[0]
    if cells.size == 0:
        return t_eps, x
    w = np.linspace(0.0, 1.0, n_sub + 1)
    S = w * w * (3.0 - 2.0 * w)
    dS = 6.0 * w * (1.0 - w)
    a, h = x[cells], np.diff(x)[cells]
    xs = a[:, None] + h[:, None] * S[None, :]
    fv = np.asarray(f(xs), dtype=float)
    dens = np.where(fv > crit_tol, 1.0 / np.where(fv > 0, fv, 1.0), 0.0) + mol(xs)
    g = dens * dS * h[:, None]
    part = np.concatenate([np.zeros((len(cells), 1)),
                           np.cumsum(0.5 * (g[:, 1:] + g[:, :-1]) * np.diff(w), axis=1)], axis=1)
    total = part[:, -1:]
    part = np.where(total > 0, part / np.where(total > 0, total, 1.0), S[None, :]) * inc[cells, None]
    tf = t_eps[cells, None] + part
    t_all = np.concatenate([t_eps, tf[:, 1:-1].ravel()])
    x_all = np.concatenate([x, xs[:, 1:-1].ravel()])
    order = np.argsort(t_all, kind="stable")
    return t_all[order], x_all[order]


def smooth_energy(decomp: SingularDecomposition, f: Callable, eps: float,
                  dt: Optional[float] = None) -> SmoothedEnergy:
    """Smoothed time map, energy slope and solution at scale ``eps``.

    ``t_eps`` integrates ``1/f + m_eps`` cell by cell, ``u_eps`` inverts it
    monotonically and is sampled with step ``dt`` (the source step by
    default), and ``E'_eps = f / (1 + m_eps f)``.
    """
    x = decomp.x
    fx = np.asarray(f(x), dtype=float)
    first = np.asarray(f(np.linspace(x[0], x[1], 9)), dtype=float)
    if np.all(first <= decomp.crit_tol):
        raise DegenerateError("f vanishes on an initial segment, so t_eps is infinite")
    mol = mollify_measure(decomp, eps)
    m = mol(x)
    inc = decomp.ac_cell + mol.mass_between(x[:-1], x[1:])
    t_eps = decomp.t0 + np.concatenate([[0.0], np.cumsum(inc)])
    Ee = fx / (1.0 + m * fx)
    near = decomp.support_mask(eps)

    dt = dt or decomp.dt or float(np.median(np.diff(t_eps)))
    grid = decomp.t0 + uniform_grid(t_eps[-1] - decomp.t0, dt)
    tt, xx = _fine_time_table(f, mol, x, t_eps, decomp.crit_tol, dt)
    keep = np.concatenate([[True], np.diff(tt) > 0])
    inv = PchipInterpolator(tt[keep], xx[keep])
    xs = inv(np.clip(grid, t_eps[0], t_eps[-1]))
    fs = np.asarray(f(xs), dtype=float)
    slopes = fs / (1.0 + mol(xs) * fs)
    u_eps = Curve(grid, xs[:, None], CONTINUOUS, slopes=slopes[:, None])
    return SmoothedEnergy(float(eps), x.copy(), fx, Ee, m, t_eps, u_eps, near, mol)


# ---------------------------------------------------------------------------
# rectification and lift


@dataclass
class RectifiedEnergy:
    """Arc-length chart ``y`` of a minimal solution and ``E'(s) = |grad phi(y(s))|``."""

    field: EnergyField
    s: np.ndarray
    y: Curve
    Eprime: np.ndarray
    t_of_s: np.ndarray
    L_star: float
    x_of_t: Curve
    degenerate: bool = False

    @property
    def speed_error(self) -> float:
        """``max | |y_{j+1} - y_j| / ds - 1 |`` on the grid."""
        if self.degenerate:
            return 0.0
        d = np.linalg.norm(np.diff(self.y.values, axis=0), axis=-1) / np.diff(self.s)
        return float(np.max(np.abs(d - 1.0)))

    def f(self, s):
        """``E'`` at arbitrary arc lengths through the interpolated chart."""
        s = np.asarray(s, dtype=float)
        return np.linalg.norm(self.field.grad(self.y(np.clip(s, 0.0, self.L_star))), axis=-1)


def arclength(field: EnergyField, u: Curve) -> Curve:
    """Scalar curve ``x(t) = int_0^t |grad phi(u)|`` (Simpson per cell)."""
    t = u.times
    g = np.linalg.norm(field.grad(u.values), axis=-1)
    if len(u) < 2:
        return Curve(t.copy(), np.zeros((1, 1)), CONTINUOUS)
    mid = 0.5 * (t[1:] + t[:-1])
    gm = np.linalg.norm(field.grad(u(mid)), axis=-1)
    cell = np.diff(t) / 6.0 * (g[:-1] + 4 * gm + g[1:])
    x = np.concatenate([[0.0], np.cumsum(cell)])
    return Curve(t.copy(), x[:, None], CONTINUOUS, slopes=g[:, None])


def rectify(field: EnergyField, v: Curve, crit_tol: float = CRIT_TOL, ds: Optional[float] = None,
            minimal_tol: float = 1e-6, reproject: int = 3) -> RectifiedEnergy:
    """Arc-length parametrization of the minimal solution ``v``.

    The arc length ``x(t)`` is integrated with Simpson's rule; the chart is
    then re-projected on its own chord lengths so that consecutive samples
    are equally spaced, each chord within ``O(ds^2)`` of ``ds``.
    """
    if v.dim != field.dim:
        raise InputError("dimension mismatch")
    d = minimality_defect(field, v, crit_tol)
    if d > minimal_tol:
        raise InputError(f"v is not minimal (defect {d:.3g}); minimalize it first")
    xc = arclength(field, v)
    L = float(xc.values[-1, 0])
    if not L > 1e-14:
        s = np.array([0.0])
        y = Curve(np.array([0.0]), v.values[:1].copy(), CONTINUOUS)
        return RectifiedEnergy(field, s, y, np.linalg.norm(field.grad(v.values[:1]), axis=-1),
                               np.array([0.0]), 0.0, xc, degenerate=True)
    ds = ds or L / max(len(v) - 1, 1)
    s = uniform_grid(L, ds)
    t_s = pseudo_inverse(xc, s).t
    # equalize chords; s keeps spanning the integrated arc length
    for _ in range(reproject):
        pts = v(t_s)
        chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=-1))])
        t_s = np.interp(s, chord * (L / chord[-1]), t_s)
    pts = v(t_s)
    y = Curve(s, pts, CONTINUOUS)
    E = np.linalg.norm(field.grad(pts), axis=-1)
    return RectifiedEnergy(field, s, y, E, t_s, L, xc)


@dataclass
class LiftResult:
    curve: Curve
    gradient_residual: float


def lift(rect: RectifiedEnergy, u_eps_scalar: Curve, m_eps: Optional[Callable] = None) -> LiftResult:
    """Map a scalar solution through the chart: ``u_eps(t) = y(u_eps_scalar(t))``.

    The report is ``max |u_eps' + grad phi / (1 + m_eps |grad phi|)|`` over
    interior grid times with centred differences for ``u_eps'``.
    """
    if u_eps_scalar.dim != 1:
        raise InputError("u_eps_scalar must be scalar")
    sv = u_eps_scalar.values[:, 0]
    slack = 1e-9 * (1.0 + rect.L_star)
    if sv.min() < -slack or sv.max() > rect.L_star + slack:
        raise InputError("scalar curve leaves [0, L_star]")
    sv = np.clip(sv, 0.0, rect.L_star)
    Y = rect.y(sv)
    G = rect.field.grad(Y)
    gn = np.linalg.norm(G, axis=-1)
    m = np.zeros_like(sv) if m_eps is None else np.asarray(m_eps(sv), dtype=float)
    target = -G / (1.0 + m * gn)[:, None]
    t = u_eps_scalar.times
    curve = Curve(t.copy(), Y, CONTINUOUS, slopes=target)
    if len(t) < 3:
        return LiftResult(curve, 0.0)
    dY = (Y[2:] - Y[:-2]) / (t[2:] - t[:-2])[:, None]
    res = float(np.max(np.linalg.norm(dY - target[1:-1], axis=-1)))
    return LiftResult(curve, res)
