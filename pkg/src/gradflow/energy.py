"""Energies on R^d, finite point clouds and empirical moduli of continuity.

Every energy is an :class:`EnergyField`: a pair of vectorized callables
``eval`` and ``grad`` acting on arrays of shape ``(..., dim)``, together with
the constants of a quadratic lower bound

    |x|^2 / (2 tau_star) + phi(x) >= -phi_star.

The catalog functions at the bottom build the energies used throughout the
test-suite and the demos.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial import cKDTree

from .errors import InputError

DEDUP_TOL = 1e-12


def as_points(x, dim: int) -> np.ndarray:
    """Return ``x`` as a float array of shape ``(..., dim)``.

    For ``dim == 1`` a scalar or a flat vector of positions is accepted.
    """
    a = np.asarray(x, dtype=float)
    if dim == 1:
        if a.ndim == 0:
            return a.reshape(1)
        if a.shape[-1] != 1:
            return a[..., None]
        return a
    if a.ndim == 0 or a.shape[-1] != dim:
        raise InputError(f"expected trailing dimension {dim}, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class EnergyField:
    """A C^1 energy with its gradient.

    Parameters
    ----------
    dim : int
        Dimension of the ambient space.
    eval, grad : callable
        ``eval(p)`` maps ``(..., dim)`` to ``(...)``; ``grad(p)`` maps
        ``(..., dim)`` to ``(..., dim)``.
    tau_star, phi_star : float or None
        Constants of the quadratic lower bound. ``tau_star=None`` means the
        energy is bounded below, so every step size is admissible.
    lip_bound : float or None
        Global bound on ``|grad|`` when one is known.
    label : str
        Catalog name used in manifests.
    flow_time : callable or None
        For scalar energies, an increasing primitive of ``1 / |phi'|`` when
        one is known in closed form; flow times between two points are then
        differences of it instead of quadratures.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    tau_star: Optional[float] = None
    phi_star: Optional[float] = None
    lip_bound: Optional[float] = None
    label: str = "energy"
    flow_time: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def value(self, x):
        v = np.asarray(self.eval(as_points(x, self.dim)), dtype=float)
        return float(v) if v.ndim == 0 else v

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.grad(as_points(x, self.dim)), dtype=float)

    def grad_norm(self, x) -> np.ndarray:
        return np.linalg.norm(self.gradient(x), axis=-1)

    def check_step(self, tau: float) -> None:
        if not tau > 0:
            raise InputError(f"step size must be positive, got {tau}")
        if self.tau_star is not None and tau >= self.tau_star:
            raise InputError(f"step size {tau} must be below tau_star={self.tau_star}")


def grad_consistency(field: EnergyField, probes, h: float = 1e-6) -> float:
    """Largest relative mismatch between ``grad`` and central differences of ``eval``."""
    p = as_points(probes, field.dim).reshape(-1, field.dim)
    g = field.grad(p).reshape(-1, field.dim)
    fd = np.empty_like(g)
    for k in range(field.dim):
        e = np.zeros(field.dim)
        e[k] = h
        fd[:, k] = (field.eval(p + e) - field.eval(p - e)) / (2 * h)
    err = np.linalg.norm(fd - g, axis=1) / (1.0 + np.linalg.norm(g, axis=1))
    return float(err.max()) if err.size else 0.0


def check_quadratic_bound(field: EnergyField, tau_star: float, phi_star: float,
                          box: Sequence[tuple[float, float]] | tuple[float, float],
                          n: int = 201) -> np.ndarray:
    """Grid points of ``box`` violating the quadratic lower bound.

    Returns an array of shape ``(k, dim)``; empty when the bound holds on the grid.
    """
    if np.ndim(box) == 1:
        box = [tuple(box)] * field.dim
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, field.dim)
    lhs = np.sum(grid**2, axis=1) / (2 * tau_star) + field.eval(grid)
    return grid[lhs < -phi_star - 1e-12 * (1 + abs(phi_star))]


# ---------------------------------------------------------------------------
# point clouds


class PointCloud:
    """Finite set of points in R^d, duplicates within 1e-12 merged.

    Distances and nearest points are answered through a sorted array in one
    dimension and a k-d tree otherwise.
    """

    def __init__(self, points, dim: Optional[int] = None):
        a = np.asarray(points, dtype=float)
        if dim is None:
            dim = 1 if a.ndim <= 1 else a.shape[-1]
        a = as_points(a, dim).reshape(-1, dim)
        if a.shape[0] == 0:
            raise InputError("a point cloud needs at least one point")
        if not np.all(np.isfinite(a)):
            raise InputError("point cloud contains non-finite coordinates")
        self.dim = dim
        self.points = _dedupe(a)
        if dim == 1:
            self._order = np.argsort(self.points[:, 0], kind="stable")
            self._sorted = self.points[self._order, 0]
            self._tree = None
        else:
            self._tree = cKDTree(self.points)

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Distance to the cloud and index of a nearest point, for each row of ``x``."""
        p = as_points(x, self.dim)
        shape = p.shape[:-1]
        p = p.reshape(-1, self.dim)
        if self.dim == 1:
            d, k = self.neighbors_1d(p[:, 0])
            idx = self._order[k]
        else:
            d, idx = self._tree.query(p)
        return d.reshape(shape), idx.reshape(shape)

    def neighbors_1d(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance and sorted-array position of the nearest point (ties go left)."""
        s = self._sorted
        m = len(s)
        if m == 1:
            return np.abs(q - s[0]), np.zeros(q.shape, dtype=int)
        j = s.searchsorted(q)
        j = np.minimum(np.maximum(j, 1), m - 1)
        dl = np.abs(q - s[j - 1])
        dr = np.abs(s[j] - q)
        left = dl <= dr
        return np.where(left, dl, dr), np.where(left, j - 1, j)

    def dist(self, x) -> np.ndarray:
        if self.dim == 1:
            a = np.asarray(x, dtype=float)
            if a.ndim >= 1 and a.shape[-1] == 1:
                return self.neighbors_1d(a[..., 0])[0]
        return self.nearest(x)[0]

    def contains(self, x, tol: float = 1e-9) -> np.ndarray:
        return self.dist(x) <= tol

    def within(self, center, radius: float) -> np.ndarray:
        """Indices of cloud points inside the closed ball around ``center``."""
        c = as_points(center, self.dim).reshape(self.dim)
        if self.dim == 1:
            lo = np.searchsorted(self._sorted, c[0] - radius, side="left")
            hi = np.searchsorted(self._sorted, c[0] + radius, side="right")
            return np.sort(self._order[lo:hi])
        return np.asarray(sorted(self._tree.query_ball_point(c, radius)), dtype=int)

    def union(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(np.vstack([self.points, other.points]), self.dim)


def _dedupe(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    if n < 2:
        return a.copy()
    keep = np.ones(n, dtype=bool)
    if a.shape[1] == 1:
        order = np.argsort(a[:, 0], kind="stable")
        s = a[order, 0]
        # walk groups of near-equal sorted values; keep the earliest original index
        gap = np.diff(s) > DEDUP_TOL
        group = np.concatenate([[0], np.cumsum(gap)])
        first = np.full(group[-1] + 1, n, dtype=int)
        np.minimum.at(first, group, order)
        keep[:] = False
        keep[first] = True
    else:
        tree = cKDTree(a)
        for i, j in sorted(tree.query_pairs(DEDUP_TOL)):
            if keep[i]:
                keep[j] = False
    return a[keep].copy()


def dist_to_cloud(x, cloud: PointCloud) -> np.ndarray:
    return cloud.dist(x)


# ---------------------------------------------------------------------------
# moduli of continuity


@dataclass(frozen=True)
class ModulusEstimate:
    """Concave, nondecreasing modulus of continuity sampled at ``radii``.

    Values are linearly interpolated between radii, vanish at zero and are
    replaced by the trivial bound 1 beyond the largest radius.
    """

    radii: np.ndarray
    values: np.ndarray
    probe_spacing: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size == 0:
            raise InputError("radii and values must be matching 1-D arrays")
        if np.any(np.diff(r) <= 0) or r[0] <= 0:
            raise InputError("radii must be positive and increasing")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, np.concatenate([[0.0], self.radii]),
                        np.concatenate([[0.0], self.values]))
        out = np.where(r > self.radii[-1], 1.0, out)
        out = np.where(r <= 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def inverse_below(self, level: float) -> float:
        """Largest sampled radius whose modulus value does not exceed ``level``."""
        ok = self.values <= level
        if not ok[0]:
            # interpolate on the first segment, which starts at (0, 0)
            return float(self.radii[0] * level / self.values[0])
        k = np.nonzero(ok)[0][-1]
        if k + 1 < len(self.radii):
            r0, r1 = self.radii[k], self.radii[k + 1]
            v0, v1 = self.values[k], self.values[k + 1]
            return float(r0 + (level - v0) / (v1 - v0) * (r1 - r0)) if v1 > v0 else float(r1)
        return float(self.radii[k])

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray],
                      radii: Optional[np.ndarray] = None) -> "ModulusEstimate":
        """Wrap an analytic modulus (clamped at 1, concavified)."""
        if radii is None:
            radii = default_radii(1e-14, 1e4, 4000)
        radii = np.asarray(radii, dtype=float)
        raw = np.minimum(1.0, np.maximum(0.0, np.asarray(fn(radii), dtype=float)))
        return cls(radii, concave_majorant(radii, np.maximum.accumulate(raw)))


def default_radii(r_min: float = 1e-12, r_max: float = 10.0, n: int = 2000) -> np.ndarray:
    return np.geomspace(r_min, r_max, n)


def concave_majorant(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least concave majorant through the origin, evaluated at ``x`` and clamped at 1."""
    px = np.concatenate([[0.0], x])
    py = np.concatenate([[0.0], y])
    hull: list[int] = []
    for i in range(len(px)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies on or below the chord from a to i
            cross = (px[b] - px[a]) * (py[i] - py[a]) - (py[b] - py[a]) * (px[i] - px[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    env = np.interp(x, px[hull], py[hull])
    return np.minimum(1.0, np.maximum(env, y))


class _RangeExtrema:
    """Sparse tables answering range max/min queries on a fixed array."""

    def __init__(self, a: np.ndarray):
        self.mx = [a]
        self.mn = [a]
        k = 1
        while 2 * k <= len(a):
            prev_x, prev_n = self.mx[-1], self.mn[-1]
            self.mx.append(np.maximum(prev_x[:-k], prev_x[k:]))
            self.mn.append(np.minimum(prev_n[:-k], prev_n[k:]))
            k *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Extrema over the closed index ranges ``[lo, hi]`` (requires lo <= hi)."""
        length = hi - lo + 1
        lev = np.floor(np.log2(length)).astype(int)
        mx = np.empty(lo.shape)
        mn = np.empty(lo.shape)
        for L in np.unique(lev):
            sel = lev == L
            span = 1 << L
            a, b = lo[sel], hi[sel] - span + 1
            mx[sel] = np.maximum(self.mx[L][a], self.mx[L][b])
            mn[sel] = np.minimum(self.mn[L][a], self.mn[L][b])
        return mx, mn


def estimate_modulus(field: EnergyField, cloud: PointCloud, probes, radii) -> ModulusEstimate:
    """Empirical modulus of the gradient over ``cloud``.

    For each radius ``r`` the raw value is the largest
    ``min(1, |grad(x) - grad(y)|)`` over cloud points ``x`` and probes ``y``
    with ``|x - y| <= r``. The returned envelope is the least concave
    majorant of these values through the origin. Pairs closer than one
    probe spacing may be missed, so the estimate can fall short of the true
    modulus by that much; ``probe_spacing`` records it.
    """
    radii = np.asarray(radii, dtype=float)
    probes = as_points(probes, field.dim).reshape(-1, field.dim)
    xs = cloud.points
    gx = field.grad(xs).reshape(-1, field.dim)
    gp = field.grad(probes).reshape(-1, field.dim)
    raw = np.zeros(len(radii))
    if field.dim == 1:
        order = np.argsort(probes[:, 0], kind="stable")
        ps = probes[order, 0]
        g = gp[order, 0]
        table = _RangeExtrema(g)
        spacing = float(np.max(np.diff(ps))) if len(ps) > 1 else 0.0
        for k, r in enumerate(radii):
            lo = np.searchsorted(ps, xs[:, 0] - r, side="left")
            hi = np.searchsorted(ps, xs[:, 0] + r, side="right") - 1
            ok = lo <= hi
            if not np.any(ok):
                continue
            mx, mn = table.query(lo[ok], hi[ok])
            dev = np.maximum(np.abs(mx - gx[ok, 0]), np.abs(gx[ok, 0] - mn))
            raw[k] = min(1.0, float(dev.max()))
    else:
        tree = cKDTree(probes)
        nn, _ = tree.query(probes, k=2) if len(probes) > 1 else (np.zeros((1, 2)), None)
        spacing = float(nn[:, 1].max()) if len(probes) > 1 else 0.0
        for k, r in enumerate(radii):
            best = 0.0
            for i, nbrs in enumerate(tree.query_ball_point(xs, r)):
                if nbrs:
                    best = max(best, float(np.linalg.norm(gp[nbrs] - gx[i], axis=1).max()))
                    if best >= 1.0:
                        break
            raw[k] = min(1.0, best)
    raw = np.maximum.accumulate(raw)
    return ModulusEstimate(radii, concave_majorant(radii, raw), spacing)


def probe_grid(cloud: PointCloud, margin: float, spacing: float) -> np.ndarray:
    """Uniform grid covering the cloud's bounding box inflated by ``margin``."""
    lo = cloud.points.min(axis=0) - margin
    hi = cloud.points.max(axis=0) + margin
    axes = [np.linspace(a, b, max(2, int(math.ceil((b - a) / spacing)) + 1)) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, cloud.dim)


# ---------------------------------------------------------------------------
# catalog


def _scalar(fn):
    return lambda p: fn(p[..., 0])


def _scalar_grad(fn):
    return lambda p: fn(p[..., 0])[..., None]


def quadratic(dim: int = 1, tau_star: Optional[float] = None) -> EnergyField:
    """phi(x) = |x|^2 / 2. Bounded below, so every step size is admissible."""
    return EnergyField(dim, lambda p: 0.5 * np.sum(p * p, axis=-1), lambda p: np.array(p, dtype=float),
                       tau_star=tau_star, phi_star=0.0, label="quadratic")


def constant(dim: int = 1, c: float = 0.0) -> EnergyField:
    return EnergyField(dim, lambda p: np.full(p.shape[:-1], float(c)), lambda p: np.zeros_like(p),
                       tau_star=None, phi_star=max(0.0, -c), lip_bound=0.0, label="constant")


def linear(slope: float = 1.0) -> EnergyField:
    """phi(x) = slope * x in one dimension."""
    a = float(slope)
    return EnergyField(1, _scalar(lambda x: a * x), _scalar_grad(lambda x: np.full_like(x, a)),
                       tau_star=1.0, phi_star=0.5 * a * a, lip_bound=abs(a), label="linear")


def cusp() -> EnergyField:
    """phi(x) = (4/3) sign(x) |x|^{3/2}, gradient 2 sqrt|x|.

    Zero is the only critical point, yet the flow passes through it: from
    ``u0 = 1`` every curve ``(1-t)^2`` for ``t <= 1``, a pause of arbitrary
    length at 0, then ``-(t - t1)^2`` is a solution.
    """
    return EnergyField(
        1,
        _scalar(lambda x: (4.0 / 3.0) * np.sign(x) * np.abs(x) ** 1.5),
        _scalar_grad(lambda x: 2.0 * np.sqrt(np.abs(x))),
        tau_star=1.0, phi_star=8.0 / 3.0, label="cusp",
    )


def cusp_plane() -> EnergyField:
    """Cusp in the first coordinate plus x2^2 / 2; used for straight-line lifts."""
    def ev(p):
        x = p[..., 0]
        return (4.0 / 3.0) * np.sign(x) * np.abs(x) ** 1.5 + 0.5 * p[..., 1] ** 2

    def gr(p):
        return np.stack([2.0 * np.sqrt(np.abs(p[..., 0])), p[..., 1]], axis=-1)

    return EnergyField(2, ev, gr, tau_star=1.0, phi_star=8.0 / 3.0, label="cusp_plane")


def multicusp(centers: Sequence[float]) -> EnergyField:
    """Energy with gradient ``2 sqrt(dist(x, centers))``.

    Each center is a critical point the downward flow passes through in
    finite time, so solutions may pause at any subset of them.
    """
    c = np.sort(np.asarray(centers, dtype=float))
    if c.size == 0:
        raise InputError("multicusp needs at least one center")
    mids = 0.5 * (c[1:] + c[:-1])

    def piece(x, j):
        d = x - c[j]
        return (4.0 / 3.0) * np.sign(d) * np.abs(d) ** 1.5

    # constants making the piecewise primitive continuous
    const = np.zeros(len(c))
    for j in range(1, len(c)):
        const[j] = const[j - 1] + piece(mids[j - 1], j - 1) - piece(mids[j - 1], j)

    def region(x):
        return np.searchsorted(mids, x, side="left")

    def ev(x):
        j = region(x)
        return const[j] + piece(x, j)

    def gr(x):
        j = region(x)
        return 2.0 * np.sqrt(np.abs(x - c[j]))

    xs = np.linspace(c[0] - 20.0, c[-1] + 20.0, 400001)
    phi_star = float(-(0.5 * xs**2 + ev(xs)).min()) + 1e-6
    return EnergyField(1, _scalar(ev), _scalar_grad(gr), tau_star=1.0, phi_star=phi_star,
                       label="multicusp")


def circle_valley(k: float = 10.0, b: float = 0.5) -> EnergyField:
    """``k (|x| - 1)^2 / 2 + b * atan2(x2, x1)`` on the plane cut along the negative x1 axis.

    Flows spiral clockwise onto the unit circle; curves stay valid until
    they reach the cut.
    """
    def ev(p):
        r = np.hypot(p[..., 0], p[..., 1])
        return 0.5 * k * (r - 1.0) ** 2 + b * np.arctan2(p[..., 1], p[..., 0])

    def gr(p):
        x, y = p[..., 0], p[..., 1]
        r2 = x * x + y * y
        r = np.sqrt(r2)
        radial = k * (r - 1.0) / r
        return np.stack([radial * x - b * y / r2, radial * y + b * x / r2], axis=-1)

    return EnergyField(2, ev, gr, label="circle_valley")


def negabs() -> EnergyField:
    """phi(x) = -|x|; from zero the proximal step has two minimizers."""
    return EnergyField(1, _scalar(lambda x: -np.abs(x)), _scalar_grad(lambda x: -np.sign(x)),
                       tau_star=2.0, phi_star=1.0, lip_bound=1.0, label="negabs")


def double_well(tilt: float = 0.0) -> EnergyField:
    """phi(x) = (x^2 - 1)^2 / 4 + tilt * x."""
    t = float(tilt)
    return EnergyField(1, _scalar(lambda x: 0.25 * (x * x - 1.0) ** 2 + t * x),
                       _scalar_grad(lambda x: x * (x * x - 1.0) + t),
                       tau_star=None, phi_star=None, label="double_well")


def plateau(a: float = -0.5, b: float = 0.5) -> EnergyField:
    """phi(x) = dist(x, [a, b])^2 / 2: a whole interval of critical points."""
    def d(x):
        return np.where(x < a, x - a, np.where(x > b, x - b, 0.0))

    return EnergyField(1, _scalar(lambda x: 0.5 * d(x) ** 2), _scalar_grad(d),
                       tau_star=None, phi_star=0.0, label="plateau")


def tabulated(x, phi, grad, label: str = "tabulated") -> EnergyField:
    """One-dimensional energy from samples of phi and its derivative.

    Cubic Hermite interpolation reproduces the tabulated values and slopes,
    and its derivative is used as the gradient so the two stay consistent.
    Outside the table the energy is continued linearly.
    """
    x = np.asarray(x, dtype=float)
    phi = np.asarray(phi, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
        raise InputError("tabulated energy needs strictly increasing abscissae")
    spl = CubicHermiteSpline(x, phi, grad, extrapolate=False)
    dspl = spl.derivative()
    lo, hi = x[0], x[-1]

    def ev(z):
        zc = np.clip(z, lo, hi)
        out = spl(zc)
        return out + np.where(z < lo, (z - lo) * grad[0], 0.0) + np.where(z > hi, (z - hi) * grad[-1], 0.0)

    def gr(z):
        zc = np.clip(z, lo, hi)
        return np.where(z < lo, grad[0], np.where(z > hi, grad[-1], dspl(zc)))

    lip = float(np.max(np.abs(dspl(np.linspace(lo, hi, 20 * x.size)))))
    lip = max(lip, abs(grad[0]), abs(grad[-1]))
    span = max(abs(lo), abs(hi))
    # linear tails: |x|^2/2 + phi is bounded below by a computable constant
    zs = np.linspace(lo - 2 * lip - 1, hi + 2 * lip + 1, 20001)
    phi_star = float(-(0.5 * zs**2 + ev(zs)).min()) + 1e-9 * (1 + span)
    return EnergyField(1, _scalar(ev), _scalar_grad(gr), tau_star=1.0, phi_star=max(phi_star, 0.0),
                       lip_bound=lip, label=label)


def load_tabulated(path) -> EnergyField:
    """Read a CSV with columns ``x, phi, grad`` (one-dimensional tables only)."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    if names is None or len(names) != 3:
        raise InputError("tabulated energies are supported in one dimension: columns x, phi, grad")
    cols = [np.atleast_1d(data[n]) for n in names]
    return tabulated(cols[0], cols[1], cols[2], label=f"table:{path}")


_CATALOG: dict[str, Callable[..., EnergyField]] = {
    "quadratic": quadratic,
    "constant": constant,
    "linear": linear,
    "cusp": cusp,
    "cusp_plane": cusp_plane,
    "circle_valley": circle_valley,
    "multicusp": multicusp,
    "negabs": negabs,
    "double_well": double_well,
    "plateau": plateau,
}


def catalog_names() -> list[str]:
    return sorted([*_CATALOG, "cantor", "table"])


def get_energy(spec) -> EnergyField:
    """Build an energy from a name or a ``{"name": ..., **params}`` mapping.

    ``{"table": path}`` loads a tabulated energy; ``{"name": "cantor",
    "depth": d}`` builds the singular example.
    """
    if isinstance(spec, EnergyField):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    if "table" in spec:
        return load_tabulated(spec["table"])
    name = spec.pop("name", None)
    if name == "cantor":
        from .cantor import build_cantor_model, cantor_energy
        return cantor_energy(build_cantor_model(int(spec.get("depth", 6))))
    if name not in _CATALOG:
        raise InputError(f"unknown energy {name!r}; known: {', '.join(catalog_names())}")
    return _CATALOG[name](**spec)
