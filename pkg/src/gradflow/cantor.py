"""A gradient flow whose velocity field vanishes on a Cantor set.

The middle-third intervals ``I_n = (a_n, b_n)`` of ``[0, 1]`` carry rescaled
copies ``f_n(x) = (l_n / beta_n) f(L_n(x))`` of ``f(x) = pi sqrt(x (1 - x))``,
whose flow ``u(t) = 1/2 + sin(pi (t - 1/2)) / 2`` crosses ``[0, 1]`` in unit
time. Chaining the rescaled solutions gives a minimal solution ``v`` of
``v' = g(v)`` with ``g = sum f_n``; inserting the time of a Cantor measure
``mu`` gives a second solution ``w = v o eta`` that stalls on a set of
positive measure while its energy ``-G o w`` still decreases.

At depth ``d`` only the first ``d`` stages are removed. The ``2^d`` leftover
cells of the stage-``d`` Cantor approximation are crossed like one more
generation of intervals, with the discarded time budget ``sum_{k>d} 2^(k-1)
beta_k`` shared equally, so that ``v`` still runs from 0 to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import EnergyField
from .errors import InputError, ResolutionError
from .flow import CONTINUOUS, Curve
from .reparam import CRIT_TOL, construct_time_change, minimality_defect

MAX_DEPTH = 14
BETA_EXPONENT = 0.75
DEFAULT_H = 2.0 ** -14
FLOW_TOL = 1e-4
RATIO = 2.0 * 3.0 ** (-BETA_EXPONENT)


def base_profile(x):
    """``f(x) = pi sqrt(x (1 - x))`` on ``(0, 1)``, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xc = np.where(inside, x, 0.0)
    return np.where(inside, math.pi * np.sqrt(xc * (1.0 - xc)), 0.0)


def base_solution(t):
    """``u(t) = 1/2 + sin(pi (t - 1/2)) / 2`` on ``[0, 1]``, clamped to ``{0, 1}`` outside."""
    s = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return 0.5 + 0.5 * np.sin(math.pi * (s - 0.5))


def base_solution_derivative(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    return np.where(inside, 0.5 * math.pi * np.cos(math.pi * (t - 0.5)), 0.0)


def base_primitive(z):
    """``F(z) = int_0^z f``; ``F(1) = pi^2 / 8``."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    th = np.arcsin(2.0 * z - 1.0)
    return 0.125 * math.pi * (th + np.sin(th) * np.cos(th) + 0.5 * math.pi)


# ---------------------------------------------------------------------------
# model


@dataclass
class CantorModel:
    """Truncated middle-third construction.

    Attributes
    ----------
    depth : int
        Number of removed stages.
    intervals : list of (float, float)
        Removed intervals, stage by stage and left to right within a stage.
    stages : numpy.ndarray
        Stage of each removed interval.
    lengths, beta : numpy.ndarray
        ``l_n`` and ``beta_n = l_n^(3/4)`` of the removed intervals.
    B : float
        ``sum beta_n`` over the removed intervals.
    tail : float
        Time of the discarded stages, ``sum_{k>d} 2^(k-1) 3^(-3k/4)``.
    cells : numpy.ndarray
        ``(2^d, 2)`` leftover cells of the stage-``d`` approximation.
    cell_beta : float
        Crossing time of one leftover cell, ``tail / 2^d``.
    mu_atoms : numpy.ndarray
        ``(2^d, 2)`` rows ``(R(c), 2^-d)`` for the cell left endpoints ``c``.
    knots_x, knots_t : numpy.ndarray
        Endpoints of all tiles (removed intervals and leftover cells) and
        their images under ``R``.
    """

    depth: int
    intervals: list
    stages: np.ndarray
    lengths: np.ndarray
    beta: np.ndarray
    B: float
    tail: float
    cells: np.ndarray
    cell_beta: float
    mu_atoms: np.ndarray
    knots_x: np.ndarray
    knots_t: np.ndarray
    tile_beta: np.ndarray
    tile_removed: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return self.lengths / self.beta

    @property
    def mu_mass(self) -> float:
        return float(self.mu_atoms[:, 1].sum())

    @property
    def v_horizon(self) -> float:
        return float(self.knots_t[-1])

    @property
    def horizon(self) -> float:
        """Horizon of ``w``: the time of ``v`` plus the inserted ``mu`` mass."""
        return self.v_horizon + self.mu_mass

    @property
    def l_min(self) -> float:
        return float(np.diff(self.knots_x).min())

    @property
    def g_tail_bound(self) -> float:
        """``pi sup_{k>d} alpha_k``, the sup-norm of the discarded stages of ``g``."""
        return math.pi * 3.0 ** (-(self.depth + 1) / 4.0)

    def tile_of_x(self, x) -> np.ndarray:
        n = np.searchsorted(self.knots_x, x, side="right") - 1
        return np.clip(n, 0, self.knots_x.size - 2)

    def tile_of_t(self, t) -> np.ndarray:
        n = np.searchsorted(self.knots_t, t, side="right") - 1
        return np.clip(n, 0, self.knots_t.size - 2)

    def manifest(self) -> dict:
        return {
            "depth": self.depth,
            "beta_schedule": "l^0.75",
            "n_intervals": len(self.intervals),
            "B": self.B,
            "tail": self.tail,
            "cell_beta": self.cell_beta,
            "mu_mass": self.mu_mass,
            "v_horizon": self.v_horizon,
            "w_horizon": self.horizon,
            "g_tail_bound": self.g_tail_bound,
        }


def _stage_cells(depth: int) -> np.ndarray:
    """Integer left endpoints (in units of ``3^-depth``) of the stage-``depth`` cells."""
    c = np.zeros(1, dtype=np.int64)
    for k in range(1, depth + 1):
        c = np.concatenate([c, c + 2 * 3 ** (depth - k)])
    return np.sort(c)


def build_cantor_model(depth: int) -> CantorModel:
    """Enumerate the removed middle thirds up to ``depth`` with ``beta_n = l_n^(3/4)``.

    All endpoints are exact multiples of ``3^-depth``, so neighbouring tiles
    share their endpoints bit for bit.
    """
    depth = int(depth)
    if not 1 <= depth <= MAX_DEPTH:
        raise InputError(f"depth must lie in [1, {MAX_DEPTH}], got {depth}")
    scale = 3 ** depth
    intervals, stages, removed_int = [], [], []
    for k in range(1, depth + 1):
        unit = 3 ** (depth - k)
        for c in _stage_cells(k - 1) * 3 ** (depth - k + 1):
            lo, hi = int(c) + unit, int(c) + 2 * unit
            removed_int.append((lo, hi))
            intervals.append((lo / scale, hi / scale))
            stages.append(k)
    stages = np.array(stages)
    lengths = 3.0 ** (-stages.astype(float))
    beta = 3.0 ** (-BETA_EXPONENT * stages)
    B = float(beta.sum())
    tail = 2.0 ** depth * 3.0 ** (-BETA_EXPONENT * (depth + 1)) / (1.0 - RATIO)
    cell_beta = tail / 2 ** depth

    cell_int = _stage_cells(depth)
    tiles = sorted([(lo, hi, True) for lo, hi in removed_int]
                   + [(int(c), int(c) + 1, False) for c in cell_int])
    knots_int = np.array([tiles[0][0]] + [hi for _, hi, _ in tiles])
    knots_x = knots_int / scale
    removed = np.array([r for _, _, r in tiles])
    stage_of_tile = np.rint(np.log(scale / np.diff(knots_int)) / math.log(3)).astype(int)
    tile_beta = np.where(removed, 3.0 ** (-BETA_EXPONENT * stage_of_tile), cell_beta)
    knots_t = np.concatenate([[0.0], np.cumsum(tile_beta)])

    cells = np.column_stack([cell_int / scale, (cell_int + 1) / scale])
    at = knots_t[np.searchsorted(knots_x, cells[:, 0])]
    mu_atoms = np.column_stack([at, np.full(at.size, 2.0 ** -depth)])
    return CantorModel(depth, intervals, stages, lengths, beta, B, tail, cells, cell_beta,
                       mu_atoms, knots_x, knots_t, tile_beta, removed)


# ---------------------------------------------------------------------------
# g, G, R, S, psi, eta


@dataclass
class CantorProfile:
    """``g = sum f_n``, evaluated exactly; ``grid``/``values`` hold its samples."""

    model: CantorModel
    grid: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        m = self.model
        x = np.asarray(x, dtype=float)
        n = m.tile_of_x(x)
        l = m.knots_x[n + 1] - m.knots_x[n]
        L = (x - m.knots_x[n]) / l
        out = (l / m.tile_beta[n]) * base_profile(L)
        return np.where((x > 0) & (x < 1), out, 0.0)

    def primitive(self, x):
        """``G(x) = int_0^x g``."""
        m = self.model
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        l_all = np.diff(m.knots_x)
        w = l_all * l_all / m.tile_beta
        G_knots = np.concatenate([[0.0], np.cumsum(w * base_primitive(1.0))])
        n = m.tile_of_x(x)
        L = (x - m.knots_x[n]) / l_all[n]
        return G_knots[n] + w[n] * base_primitive(L)

    @property
    def total(self) -> float:
        """``G(1) - G(0)``."""
        return float(self.primitive(1.0))

    @property
    def sup(self) -> float:
        return 0.5 * math.pi * float((np.diff(self.model.knots_x) / self.model.tile_beta).max())


def cantor_energy(model: CantorModel) -> EnergyField:
    """The energy ``phi = -G`` with gradient ``-g``."""
    g = CantorProfile(model, np.empty(0), np.empty(0))

    def ev(p):
        return -g.primitive(p[..., 0])

    def gr(p):
        return -g(p[..., 0])[..., None]

    def clock(x):
        # time v needs to reach x: the inverse of the rescaled sine solution
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        n = model.tile_of_x(x)
        L = (x - model.knots_x[n]) / (model.knots_x[n + 1] - model.knots_x[n])
        s = 0.5 + np.arcsin(np.clip(2.0 * L - 1.0, -1.0, 1.0)) / math.pi
        return model.knots_t[n] + model.tile_beta[n] * s

    return EnergyField(1, ev, gr, lip_bound=g.sup, label=f"cantor(depth={model.depth})",
                       flow_time=clock)


@dataclass
class PiecewiseLinearMap:
    """Monotone map given by its breakpoints, evaluated by linear interpolation."""

    x: np.ndarray
    y: np.ndarray

    def __call__(self, s):
        return np.interp(s, self.x, self.y)

    def inverse(self) -> "PiecewiseLinearMap":
        return PiecewiseLinearMap(self.y, self.x)


@dataclass
class AtomicClock:
    """``psi(t) = t + mu([0, t))`` for a purely atomic ``mu``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return t + cum[np.searchsorted(self.atoms, t, side="left")]


@dataclass
class CantorFlows:
    """Realized maps of the construction; unpacks as ``(g, R, S, v, psi, eta, w)``."""

    model: CantorModel
    field: EnergyField
    h: float
    g: CantorProfile
    R: PiecewiseLinearMap
    S: PiecewiseLinearMap
    v: Curve
    psi: AtomicClock
    eta: PiecewiseLinearMap
    w: Curve
    residual_v: float
    residual_w: float
    crit_measure_v: float
    crit_measure_w: float
    crit_tol: float

    def __iter__(self):
        return iter((self.g, self.R, self.S, self.v, self.psi, self.eta, self.w))

    def tables(self) -> dict:
        """CSV tables ``name -> (header, rows)``."""
        w_energy = -self.g.primitive(self.w.scalar())
        return {
            "g": (["x", "g"], np.column_stack([self.g.grid, self.g.values])),
            "v": (["t", "v"], np.column_stack([self.v.times, self.v.scalar()])),
            "w": (["s", "w", "eta"], np.column_stack([self.w.times, self.w.scalar(),
                                                       self.eta(self.w.times)])),
            "psi": (["t", "psi"], np.column_stack([self.v.times, self.psi(self.v.times)])),
            "energy_w": (["s", "minus_G_of_w"], np.column_stack([self.w.times, w_energy])),
        }


def _v_grid(model: CantorModel, h: float) -> np.ndarray:
    """Tile endpoints plus a uniform subdivision of each tile with spacing at most ``h``."""
    t0, beta = model.knots_t[:-1], model.tile_beta
    m = np.maximum(1, np.ceil(beta / h - 1e-9)).astype(int)
    idx = np.repeat(np.arange(beta.size), m)
    j = np.arange(idx.size) - np.repeat(np.cumsum(m) - m, m)
    t = t0[idx] + beta[idx] * (j / m[idx])
    return np.append(t, model.knots_t[-1])


def _v_values(model: CantorModel, t: np.ndarray):
    n = model.tile_of_t(t)
    beta = model.tile_beta[n]
    s = np.clip((t - model.knots_t[n]) / beta, 0.0, 1.0)
    l = model.knots_x[n + 1] - model.knots_x[n]
    x = model.knots_x[n] + l * base_solution(s)
    x = np.where(s == 1.0, model.knots_x[n + 1], x)
    return x, (l / beta) * base_solution_derivative(s)


def flow_residual(curve: Curve, g) -> float:
    """``max |curve' - g(curve)|`` at the nodes and cell midpoints of ``curve``."""
    t = curve.times
    probe = np.concatenate([t, 0.5 * (t[1:] + t[:-1])])
    lhs = curve.derivative(probe)[:, 0]
    rhs = g(curve(probe)[:, 0])
    return float(np.abs(lhs - rhs).max())


def cantor_flows(model: CantorModel, h: float = DEFAULT_H, crit_tol: float = CRIT_TOL) -> CantorFlows:
    """Realize ``g, R, S, v, psi, eta, w`` on grids of spacing ``h``.

    Raises
    ------
    ResolutionError
        If ``h > l_min / 16`` for the smallest tile length ``l_min``.
    """
    if not h > 0:
        raise InputError("grid spacing must be positive")
    if h > model.l_min / 16:
        raise ResolutionError(f"grid spacing {h:.3g} exceeds l_min/16 = {model.l_min / 16:.3g}; "
                              f"depth {model.depth} needs h <= {model.l_min / 16:.3g}")
    field = cantor_energy(model)
    nx = int(math.ceil(1.0 / h))
    xg = np.linspace(0.0, 1.0, nx + 1)
    g = CantorProfile(model, xg, np.empty(0))
    g.values = g(xg)

    R = PiecewiseLinearMap(model.knots_x, model.knots_t)
    S = R.inverse()

    tv = _v_grid(model, h)
    xv, dv = _v_values(model, tv)
    v = Curve(tv, xv, CONTINUOUS, slopes=dv)

    atoms, weights = model.mu_atoms[:, 0], model.mu_atoms[:, 1]
    psi = AtomicClock(atoms, weights)
    # w: every node of v shifted by psi; each atom node is followed by a flat run
    is_atom = np.zeros(tv.size, dtype=bool)
    atom_idx = np.searchsorted(tv, atoms)
    is_atom[atom_idx] = True
    n_flat = np.maximum(1, np.ceil(weights / h - 1e-9)).astype(int)
    reps = np.ones(tv.size, dtype=int)
    reps[atom_idx] += n_flat
    src = np.repeat(np.arange(tv.size), reps)
    j = np.arange(src.size) - np.repeat(np.cumsum(reps) - reps, reps)
    flat_frac = np.zeros(src.size)
    extra = np.zeros(tv.size)
    extra[atom_idx] = weights / n_flat
    flat_frac = j * extra[src]
    s = psi(tv)[src] + flat_frac
    w = Curve(s, xv[src], CONTINUOUS, slopes=np.where(j > 0, 0.0, dv[src]))
    eta = PiecewiseLinearMap(s, tv[src])

    return CantorFlows(
        model, field, h, g, R, S, v, psi, eta, w,
        residual_v=flow_residual(v, g),
        residual_w=flow_residual(w, g),
        crit_measure_v=minimality_defect(field, v, crit_tol),
        crit_measure_w=minimality_defect(field, w, crit_tol),
        crit_tol=crit_tol,
    )


# ---------------------------------------------------------------------------
# report


@dataclass
class NonminimalityReport:
    """Evidence that ``w`` is a non-minimal solution with strictly decreasing energy.

    ``stagnation`` is the time ``w`` spends on exact plateaus; the energy
    check passes when every cell where ``w`` moves lowers ``-G o w`` and
    the plateau time matches the dwell measured through ``|g(w)| <= tol``.
    """

    depth: int
    mu_mass: float
    defect_v: float
    defect_w: float
    residual_v: float
    residual_w: float
    eta_lipschitz_violation: float
    eta_monotonicity_violation: float
    time_change_ok: bool
    time_change_error: float
    drop_v: float
    drop_w: float
    drop_exact: float
    moving_cells: int
    strict_drops: int
    stagnation: float
    stagnation_mismatch: float
    defect_v_bound: float = 0.05
    flow_tol: float = FLOW_TOL
    drop_tol: float = 1e-6

    @property
    def checks(self) -> dict:
        return {
            "flow_residual_v": self.residual_v <= self.flow_tol,
            "flow_residual_w": self.residual_w <= self.flow_tol,
            "defect_v": self.defect_v <= self.defect_v_bound,
            "defect_w": self.defect_w >= 0.5 * self.mu_mass,
            "w_succ_v": self.time_change_ok and self.eta_lipschitz_violation <= 1e-9
            and self.eta_monotonicity_violation <= 1e-12,
            "energy_drop": abs(self.drop_w - self.drop_exact) <= self.drop_tol
            and abs(self.drop_v - self.drop_exact) <= self.drop_tol,
            "strict_decrease": self.strict_drops == self.moving_cells
            and self.stagnation_mismatch <= self.defect_v + 10 * self.residual_w,
        }

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["checks"] = self.checks
        out["ok"] = self.ok
        return out


def demonstrate_nonminimality(model: CantorModel, tol: float = CRIT_TOL,
                              flows: CantorFlows | None = None,
                              h: float = DEFAULT_H) -> NonminimalityReport:
    """Measure defects of ``v`` and ``w``, witness ``w`` above ``v`` and audit ``-G o w``."""
    fl = flows if flows is not None else cantor_flows(model, h=h, crit_tol=tol)
    field, v, w, g = fl.field, fl.v, fl.w, fl.g
    if fl.crit_tol == tol:
        dv, dw = fl.crit_measure_v, fl.crit_measure_w
    else:
        dv, dw = minimality_defect(field, v, tol), minimality_defect(field, w, tol)

    eta_vals = fl.eta(w.times)
    d_eta = np.diff(eta_vals)
    D = eta_vals - w.times
    lip = float(np.max(D - np.minimum.accumulate(D)))
    mono = float(max(0.0, -d_eta.min()))
    tc = construct_time_change(field, w, v)
    tc_err = float(np.abs(tc.values - eta_vals).max())

    Ew = -g.primitive(w.scalar())
    Ev = -g.primitive(v.scalar())
    dE = np.diff(Ew)
    moving = np.diff(w.scalar()) != 0
    stagnation = float(np.diff(w.times)[~moving].sum())
    return NonminimalityReport(
        depth=model.depth, mu_mass=model.mu_mass, defect_v=dv, defect_w=dw,
        residual_v=fl.residual_v, residual_w=fl.residual_w,
        eta_lipschitz_violation=lip, eta_monotonicity_violation=mono,
        time_change_ok=bool(tc.ok), time_change_error=tc_err,
        drop_v=float(Ev[0] - Ev[-1]), drop_w=float(Ew[0] - Ew[-1]), drop_exact=g.total,
        moving_cells=int(moving.sum()), strict_drops=int((dE[moving] < 0).sum()),
        stagnation=stagnation, stagnation_mismatch=abs(dw - stagnation),
    )
