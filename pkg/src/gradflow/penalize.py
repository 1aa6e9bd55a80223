"""Distance-penalized energies and the parameter rules that confine discrete solutions.

Adding ``lam * dist(., U)`` to ``phi`` makes every proximal step from a
point of ``U`` land back in ``U`` as soon as ``U`` is nearly invariant for
one explicit step and

    lam^2 > 14 L omega(3 L tau) + 2 delta^2,       lam < 1/4.

Sampling a prescribed solution ``u`` at the step size and penalizing the
distance to the samples therefore forces all discrete solutions to follow
``u``. This module implements the sampling, the selection rules for
``lam`` and ``tau_bar``, a verifier for the confinement claim, and the
family ``phi_tau`` built from a ladder ``eps_n -> 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .energy import (EnergyField, ModulusEstimate, PointCloud, as_points, default_radii,
                     estimate_modulus, probe_grid)
from .errors import HorizonError, InfeasibleError, InputError
from .flow import Curve
from .mm import DEFAULT, MMResult, ProxConfig, euler_residuals, interpolate_pc, n_steps, run_mm

LAMBDA_STEP = 1e-4
MEMBER_TOL = 1e-9


def sample_range(u: Curve, tau: float, T: float) -> PointCloud:
    """The samples ``u(n tau)`` for ``0 <= n <= min{n : n tau >= T}``."""
    if not tau > 0 or T < 0:
        raise InputError("sample_range needs tau > 0 and T >= 0")
    N = n_steps(tau, T) if T > 0 else 0
    times = tau * np.arange(N + 1)
    if times[-1] > u.horizon * (1 + 1e-12) + 1e-12:
        raise InputError(f"curve horizon {u.horizon} shorter than the last sample time {times[-1]}")
    return PointCloud(u(times), u.dim)


def lambda_threshold(L: float, omega: ModulusEstimate, tau: float, delta: float) -> float:
    return 14.0 * L * float(omega(3.0 * L * tau)) + 2.0 * delta * delta


def select_lambda(L: float, omega: ModulusEstimate, tau: float, delta: float) -> float:
    """Smallest ``lam`` on the ``1e-4`` lattice with ``lam^2 > 14 L omega(3 L tau) + 2 delta^2``."""
    if L < 1:
        raise InputError("L must be at least 1")
    if not 0 <= delta < 0.25:
        raise InputError("delta must lie in [0, 1/4)")
    thr = lambda_threshold(L, omega, tau, delta)
    k = int(math.floor(math.sqrt(thr) / LAMBDA_STEP)) + 1
    while (k * LAMBDA_STEP) ** 2 <= thr:
        k += 1
    lam = round(k * LAMBDA_STEP, 10)
    if lam >= 0.25:
        raise InfeasibleError(
            f"lambda^2 must exceed {thr:.4g} but lambda < 1/4 allows at most 0.0625; "
            f"the step size {tau:g} is too large for this cloud")
    return lam


def select_tau_bar(L: float, omega: ModulusEstimate, eps: float, tau_cloud: float = math.inf) -> float:
    """Largest ``2^-k`` with ``(14L+1) omega(3L tau) < eps^2/2``, ``omega(L tau) <= eps/4``
    and ``tau < min(1, tau_cloud)``."""
    if not 0 < eps < 0.25:
        raise InputError("eps must lie in (0, 1/4)")
    delta = eps / 2.0
    cap = min(1.0, tau_cloud)
    for k in range(0, 400):
        tau = 2.0 ** -k
        if tau >= cap:
            continue
        if (14 * L + 1) * float(omega(3 * L * tau)) < eps * eps / 2 and float(omega(L * tau)) <= delta / 2:
            return tau
    raise InfeasibleError("no admissible tau_bar above 2^-400")


def cloud_lipschitz(field: EnergyField, cloud: PointCloud) -> float:
    """``L_U = max(1, max_U |grad phi|)``."""
    return max(1.0, float(np.max(np.linalg.norm(field.grad(cloud.points), axis=-1))))


def cloud_modulus(field: EnergyField, cloud: PointCloud, r_max: float, spacing: float,
                  n_radii: int = 400) -> ModulusEstimate:
    """Modulus over ``cloud`` with probes on a box grid inflated by ``r_max``."""
    probes = probe_grid(cloud, r_max, spacing)
    radii = default_radii(max(spacing, 1e-14), r_max, n_radii)
    return estimate_modulus(field, cloud, probes, radii)


def estimate_tau_cloud(field: EnergyField, cloud: PointCloud,
                       omega: Optional[ModulusEstimate] = None) -> float:
    """Step-size cap below which near-minimizers stay where ``omega <= 1/2``.

    With ``c = 4 tau tau_* / (tau_* - tau)`` and
    ``A = max_U phi + 1/2 + phi_* + max_U |z|^2 / (tau_* - tau)``, any ``y``
    with ``phi(y) + |x-y|^2/(2 tau) <= phi(x) + |x-y|`` satisfies
    ``|x-y|^2 <= 2 c A`` once ``c <= 1``. The returned value is the largest
    ``2^-k < tau_*`` with ``c <= 1`` and ``c A < rbar^2 / 2``.
    """
    ts, ps = field.tau_star, field.phi_star
    if ts is None or ps is None:
        raise InputError("estimate_tau_cloud needs tau_star and phi_star")
    if omega is None:
        omega = cloud_modulus(field, cloud, r_max=4.0, spacing=1e-3)
    rbar = omega.inverse_below(0.5)
    M = float(np.max(field.eval(cloud.points)))
    z2 = float(np.max(np.sum(cloud.points ** 2, axis=-1)))
    for k in range(0, 400):
        tau = 2.0 ** -k
        if tau >= ts:
            continue
        c = 4 * tau * ts / (ts - tau)
        A = M + 0.5 + ps + z2 / (ts - tau)
        if c <= 1 and c * A < rbar * rbar / 2:
            return tau
    raise InfeasibleError("no admissible tau_U above 2^-400")


# ---------------------------------------------------------------------------
# penalized energies


class PenalizedEnergy:
    """``phi + lam * dist(., cloud)``.

    The gradient is only defined off the cloud and off the medial axis
    (points with two nearest cloud points); elsewhere it is NaN.
    """

    def __init__(self, base: EnergyField, cloud: PointCloud, lam: float):
        if lam < 0:
            raise InputError("lambda must be nonnegative")
        if cloud.dim != base.dim:
            raise InputError("cloud and energy dimensions differ")
        self.base = base
        self.cloud = cloud
        self.lam = float(lam)
        self.dim = base.dim
        self.tau_star = base.tau_star
        self.phi_star = base.phi_star
        self.lip_bound = None if base.lip_bound is None else base.lip_bound + self.lam
        self.label = f"{base.label}+{self.lam:g}*dist"

    def eval(self, p):
        return self.base.eval(p) + self.lam * self.cloud.dist(p)

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        g = np.array(self.base.grad(p), dtype=float)
        if self.lam == 0:
            return g
        flat = p.reshape(-1, self.dim)
        gflat = g.reshape(-1, self.dim)
        if self.dim == 1:
            s = self.cloud._sorted
            q = flat[:, 0]
            j = s.searchsorted(q)
            left = np.where(j > 0, q - s[np.maximum(j - 1, 0)], np.inf)
            right = np.where(j < len(s), s[np.minimum(j, len(s) - 1)] - q, np.inf)
            d = np.minimum(left, right)
            tie = np.abs(left - right) <= 1e-12 * (1 + d)
            dg = np.where((d <= 0) | tie, np.nan, np.where(left < right, 1.0, -1.0))
            gflat = gflat + self.lam * dg[:, None]
        else:
            k = min(2, len(self.cloud))
            d, idx = self.cloud._tree.query(flat, k=k)
            d = np.atleast_2d(d.T).T if k == 1 else d
            idx = idx if k > 1 else idx[:, None]
            near = self.cloud.points[idx[:, 0]]
            diff = flat - near
            nd = np.linalg.norm(diff, axis=1)
            bad = nd <= 0
            if k == 2:
                bad |= np.abs(d[:, 1] - d[:, 0]) <= 1e-12 * (1 + d[:, 0])
            unit = diff / np.where(nd > 0, nd, 1.0)[:, None]
            unit[bad] = np.nan
            gflat = gflat + self.lam * unit
        return gflat.reshape(g.shape)

    def value(self, x):
        v = np.asarray(self.eval(as_points(x, self.dim)), dtype=float)
        return float(v) if v.ndim == 0 else v

    def gradient(self, x):
        return self.grad(as_points(x, self.dim))

    def check_step(self, tau: float) -> None:
        self.base.check_step(tau)


def make_penalized(field: EnergyField, cloud: PointCloud, lam: float) -> PenalizedEnergy:
    return PenalizedEnergy(field, cloud, lam)


# ---------------------------------------------------------------------------
# confinement


@dataclass
class ConfinementReport:
    """Outcome of :func:`verify_confinement`.

    ``hypothesis`` rows are ``(index of x, index of witness z, residual)``
    with residual ``|(z - x)/tau + grad phi(z)|`` (``nan`` when no cloud
    point qualifies). ``membership`` maps branch ids to boolean arrays over
    steps ``0..N``.
    """

    lam: float
    tau: float
    delta: float
    L: float
    hypothesis: np.ndarray
    hypothesis_ok: bool
    membership: dict
    escapes: int
    residual_upper_violations: int
    residual_lower_violations: int
    step_bound_violations: int
    max_residual: float
    slack: float
    truncated: bool
    run: MMResult = dc_field(repr=False, default=None)

    @property
    def all_confined(self) -> bool:
        return self.escapes == 0

    @property
    def membership_fraction(self) -> float:
        tot = sum(m.size for m in self.membership.values())
        ok = sum(int(m.sum()) for m in self.membership.values())
        return ok / tot if tot else 1.0

    def to_json(self) -> dict:
        return {
            "lambda": self.lam, "tau": self.tau, "delta": self.delta, "L": self.L,
            "hypothesis_ok": self.hypothesis_ok,
            "hypothesis_failures": int(np.sum(~np.isfinite(self.hypothesis[:, 2])
                                              | (self.hypothesis[:, 2] > self.delta))),
            "branches": {k: {"steps": int(v.size), "in_cloud": int(v.sum())}
                         for k, v in sorted(self.membership.items())},
            "escapes": self.escapes,
            "residual_upper_violations": self.residual_upper_violations,
            "residual_lower_violations": self.residual_lower_violations,
            "step_bound_violations": self.step_bound_violations,
            "max_residual": self.max_residual, "slack": self.slack,
            "truncated": self.truncated,
        }


def hypothesis_table(field: EnergyField, cloud: PointCloud, tau: float, delta: float) -> np.ndarray:
    """Best witness ``z`` in the cloud for each ``x``: rows ``(i, j, residual)``."""
    pts = cloud.points
    g = field.grad(pts).reshape(len(cloud), cloud.dim)
    L = cloud_lipschitz(field, cloud)
    reach = tau * (L + delta) * (1 + 1e-9) + 1e-15
    rows = np.empty((len(cloud), 3))
    for i, x in enumerate(pts):
        idx = cloud.within(x, reach)
        if idx.size == 0:
            rows[i] = (i, -1, np.nan)
            continue
        r = np.linalg.norm((pts[idx] - x) / tau + g[idx], axis=-1)
        k = int(np.argmin(r))
        rows[i] = (i, idx[k], r[k])
    return rows


def verify_confinement(field: EnergyField, cloud: PointCloud, lam: float, tau: float, u0, N: int,
                       delta: Optional[float] = None, cfg: ProxConfig = DEFAULT,
                       check_hypothesis: bool = True, exempt_terminal: bool = True) -> ConfinementReport:
    """Run all branches of the penalized scheme and check they stay in ``cloud``.

    Also records the hypothesis table (default ``delta = lam / 2``), the
    residual law ``|xi_n| <= lam + slack`` with ``|xi_n| >= lam - slack``
    for steps that leave the cloud, and the step bound
    ``|U^n - U^{n-1}| <= 2 L tau``.

    With ``exempt_terminal`` the last cloud point (the final sample of a
    curve) is left out of ``hypothesis_ok``: an ``N``-step run never starts
    a step from it, and it has no successor sample to act as witness.
    """
    x0 = as_points(u0, field.dim).reshape(field.dim)
    if not cloud.contains(x0, MEMBER_TOL).item():
        raise InputError("u0 must belong to the cloud")
    delta = lam / 2 if delta is None else delta
    L = cloud_lipschitz(field, cloud)
    hyp = hypothesis_table(field, cloud, tau, delta) if check_hypothesis else np.zeros((0, 3))
    rows = hyp[:-1] if exempt_terminal and len(hyp) > 1 else hyp
    hyp_ok = bool(np.all(np.isfinite(rows[:, 2]) & (rows[:, 2] <= delta))) if rows.size else True
    pen = make_penalized(field, cloud, lam)
    run = run_mm(pen, x0, tau, N, "all-branches", cfg)
    membership = {}
    escapes = up = low = stepv = 0
    max_res = 0.0
    slack = 0.0
    for seq in run:
        mem = cloud.contains(seq.values, MEMBER_TOL)
        membership[seq.branch_id] = mem
        escapes += int((~mem).sum())
        xi = euler_residuals(field, seq)
        eta = seq.slack + 1e-12 * (1 + lam)
        slack = max(slack, seq.slack)
        if xi.size:
            max_res = max(max_res, float(xi.max()))
            up += int(np.sum(xi > lam + eta))
            low += int(np.sum((xi < lam - eta) & ~mem[1:]))
            steps = np.linalg.norm(np.diff(seq.values, axis=0), axis=-1)
            stepv += int(np.sum(steps > 2 * L * tau * (1 + 1e-12) + 1e-15))
    return ConfinementReport(lam, tau, delta, L, hyp, hyp_ok, membership, escapes, up, low, stepv,
                             max_res, slack, run.truncated, run)


def energy_domination_excess(field: EnergyField, branches, u: Curve, T: float) -> float:
    """Largest ``phi(U_tau(t)) - phi(u(min(t, T)))`` over branch grids and the curve grid."""
    worst = -math.inf
    for seq in branches:
        U = interpolate_pc(seq)
        t = np.union1d(U.times, u.times[u.times <= U.horizon])
        lhs = field.eval(U(t))
        rhs = field.eval(u(np.minimum(t, T)))
        worst = max(worst, float(np.max(lhs - rhs)))
    return worst


# ---------------------------------------------------------------------------
# the phi_tau family


def find_horizon(field: EnergyField, u: Curve, eps: float, enforce_min: bool = True,
                 mode: str = "auto", C: Optional[float] = None) -> float:
    """Horizon ``T_bar`` for the penalization at level ``eps``.

    Bounded case: the first grid time ``t >= 1/eps`` (or ``>= 0`` when
    ``enforce_min`` is off) with ``|grad phi(u(t))| <= eps/4``. Unbounded
    case: the first such time with ``phi(u(t)) < phi(u(0)) - C``.
    """
    t0 = 1.0 / eps if enforce_min else 0.0
    times = u.times
    sel = times >= t0 - 1e-12
    if mode in ("auto", "bounded"):
        g = np.linalg.norm(field.grad(u.values), axis=-1)
        hit = np.nonzero(sel & (g <= eps / 4))[0]
        if hit.size:
            return float(times[hit[0]])
        if mode == "bounded":
            raise HorizonError(f"no sample after t={t0:g} has |grad phi| <= {eps / 4:g}; extend the curve")
    if C is None:
        C = a_priori_constant(field, u)
    e = field.eval(u.values)
    hit = np.nonzero(sel & (e < e[0] - C))[0]
    if hit.size:
        return float(times[hit[0]])
    raise HorizonError(f"curve horizon {u.horizon:g} too short to reach the level eps={eps:g}; extend it")


def a_priori_constant(field: EnergyField, u: Curve, T: Optional[float] = None) -> float:
    """Energy-drop bound ``C0 (1 + exp(2T/tau_*))`` with ``C0 = phi(u0) + |u0|^2/tau_* + phi_*``."""
    ts, ps = field.tau_star, field.phi_star
    if ts is None or ps is None:
        raise InputError("the unbounded case needs tau_star and phi_star")
    x0 = u.values[0]
    C0 = float(field.eval(x0)) + float(x0 @ x0) / ts + ps
    T = u.horizon if T is None else T
    return C0 * (1.0 + math.exp(2 * T / ts))


@dataclass
class EpsSchedule:
    """Ladder ``eps_n``, horizons ``T_bar_n`` and step thresholds ``sigma_n``.

    ``phi_tau = phi + eps_n dist(., U(tau, T_bar_n))`` for
    ``sigma_{n+1} < tau <= sigma_n`` (``sigma_{n+1} = 0`` for the last band).
    ``tau_bar`` records the rigorous thresholds when they were computed.
    """

    eps_list: Sequence[float]
    sigma_list: Sequence[float]
    T_list: Optional[Sequence[float]] = None
    tau_bar: Optional[Sequence[float]] = None

    def __post_init__(self):
        e = np.asarray(self.eps_list, dtype=float)
        s = np.asarray(self.sigma_list, dtype=float)
        if e.size == 0 or e.size != s.size:
            raise InputError("eps_list and sigma_list must be nonempty and of equal length")
        if np.any(e <= 0) or np.any(e >= 0.25) or np.any(np.diff(e) >= 0):
            raise InputError("eps_list must decrease inside (0, 1/4)")
        if np.any(s <= 0) or np.any(np.diff(s) >= 0):
            raise InputError("sigma_list must decrease and stay positive")
        if self.T_list is not None and len(self.T_list) != e.size:
            raise InputError("T_list length mismatch")
        if self.tau_bar is not None and np.any(s > np.asarray(self.tau_bar) * (1 + 1e-12)):
            raise InputError("sigma_n must not exceed tau_bar(eps_n)")

    @property
    def rigorous(self) -> bool:
        return self.tau_bar is not None

    @classmethod
    def from_rules(cls, field: EnergyField, u: Curve, eps_list: Sequence[float],
                   probe_spacing: float = 1e-4, enforce_min_horizon: bool = True) -> "EpsSchedule":
        """Thresholds from the selection rules on the dense trajectory ``u([0, T_bar + 1])``."""
        T_list, bars = [], []
        for eps in eps_list:
            Tb = find_horizon(field, u, eps, enforce_min_horizon)
            K = PointCloud(u(u.times[u.times <= Tb + 1.0]), u.dim)
            L = cloud_lipschitz(field, K)
            r_max = max(4.0, 3 * L)
            omega = cloud_modulus(field, K, r_max, probe_spacing)
            tau_K = estimate_tau_cloud(field, K, omega) if field.tau_star is not None else math.inf
            T_list.append(Tb)
            bars.append(select_tau_bar(L, omega, eps, tau_K))
        sig = []
        for b in bars:
            s = min(bars[: len(sig) + 1])
            if sig:
                s = min(s, sig[-1] / 2)
            sig.append(s)
        return cls(list(eps_list), sig, T_list, bars)


class PhiTauFamily:
    """Callable ``tau -> phi_tau`` built from an :class:`EpsSchedule`."""

    def __init__(self, field: EnergyField, u: Curve, schedule: EpsSchedule,
                 enforce_min_horizon: bool = True):
        self.field = field
        self.u = u
        self.schedule = schedule
        if schedule.T_list is None:
            T_list = [find_horizon(field, u, e, enforce_min_horizon) for e in schedule.eps_list]
        else:
            T_list = list(schedule.T_list)
        self.T_list = T_list
        self._cache: dict[float, PenalizedEnergy] = {}

    def band(self, tau: float) -> int:
        sig = list(self.schedule.sigma_list) + [0.0]
        for n in range(len(sig) - 1):
            if sig[n + 1] < tau <= sig[n] * (1 + 1e-12):
                return n
        raise InputError(f"tau={tau} lies above sigma_1={sig[0]}")

    def __call__(self, tau: float) -> PenalizedEnergy:
        if tau not in self._cache:
            n = self.band(tau)
            cloud = sample_range(self.u, tau, self.T_list[n])
            self._cache[tau] = make_penalized(self.field, cloud, self.schedule.eps_list[n])
        return self._cache[tau]

    def table(self) -> list[tuple[float, float, float, float, int, float]]:
        """Rows ``(tau_low, tau_high, eps, lambda, n_cloud_points, T_bar)``; clouds sampled at ``tau_high``."""
        sig = list(self.schedule.sigma_list) + [0.0]
        rows = []
        for n, eps in enumerate(self.schedule.eps_list):
            cloud = sample_range(self.u, sig[n], self.T_list[n])
            rows.append((sig[n + 1], sig[n], float(eps), float(eps), len(cloud), float(self.T_list[n])))
        return rows


def build_phi_tau_family(field: EnergyField, u: Curve, schedule: EpsSchedule,
                         enforce_min_horizon: bool = True) -> PhiTauFamily:
    return PhiTauFamily(field, u, schedule, enforce_min_horizon)
