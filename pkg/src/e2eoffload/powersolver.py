"""Uplink power allocation: convexified subproblems and the CCP loops.

Every subproblem has the same shape. Given a linearization point ``rho0``,
rate floors ``c_k`` and capacity rows (links of the current placement and/or
RRH fronthauls), the constraint set is

    h_k(rho) - g_hat_k(rho; rho0) >= c_k                     (floors)
    sum_{k in S_r} (h_hat_k(rho; rho0) - g_k(rho)) <= B_r      (capacity rows)
    0 <= rho <= P^max

which is convex and, because the linearizations majorize the concave pieces
they replace, an inner approximation of the true rate constraints.

Internally everything is normalized: gains are divided by the noise power
and rates are in bits/s/Hz.  Both modes use a log-barrier interior-point
method with damped Newton steps.  Both start with phase 1, which minimizes
the largest relative constraint violation ``s`` until a strictly feasible
point is found.  ``feasibility`` mode then minimizes the total transmission
latency ``sum_k D_k / (h_k - g_hat_k)``, an upper bound on the exact one, so
that slack freed on the radio side goes to the slowest users; ``minimize``
mode minimizes the total power.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import radio as _radio
from .radio import RadioEnvironment

LN2 = np.log(2.0)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
CAPPED = "iteration-capped"

SLACK_TOL = 1e-9  # phase-1 acceptance threshold on s
VERIFY_TOL = 1e-9  # relative slack allowed when re-checking exact rates
NEWTON_CAP = 200
KKT_REL_TOL = 1e-7  # barrier gap relative to the objective
LATENCY_REL_TOL = 1e-5  # same, for the latency objective of feasibility mode
MU = 10.0
PHASE1_MARGIN = 1e-6  # phase 1 may stop once every row has this relative margin


@dataclass(frozen=True)
class CapacityRow:
    """Aggregate-rate row: the users in ``members`` share ``capacity`` bps."""

    members: tuple[int, ...]  # indices into the subproblem's users
    capacity: float
    kind: str = "link"  # "link" or "fronthaul"
    ref: int = -1  # link index or RRH index


@dataclass(frozen=True)
class PowerSubproblem:
    env: RadioEnvironment  # restricted to the users being optimized
    floors: np.ndarray  # bps; rows with floor <= 0 are dropped
    rows: tuple[CapacityRow, ...]
    rho0: np.ndarray
    mode: str = "feasibility"  # or "minimize"
    data_bits: np.ndarray | None = None  # latency weights in feasibility mode; ones if None

    def __post_init__(self):
        if self.mode not in ("feasibility", "minimize"):
            raise ValueError(f"unknown mode {self.mode!r}")
        k = self.env.num_users
        if np.shape(self.floors) != (k,) or np.shape(self.rho0) != (k,):
            raise ValueError("floors and rho0 must have one entry per user")
        if self.data_bits is not None and np.shape(self.data_bits) != (k,):
            raise ValueError("data_bits must have one entry per user")
        for r in self.rows:
            if any(not 0 <= i < k for i in r.members):
                raise ValueError("capacity row references an unknown user")

    def with_point(self, rho0, mode=None) -> "PowerSubproblem":
        return dataclasses.replace(self, rho0=np.asarray(rho0, dtype=float), mode=mode or self.mode)


@dataclass
class PowerResult:
    rho: np.ndarray
    status: str
    rates: np.ndarray
    floor_slack: np.ndarray  # (R - c) / c for constrained users, +inf otherwise
    row_slack: np.ndarray  # (B - load) / B per capacity row
    s: float = float("nan")  # phase-1 optimum (feasibility mode)
    newton_steps: int = 0
    verified: bool = False

    @property
    def usable(self) -> bool:
        """The point may be adopted: it satisfies the exact constraints."""
        return self.verified and self.status in (FEASIBLE, CAPPED)


@dataclass
class CcpTrace:
    sum_power: list[float] = field(default_factory=list)
    max_violation: list[float] = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "sum_power_w", "max_violation"])
            for i, (p, v) in enumerate(zip(self.sum_power, self.max_violation)):
                w.writerow([i, f"{p:.12e}", f"{v:.12e}"])


def capacity_rows(env: RadioEnvironment, users, placement=None, path_set=None, links=None) -> tuple[CapacityRow, ...]:
    """Fronthaul rows for every RRH with active users, plus one row per
    traversed link when a placement is given.

    ``users`` are global user ids, ``placement`` maps user id to (node, path).
    """
    users = list(users)
    rows = []
    if placement is not None:
        per_link: dict[int, list[int]] = {}
        for i, k in enumerate(users):
            for li in path_set.path(placement[k]).links:
                per_link.setdefault(li, []).append(i)
        for li in sorted(per_link):
            rows.append(CapacityRow(tuple(per_link[li]), float(links[li].capacity), "link", li))
    serving = env.serving[users] if users else np.array([], dtype=int)
    for u in range(len(env.fronthaul)):
        members = tuple(int(i) for i in np.flatnonzero(serving == u))
        if members:
            rows.append(CapacityRow(members, float(env.fronthaul[u]), "fronthaul", u))
    return tuple(rows)


def verify(env: RadioEnvironment, rho, floors, rows) -> tuple[bool, np.ndarray, np.ndarray, np.ndarray]:
    """Check a power vector against the exact (non-linearized) constraints."""
    rho = np.asarray(rho, dtype=float)
    floors = np.asarray(floors, dtype=float)
    r = _radio.rate(env, rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        fslack = np.where(floors > 0, (r - floors) / np.where(floors > 0, floors, 1.0), np.inf)
    rslack = np.array([(row.capacity - r[list(row.members)].sum()) / row.capacity for row in rows])
    ok = (
        bool(np.all(fslack >= -VERIFY_TOL))
        and bool(np.all(rslack >= -VERIFY_TOL))
        and bool(np.all(rho >= 0.0))
        and bool(np.all(rho <= env.power_budget))
    )
    return ok, r, fslack, rslack


class _Model:
    """Normalized constraint functions f_i(x) <= 0 with gradients and the
    curvature pieces needed for Newton steps."""

    def __init__(self, sub: PowerSubproblem, active_floor):
        env = sub.env
        self.a = env.gain / env.noise_power
        self.b = self.a.copy()
        np.fill_diagonal(self.b, 0.0)
        self.pmax = env.power_budget.astype(float)
        self.fl = np.flatnonzero(active_floor)
        self.c = np.asarray(sub.floors, dtype=float)[self.fl] / env.bandwidth
        k = env.num_users
        self.rows = sub.rows
        self.member = np.zeros((len(sub.rows), k))
        for i, row in enumerate(sub.rows):
            self.member[i, list(row.members)] = 1.0
        self.cap = np.array([row.capacity for row in sub.rows]) / env.bandwidth

        x0 = np.asarray(sub.rho0, dtype=float)
        self.x0 = x0
        g_den = 1.0 + self.b @ x0
        self.g0 = np.log2(g_den)
        self.grad_g0 = self.b / (LN2 * g_den)[:, None]
        h_den = 1.0 + self.a @ x0
        self.h0 = np.log2(h_den)
        self.grad_h0 = self.a / (LN2 * h_den)[:, None]
        self.m = len(self.fl) + len(sub.rows)
        # violations are measured relative to each row's requirement
        self.scale = np.concatenate([self.c, self.cap])

    def bound(self) -> float:
        """|f_i| / scale_i can never exceed this inside the box."""
        top = np.log2(1.0 + self.a @ self.pmax).max() if len(self.a) else 0.0
        cap = self.cap.max() if len(self.cap) else 0.0
        c = self.c.max() if len(self.c) else 0.0
        return (1.0 + top + cap + c) / self.scale.min()

    def eval(self, x):
        """Scaled constraint values f (m,) and Jacobian J (m, K)."""
        dx = x - self.x0
        fl = self.fl
        a_fl = self.a[fl]
        h_den = 1.0 + a_fl @ x
        f1 = self.c - np.log2(h_den) + self.g0[fl] + self.grad_g0[fl] @ dx
        j1 = -a_fl / (LN2 * h_den)[:, None] + self.grad_g0[fl]
        if len(self.rows):
            g_den = 1.0 + self.b @ x
            per_user = self.h0 + self.grad_h0 @ dx - np.log2(g_den)
            f2 = self.member @ per_user - self.cap
            j2 = self.member @ (self.grad_h0 - self.b / (LN2 * g_den)[:, None])
        else:
            f2 = np.empty(0)
            j2 = np.empty((0, len(x)))
        return np.concatenate([f1, f2]) / self.scale, np.vstack([j1, j2]) / self.scale[:, None]

    def rate_hat(self, x):
        """Convexified rates h - g_hat of the floor users and their Jacobian."""
        a_fl = self.a[self.fl]
        h_den = 1.0 + a_fl @ x
        r = np.log2(h_den) - self.g0[self.fl] - self.grad_g0[self.fl] @ (x - self.x0)
        jac = a_fl / (LN2 * h_den)[:, None] - self.grad_g0[self.fl]
        return r, jac, h_den

    def curvature(self, x, weights):
        """sum_i weights_i * Hess f_i(x), for the scaled rows."""
        weights = weights / self.scale
        n1 = len(self.fl)
        a_fl = self.a[self.fl]
        h_den = 1.0 + a_fl @ x
        u = weights[:n1] / (LN2 * h_den**2)
        out = (a_fl.T * u) @ a_fl
        if len(self.rows):
            g_den = 1.0 + self.b @ x
            v = (weights[n1:] @ self.member) / (LN2 * g_den**2)
            out += (self.b.T * v) @ self.b
        return out


def _newton_solve(hess, grad):
    d = np.sqrt(np.maximum(np.diag(hess), 1e-300))
    hs = hess / d[:, None] / d[None, :]
    try:
        y = np.linalg.solve(hs, -grad / d)
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(hs, -grad / d, rcond=None)[0]
    return y / d


class _Barrier:
    """Centering for a barrier function with optional slack variable ``s``.

    Phase 1 (``phase1=True``) optimizes z = (x, s) for t*s - sum log(s - f_i)
    - log(s + S) - box terms; phase 2 optimizes x for t*sum(x) - sum log(-f_i)
    - box terms.
    """

    def __init__(self, model: _Model, phase1: bool, s_floor: float = 0.0, objective=None):
        self.mdl = model
        self.phase1 = phase1
        self.s_floor = s_floor  # -S in phase 1
        self.objective = objective or _TotalPower()
        self.steps = 0

    def _split(self, z):
        return (z[:-1], z[-1]) if self.phase1 else (z, None)

    def in_domain(self, z):
        x, s = self._split(z)
        if np.any(x <= 0.0) or np.any(x >= self.mdl.pmax):
            return False
        f, _ = self.mdl.eval(x)
        if self.phase1:
            return bool(s > self.s_floor and np.all(s - f > 0.0))
        return bool(np.all(f < 0.0))

    def value(self, z, t):
        x, s = self._split(z)
        f, _ = self.mdl.eval(x)
        box = -np.log(x).sum() - np.log(self.mdl.pmax - x).sum()
        if self.phase1:
            return t * s - np.log(s - f).sum() - np.log(s - self.s_floor) + box
        return t * self.objective.value(x) - np.log(-f).sum() + box

    def derivs(self, z, t):
        x, s = self._split(z)
        mdl = self.mdl
        f, jac = mdl.eval(x)
        gap = (s - f) if self.phase1 else -f
        inv = 1.0 / gap
        box_g = -1.0 / x + 1.0 / (mdl.pmax - x)
        box_h = 1.0 / x**2 + 1.0 / (mdl.pmax - x) ** 2
        hxx = (jac.T * inv**2) @ jac + mdl.curvature(x, inv) + np.diag(box_h)
        gx = jac.T @ inv + box_g
        if not self.phase1:
            og, oh = self.objective.derivs(x)
            return t * og + gx, t * oh + hxx
        k = len(x)
        grad = np.empty(k + 1)
        grad[:k] = gx
        grad[k] = t - inv.sum() - 1.0 / (s - self.s_floor)
        hess = np.empty((k + 1, k + 1))
        hess[:k, :k] = hxx
        cross = -(jac.T @ inv**2)
        hess[:k, k] = cross
        hess[k, :k] = cross
        hess[k, k] = (inv**2).sum() + 1.0 / (s - self.s_floor) ** 2
        return grad, hess

    def center(self, z, t, stop=None):
        """Damped Newton on the barrier at parameter t. Returns (z, converged)."""
        for _ in range(NEWTON_CAP):
            grad, hess = self.derivs(z, t)
            dz = _newton_solve(hess, grad)
            dec = -grad @ dz
            if not np.isfinite(dec) or dec / 2.0 <= 1e-10:
                return z, True
            step = 1.0
            while step > 1e-16 and not self.in_domain(z + step * dz):
                step *= 0.5
            phi = self.value(z, t)
            noise = 1e-13 * abs(phi)  # rounding floor of the barrier value
            while step > 1e-16 and self.value(z + step * dz, t) > phi - 0.25 * step * dec + noise:
                step *= 0.5
            if step <= 1e-16:
                return z, True  # no progress possible at this precision
            z_new = z + step * dz
            self.steps += 1
            if phi - self.value(z_new, t) <= 2.0 * noise:
                return z_new, True  # stalled on rounding noise
            z = z_new
            if stop is not None and stop(z):
                return z, True
        return z, False


class _TotalPower:
    def value(self, x):
        return x.sum()

    def derivs(self, x):
        return np.ones_like(x), 0.0


class _TxLatency:
    """sum_k w_k / r_k(x) over the floor users, r the convexified rate."""

    def __init__(self, mdl: _Model, weights):
        self.mdl = mdl
        self.w = np.asarray(weights, dtype=float)[mdl.fl]

    def value(self, x):
        r = self.mdl.rate_hat(x)[0]
        if np.any(r <= 0.0):
            return np.inf
        return float(np.sum(self.w / r))

    def derivs(self, x):
        r, jac, h_den = self.mdl.rate_hat(x)
        a_fl = self.mdl.a[self.mdl.fl]
        grad = -(jac.T @ (self.w / r**2))
        # r is concave with Hessian -a a^T / (ln2 den^2); both terms are PSD
        hess = (jac.T * (2.0 * self.w / r**3)) @ jac
        hess += (a_fl.T * (self.w / r**2 / (LN2 * h_den**2))) @ a_fl
        return grad, hess


def _interior_start(x0, pmax):
    lo = pmax * 1e-12
    return np.clip(np.asarray(x0, dtype=float), lo, pmax * (1.0 - 1e-9))


def _phase1(mdl: _Model, x_start, early_stop: float | None):
    """Minimize max_i f_i. Returns (x, s, steps, capped)."""
    big = mdl.bound()
    f, _ = mdl.eval(x_start)
    if early_stop is not None and f.max() < -early_stop:
        return x_start, float(f.max()), 0, False
    s0 = max(f.max(), -big) + 1.0
    bar = _Barrier(mdl, phase1=True, s_floor=-big)
    z = np.append(x_start, s0)
    m = mdl.m + 2 * len(x_start) + 1
    t = 1.0
    capped = False
    stop = (lambda zz: zz[-1] < -early_stop) if early_stop is not None else None
    while True:
        z, ok = bar.center(z, t, stop)
        capped |= not ok
        if stop is not None and stop(z):
            break
        if m / t <= 1e-8 * max(1.0, abs(z[-1])):
            break
        t *= MU
    return z[:-1], float(z[-1]), bar.steps, capped


def _phase2(mdl: _Model, x_start, objective=None, rel_tol=KKT_REL_TOL):
    bar = _Barrier(mdl, phase1=False, objective=objective)
    obj = bar.objective
    x = x_start
    m = mdl.m + 2 * len(x)
    t = m / max(obj.value(x), 1e-300)
    capped = False
    while True:
        x, ok = bar.center(x, t)
        capped |= not ok
        if m / t <= max(rel_tol * obj.value(x), 1e-18):
            break
        t *= MU
    return x, bar.steps, capped


def _result(sub, rho, status, s=float("nan"), steps=0):
    ok, r, fs, rs = verify(sub.env, rho, sub.floors, sub.rows)
    if status != INFEASIBLE and not ok:
        status = INFEASIBLE
    return PowerResult(np.asarray(rho, dtype=float), status, r, fs, rs, s, steps, ok and status != INFEASIBLE)


def solve_subproblem(sub: PowerSubproblem) -> PowerResult:
    """Solve one convexified power subproblem."""
    env = sub.env
    k = env.num_users
    floors = np.asarray(sub.floors, dtype=float)
    rho0 = np.clip(np.asarray(sub.rho0, dtype=float), 0.0, env.power_budget)
    if k == 0:
        return _result(sub, rho0, FEASIBLE, 0.0)
    if np.any(~np.isfinite(floors)) or np.any(np.isnan(floors)):
        return _result(sub, rho0, INFEASIBLE)
    active = floors > 0
    mdl = _Model(dataclasses.replace(sub, rho0=rho0), active)

    if mdl.m == 0:
        # unconstrained apart from the box
        zero = np.zeros(k)
        return _result(sub, zero, FEASIBLE, 0.0)

    x_start = _interior_start(rho0, mdl.pmax)
    if sub.mode == "feasibility":
        x, s, steps, capped = _phase1(mdl, x_start, PHASE1_MARGIN)
        if s > SLACK_TOL:
            return _result(sub, x, INFEASIBLE, s, steps)
        if s < 0.0 and len(mdl.fl):
            w = np.ones(k) if sub.data_bits is None else sub.data_bits
            x, steps2, capped2 = _phase2(mdl, x, _TxLatency(mdl, w), LATENCY_REL_TOL)
            steps += steps2
            capped |= capped2
        return _result(sub, x, CAPPED if capped else FEASIBLE, s, steps)

    f, _ = mdl.eval(x_start)
    steps = 0
    capped = False
    if np.all(f < 0.0):
        x = x_start  # already interior
    else:
        x, s, steps, capped = _phase1(mdl, x_start, PHASE1_MARGIN)
        if s >= 0.0:
            # no strict interior; fall back on the start point if it is valid
            res = _result(sub, rho0, FEASIBLE if s <= SLACK_TOL else INFEASIBLE, s, steps)
            return res
    x, steps2, capped2 = _phase2(mdl, x)
    return _result(sub, x, CAPPED if (capped or capped2) else FEASIBLE, steps=steps + steps2)


def tx_objective(sub: PowerSubproblem, rho) -> float:
    """Exact sum_k D_k / R_k over the users with a positive floor."""
    w = np.ones(sub.env.num_users) if sub.data_bits is None else np.asarray(sub.data_bits, dtype=float)
    on = np.asarray(sub.floors) > 0
    r = _radio.rate(sub.env, rho)[on]
    with np.errstate(divide="ignore"):
        return float(np.sum(np.where(r > 0, w[on] / np.where(r > 0, r, 1.0), np.inf)))


def ccp_feasibility(sub: PowerSubproblem, rel_eps: float = 1e-3, max_iter: int = 1) -> PowerResult:
    """Feasibility-mode CCP started at ``sub.rho0``.

    The first solve finds a point meeting the floors; further iterations,
    up to ``max_iter`` in total, re-linearize and keep lowering the
    transmission latency until its relative decrease drops below
    ``rel_eps``.  Every returned point is checked against the exact
    constraints; when the check fails the status is infeasible and the
    caller should keep its previous power vector.
    """
    res = solve_subproblem(sub.with_point(sub.rho0, "feasibility"))
    if not res.usable:
        return res
    prev = tx_objective(sub, res.rho)
    for _ in range(max_iter - 1):
        nxt = solve_subproblem(sub.with_point(res.rho, "feasibility"))
        if not nxt.usable:
            break
        val = tx_objective(sub, nxt.rho)
        if val > prev:
            break
        res, drop, prev = nxt, prev - val, val
        if drop <= rel_eps * val:
            break
    return res


def ccp_minimize(sub: PowerSubproblem, eps: float = 1e-3, max_iter: int = 100) -> tuple[PowerResult, CcpTrace]:
    """Convex-concave procedure for the minimum total power.

    ``sub.rho0`` must satisfy the exact constraints.  Each iteration
    re-linearizes at the previous solution; an iterate that would raise the
    total power is discarded, so the trace never increases.
    """
    x = np.asarray(sub.rho0, dtype=float)
    best = _result(sub, x, FEASIBLE)
    trace = CcpTrace([float(x.sum())], [_violation(best)])
    if not best.verified:
        best.status = INFEASIBLE
        return best, trace
    for _ in range(max_iter):
        res = solve_subproblem(sub.with_point(x, "minimize"))
        if not res.usable:
            break
        total = float(res.rho.sum())
        if total > trace.sum_power[-1]:
            break
        drop = trace.sum_power[-1] - total
        x = res.rho
        best = res
        trace.sum_power.append(total)
        trace.max_violation.append(_violation(res))
        if drop <= eps:
            break
    return best, trace


def _violation(res: PowerResult) -> float:
    parts = [0.0]
    if len(res.floor_slack):
        parts.append(float(np.max(-res.floor_slack)))
    if len(res.row_slack):
        parts.append(float(np.max(-res.row_slack)))
    return max(parts)
