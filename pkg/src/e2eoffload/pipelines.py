"""End-to-end offloading pipelines.

JTO (joint): feasibility analysis that alternates greedy placement and
power allocation and rejects the task with the largest latency slack until
every remaining task meets its deadline, followed by an energy-reducing
phase that alternates placement moves and CCP power minimization.

DTO (disjoint): the deadline is split at a fixed RAN budget ``T_RAN``.
Power is allocated first so that every accepted task transmits within
``T_RAN``; placement and compute are then handled with ``T - T_RAN``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import placement as _pl
from . import powersolver as _ps
from . import radio as _radio
from .scenario import ScenarioInstance
from .transport import prop_latency

BIG_SLACK = 1e6  # initial slack of the disjoint power phase, seconds
LATENCY_TOL = 1e-9


@dataclass
class Solution:
    algo: str
    num_tasks: int
    accepted: tuple[int, ...]
    placement: dict[int, tuple[int, int]]
    rho: np.ndarray
    upsilon: np.ndarray
    alpha: np.ndarray
    energy: float
    alpha_traces: list[list[float]] = field(default_factory=list)  # one per inner loop
    energy_trace: list[float] = field(default_factory=list)
    rejections: list[tuple[int, float]] = field(default_factory=list)
    iterations: int = 0
    reverts: int = 0  # iterates discarded by the monotonicity guard
    power_results: list = field(default_factory=list, repr=False)

    @property
    def acceptance_ratio(self) -> float:
        return len(self.accepted) / self.num_tasks if self.num_tasks else 1.0


@dataclass
class FeasibilityResult:
    accepted: tuple[int, ...]
    placement: dict[int, tuple[int, int]]
    rho: np.ndarray
    upsilon: np.ndarray
    alpha: np.ndarray
    alpha_traces: list[list[float]]
    rejections: list[tuple[int, float]]
    iterations: int
    reverts: int
    power_results: list = field(default_factory=list, repr=False)


def energy(placement, upsilon, rho, eta, topology) -> float:
    """Total power: sum of transmit powers plus eta times compute power."""
    return float(np.sum(rho)) + eta * _pl.compute_energy(topology, placement, upsilon)


def _rates(inst: ScenarioInstance, rho):
    return _radio.rate(inst.radio, rho)


def _tx_latency(inst: ScenarioInstance, rho):
    return _radio.tx_latency(inst.data_sizes, _rates(inst, rho))


def _prop(inst, placement, ids):
    out = np.zeros(inst.num_tasks)
    for k in ids:
        out[k] = prop_latency(inst.path_set, placement[k])
    return out


def _subproblem(inst, users, floors, rho, placement=None, mode="feasibility"):
    users = list(users)
    env = _radio.subset(inst.radio, users)
    local = {i: placement[k] for i, k in enumerate(users)} if placement is not None else None
    rows = _ps.capacity_rows(env, range(len(users)), local, inst.path_set, inst.topology.links)
    return _ps.PowerSubproblem(env, np.asarray(floors, dtype=float), rows, np.asarray(rho, dtype=float)[users], mode,
                               inst.data_sizes[users])


def _floors(inst, users, denom):
    d = inst.data_sizes
    out = np.empty(len(users))
    for i, k in enumerate(users):
        out[i] = d[k] / denom[k] if denom[k] > 0 else np.inf
    return out


def _argmax_alpha(alpha, ids):
    # ties: lowest task id
    best = max(ids, key=lambda k: (alpha[k], -k))
    return best


def jto_feasibility(inst: ScenarioInstance, order: str = "ascending") -> FeasibilityResult:
    """Feasibility analysis with one-by-one elimination of the task with the
    largest latency slack."""
    cfg = inst.config.algo
    K = inst.num_tasks
    tasks = {t.id: t for t in inst.tasks}
    T = inst.max_latencies
    loads = inst.loads
    active = sorted(tasks)
    rho = np.zeros(K)
    rho[active] = cfg.rho_init
    traces, rejections, power_results = [], [], []
    iterations = reverts = 0
    state = None

    for _ in range(K + 1):
        if not active:
            state = None
            break
        trace: list[float] = []
        state = None  # (PlacementResult, rho after its power solve)
        for _i in range(cfg.i_max):
            iterations += 1
            r = _rates(inst, rho)
            radio_lat = _radio.tx_latency(inst.data_sizes, r)
            pr = _pl.place_feasibility([tasks[k] for k in active], radio_lat, r, inst.topology, inst.path_set, K, order)
            total = float(pr.alpha[active].sum())
            if trace and total > trace[-1]:
                reverts += 1
                break  # keep the previous placement and its power vector
            # power step for the slacks just computed
            exe = np.zeros(K)
            exe[active] = loads[active] / pr.upsilon[active]
            prop = _prop(inst, pr.placement, active)
            denom = T + pr.alpha - prop - exe
            sub = _subproblem(inst, active, _floors(inst, active, denom), rho, pr.placement)
            res = _ps.ccp_feasibility(sub, max_iter=cfg.i_feas_ccp)
            power_results.append(res)
            new_rho = rho.copy()
            if res.usable:
                new_rho[active] = res.rho
            state = (pr, new_rho)
            rho = new_rho
            trace.append(total)
            if len(trace) > 1 and trace[-2] - trace[-1] <= cfg.eps:
                break
        traces.append(trace)
        pr, rho = state
        alpha = pr.alpha
        if np.all(alpha[active] <= 0.0):
            break
        k_star = _argmax_alpha(alpha, active)
        rejections.append((k_star, float(alpha[k_star])))
        active = [k for k in active if k != k_star]
        rho = rho.copy()
        rho[k_star] = 0.0

    if state is None or not active:
        return FeasibilityResult((), {}, np.zeros(K), np.zeros(K), np.zeros(K), traces, rejections,
                                 iterations, reverts, power_results)
    pr, rho = state
    placement = {k: pr.placement[k] for k in active}
    ups = np.zeros(K)
    ups[active] = pr.upsilon[active]
    rho_out = np.zeros(K)
    rho_out[active] = rho[active]
    return FeasibilityResult(tuple(active), placement, rho_out, ups, np.zeros(K), traces, rejections,
                             iterations, reverts, power_results)


def jto_optimize(inst: ScenarioInstance, feas: FeasibilityResult) -> Solution:
    """Alternate compute-energy placement moves and CCP power minimization."""
    cfg = inst.config.algo
    K = inst.num_tasks
    eta = cfg.eta
    active = list(feas.accepted)
    placement, ups, rho = dict(feas.placement), feas.upsilon.copy(), feas.rho.copy()
    sol = Solution("jto", K, tuple(active), placement, rho, ups, np.zeros(K), 0.0,
                   alpha_traces=feas.alpha_traces, rejections=list(feas.rejections),
                   iterations=feas.iterations, reverts=feas.reverts, power_results=list(feas.power_results))
    if not active:
        sol.energy_trace = [0.0]
        return sol
    tasks = [t for t in inst.tasks if t.id in set(active)]
    T = inst.max_latencies
    e_cur = energy(placement, ups, rho, eta, inst.topology)
    trace = [e_cur]
    for _ in range(cfg.i_max):
        sol.iterations += 1
        r = _rates(inst, rho)
        radio_lat = _radio.tx_latency(inst.data_sizes, r)
        new_pl, new_ups = _pl.place_optimize(tasks, placement, ups, radio_lat, r, inst.topology, inst.path_set)
        exe = np.zeros(K)
        exe[active] = inst.loads[active] / new_ups[active]
        denom = T - _prop(inst, new_pl, active) - exe
        sub = _subproblem(inst, active, _floors(inst, active, denom), rho, new_pl, "minimize")
        res, _ = _ps.ccp_minimize(sub, cfg.eps, cfg.i_rho_max)
        sol.power_results.append(res)
        new_rho = rho.copy()
        if res.usable:
            new_rho[active] = res.rho
        elif not _exact_ok(inst, active, new_pl, new_ups, rho):
            # the placement moves are not supported by the current powers
            sol.reverts += 1
            break
        e_new = energy(new_pl, new_ups, new_rho, eta, inst.topology)
        if e_new > e_cur:
            sol.reverts += 1
            break
        placement, ups, rho = new_pl, new_ups, new_rho
        trace.append(e_new)
        drop = e_cur - e_new
        e_cur = e_new
        if drop <= cfg.eps:
            break
    sol.placement, sol.upsilon, sol.rho = placement, ups, rho
    sol.energy = e_cur
    sol.energy_trace = trace
    return sol


def _exact_ok(inst, active, placement, ups, rho) -> bool:
    rep = check_solution(inst, active, placement, ups, rho)
    return rep.ok


def run_jto(inst: ScenarioInstance, order: str = "ascending") -> Solution:
    return jto_optimize(inst, jto_feasibility(inst, order))


def _default_t_ran(inst):
    cfg = inst.config.algo
    return cfg.t_ran if cfg.t_ran is not None else 0.5 * float(inst.max_latencies.min())


def dto_power(inst: ScenarioInstance, t_ran: float | None = None):
    """Power phase of the disjoint baseline.

    Returns (surviving task ids, power vector, slack traces, rejections,
    iterations).  Only fronthaul rows constrain the powers here since no
    placement exists yet.
    """
    cfg = inst.config.algo
    t_ran = _default_t_ran(inst) if t_ran is None else float(t_ran)
    K = inst.num_tasks
    active = list(range(K))
    rho = np.full(K, cfg.rho_init)
    alpha = np.full(K, BIG_SLACK)
    traces, rejections = [], []
    iterations = 0
    denom = np.zeros(K)
    for _ in range(K + 1):
        if not active:
            break
        trace = []
        for _i in range(cfg.i_max):
            iterations += 1
            denom[active] = t_ran + alpha[active]
            sub = _subproblem(inst, active, _floors(inst, active, denom), rho)
            res = _ps.ccp_feasibility(sub, max_iter=cfg.i_feas_ccp)
            if res.usable:
                rho = rho.copy()
                rho[active] = res.rho
            tx = _tx_latency(inst, rho)
            new_alpha = alpha.copy()
            new_alpha[active] = np.maximum(tx[active] - t_ran, 0.0)
            total = float(new_alpha[active].sum())
            alpha = new_alpha
            trace.append(total)
            if len(trace) > 1 and trace[-2] - trace[-1] <= cfg.eps:
                break
        traces.append(trace)
        if np.all(alpha[active] <= 0.0):
            break
        k_star = _argmax_alpha(alpha, active)
        rejections.append((k_star, float(alpha[k_star])))
        active = [k for k in active if k != k_star]
        rho = rho.copy()
        rho[k_star] = 0.0

    if active:
        denom[active] = t_ran
        sub = _subproblem(inst, active, _floors(inst, active, denom), rho, mode="minimize")
        res, _ = _ps.ccp_minimize(sub, cfg.eps, cfg.i_rho_max)
        if res.usable:
            rho = np.zeros(K)
            rho[active] = res.rho
    out = np.zeros(K)
    out[active] = rho[active]
    return tuple(active), out, traces, rejections, iterations


def dto_place(inst: ScenarioInstance, k_ran, rho, t_ran: float | None = None, order: str = "ascending") -> Solution:
    """Placement phase of the disjoint baseline with the RAN budget fixed."""
    cfg = inst.config.algo
    t_ran = _default_t_ran(inst) if t_ran is None else float(t_ran)
    K = inst.num_tasks
    tasks = {t.id: t for t in inst.tasks}
    active = list(k_ran)
    rho = np.asarray(rho, dtype=float).copy()
    radio_lat = np.full(K, t_ran)
    rejections, iterations = [], 0
    pr = None
    traces = []
    for _ in range(K + 1):
        if not active:
            break
        iterations += 1
        r = _rates(inst, rho)
        pr = _pl.place_feasibility([tasks[k] for k in active], radio_lat, r, inst.topology, inst.path_set, K, order)
        traces.append([float(pr.alpha[active].sum())])
        if np.all(pr.alpha[active] <= 0.0):
            break
        k_star = _argmax_alpha(pr.alpha, active)
        rejections.append((k_star, float(pr.alpha[k_star])))
        active = [k for k in active if k != k_star]
        rho[k_star] = 0.0

    sol = Solution("dto", K, tuple(active), {}, np.zeros(K), np.zeros(K), np.zeros(K), 0.0,
                   alpha_traces=traces, rejections=rejections, iterations=iterations)
    if not active:
        sol.energy_trace = [0.0]
        return sol
    rho_out = np.zeros(K)
    rho_out[active] = rho[active]
    placement = {k: pr.placement[k] for k in active}
    ups = np.zeros(K)
    ups[active] = pr.upsilon[active]
    r = _rates(inst, rho_out)
    act_tasks = [tasks[k] for k in active]
    e_cur = energy(placement, ups, rho_out, cfg.eta, inst.topology)
    trace = [e_cur]
    for _ in range(cfg.i_max):
        sol.iterations += 1
        new_pl, new_ups = _pl.place_optimize(act_tasks, placement, ups, radio_lat, r, inst.topology, inst.path_set)
        e_new = energy(new_pl, new_ups, rho_out, cfg.eta, inst.topology)
        if e_new > e_cur:
            sol.reverts += 1
            break
        placement, ups = new_pl, new_ups
        trace.append(e_new)
        drop = e_cur - e_new
        e_cur = e_new
        if drop <= cfg.eps:
            break
    sol.placement, sol.upsilon, sol.rho = placement, ups, rho_out
    sol.energy, sol.energy_trace = e_cur, trace
    return sol


def run_dto(inst: ScenarioInstance, t_ran: float | None = None, order: str = "ascending") -> Solution:
    k_ran, rho, traces, rej, iters = dto_power(inst, t_ran)
    sol = dto_place(inst, k_ran, rho, t_ran, order)
    sol.rejections = rej + sol.rejections
    sol.alpha_traces = traces + sol.alpha_traces
    sol.iterations += iters
    return sol


@dataclass
class CheckReport:
    e2e_slack: float  # min over accepted of T - (tx + prop + exe), seconds
    node_slack: float  # min relative residual CPU
    link_slack: float
    fronthaul_slack: float
    power_ok: bool
    placed_ok: bool

    @property
    def ok(self) -> bool:
        return (
            self.e2e_slack >= -LATENCY_TOL
            and min(self.node_slack, self.link_slack, self.fronthaul_slack) >= -1e-9
            and self.power_ok
            and self.placed_ok
        )


def check_solution(inst: ScenarioInstance, accepted, placement, upsilon, rho) -> CheckReport:
    """Re-evaluate every constraint from scratch with exact rates."""
    accepted = list(accepted)
    rho = np.asarray(rho, dtype=float)
    env = inst.radio
    rates = _radio.rate(env, rho)
    inactive = np.setdiff1d(np.arange(inst.num_tasks), accepted)
    power_ok = bool(np.all(rho >= 0) and np.all(rho <= env.power_budget) and np.all(rho[inactive] == 0))
    placed_ok = all(k in placement for k in accepted)
    if not accepted or not placed_ok:
        return CheckReport(np.inf, np.inf, np.inf, np.inf, power_ok, placed_ok)
    topo = inst.topology
    e2e = np.inf
    node_used = np.zeros(len(topo.nodes))
    link_used = np.zeros(len(topo.links))
    for k in accepted:
        opt = placement[k]
        path = inst.path_set.path(opt)
        tx = inst.data_sizes[k] / rates[k] if rates[k] > 0 else np.inf
        exe = inst.loads[k] / upsilon[k] if upsilon[k] > 0 else np.inf
        e2e = min(e2e, inst.max_latencies[k] - (tx + path.round_trip + exe))
        node_used[topo.node_index(opt[0])] += upsilon[k]
        for li in path.links:
            link_used[li] += rates[k]
    caps = np.array([n.capacity for n in topo.nodes])
    lcaps = np.array([ln.capacity for ln in topo.links])
    fh = np.array([rates[accepted][env.serving[accepted] == u].sum() for u in range(len(env.fronthaul))])
    return CheckReport(
        float(e2e),
        float(np.min((caps - node_used) / caps)),
        float(np.min((lcaps - link_used) / lcaps)) if len(lcaps) else np.inf,
        float(np.min((env.fronthaul - fh) / env.fronthaul)),
        power_ok,
        placed_ok,
    )


def solution_check(inst: ScenarioInstance, sol: Solution) -> CheckReport:
    return check_solution(inst, sol.accepted, sol.placement, sol.upsilon, sol.rho)


__all__ = [
    "Solution", "FeasibilityResult", "CheckReport", "energy", "jto_feasibility", "jto_optimize",
    "run_jto", "dto_power", "dto_place", "run_dto", "check_solution", "solution_check",
]
