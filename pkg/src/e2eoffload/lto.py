"""Lower bound on the joint problem by exhaustive placement search.

Interference is ignored and every UE transmits at full power, which gives
each task its best possible radio latency; link and fronthaul capacities
are relaxed.  For a fixed placement the remaining problem splits per node:
minimize the total slack sum(alpha) subject to the node's CPU capacity,
which has the water-filling solution

    alpha_k = [sqrt(L_k * lam) - Tt_k]^+,   upsilon_k = L_k / (Tt_k + alpha_k)

with ``Tt_k = T_k - T^prop_k - T^tx_k`` and ``lam`` fixed by
``sum_k upsilon_k = capacity``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioInstance

LAM_LO, LAM_HI = 1e-20, 1e20
ALPHA_ZERO = 1e-12  # slack below this counts as zero (seconds)
CHUNK = 1 << 15
TIE_REL = 1e-9


class LtoBudgetError(RuntimeError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"exhaustive search needs {required} candidates, budget is {budget}")
        self.required = required
        self.budget = budget


def lto_rate(env, k=None):
    """Interference-free full-power rate, bps."""
    snr = np.diag(env.gain) * env.power_budget / env.noise_power
    r = env.bandwidth * np.log2(1.0 + snr)
    return r if k is None else float(r[k])


@dataclass
class KktResult:
    upsilon: np.ndarray
    alpha: np.ndarray
    lam: float  # 0 when every deadline can be met without slack
    residual: float  # sum(upsilon) - capacity in the slack regime


def _capacity_fn(loads, t_tilde, lam):
    return np.sum(loads / np.maximum(t_tilde, np.sqrt(loads * lam)))


def kkt_allocate(loads, t_tilde, capacity: float, tol: float = 1e-12) -> KktResult:
    """Slack-minimizing CPU split of one node by bisection on ``lam``."""
    loads = np.asarray(loads, dtype=float)
    t_tilde = np.asarray(t_tilde, dtype=float)
    if loads.size == 0:
        raise ValueError("empty task set")
    if np.all(t_tilde > 0) and np.sum(loads / t_tilde) <= capacity:
        ups = loads / t_tilde
        return KktResult(ups, np.zeros_like(ups), 0.0, 0.0)
    lo, hi = np.log(LAM_LO), np.log(LAM_HI)
    while True:
        mid = 0.5 * (lo + hi)
        lam = np.exp(mid)
        val = _capacity_fn(loads, t_tilde, lam)
        if val == capacity or np.expm1(hi - lo) <= tol:
            break
        if val > capacity:
            lo = mid
        else:
            hi = mid
    alpha = np.maximum(np.sqrt(loads * lam) - t_tilde, 0.0)
    ups = loads / (t_tilde + alpha)
    return KktResult(ups, alpha, float(lam), float(ups.sum() - capacity))


def _node_slack(ttil, sqrt_l, loads, member, capacity):
    """Exact minimum sum(alpha) of one node for a batch of candidates.

    Arrays are (C, K); ``member`` flags the tasks placed on this node.
    Returns (sum_alpha (C,), ok (C,)); ``ok`` is False where no breakpoint
    interval matched, which only happens through rounding.
    """
    pos = ttil > 0
    beta = np.where(member, np.where(pos, ttil**2 / loads, -np.inf), np.inf)
    order = np.argsort(beta, axis=1, kind="stable")
    b_s = np.take_along_axis(beta, order, axis=1)
    m_s = np.take_along_axis(member, order, axis=1)
    sl_s = np.where(m_s, np.take_along_axis(sqrt_l, order, axis=1), 0.0)
    tt_s = np.where(m_s, np.take_along_axis(ttil, order, axis=1), 0.0)
    w = np.where(member & pos, loads / np.where(pos, ttil, 1.0), 0.0)
    w_s = np.take_along_axis(w, order, axis=1)

    a_cum = np.cumsum(sl_s, axis=1)
    b_rest = w.sum(axis=1, keepdims=True) - np.cumsum(w_s, axis=1)
    denom = capacity - b_rest
    with np.errstate(divide="ignore", invalid="ignore"):
        root = a_cum / denom
        lam = root**2
        nxt = np.concatenate([b_s[:, 1:], np.full((len(b_s), 1), np.inf)], axis=1)
        valid = m_s & (denom > 0) & (b_s < lam * (1 + 1e-12)) & (lam <= nxt * (1 + 1e-12))
        slack = root * a_cum - np.cumsum(tt_s, axis=1)
    has = valid.any(axis=1)
    j = np.argmax(valid, axis=1)
    out = np.take_along_axis(slack, j[:, None], axis=1)[:, 0]

    no_slack = (~(member & ~pos).any(axis=1)) & (w.sum(axis=1) <= capacity)
    empty = ~member.any(axis=1)
    out = np.where(no_slack | empty, 0.0, out)
    ok = has | no_slack | empty
    return np.maximum(out, 0.0), ok


def _node_admission(ttil, loads, member, capacity):
    """Largest number of member tasks the node can run with zero slack."""
    w = np.where(member & (ttil > 0), loads / np.where(ttil > 0, ttil, 1.0), np.inf)
    w.sort(axis=1)
    return (np.cumsum(w, axis=1) <= capacity).sum(axis=1)


@dataclass
class LtoResult:
    sum_alpha: float
    placement: dict[int, tuple[int, int]]
    upsilon: np.ndarray
    alpha: np.ndarray
    admitted: int  # largest task count that some placement serves with zero slack
    slack_free: int  # tasks with zero slack at the minimum-slack placement
    candidates: int
    tx_latency: np.ndarray

    @property
    def num_tasks(self) -> int:
        return len(self.alpha)


def _tie_tol(v: float) -> float:
    return TIE_REL * abs(v) + 1e-15 if np.isfinite(v) else 0.0


def candidate_count(inst: ScenarioInstance) -> int:
    return len(inst.path_set.options()) ** inst.num_tasks


def lto_search(inst: ScenarioInstance, budget: int | None = None) -> LtoResult:
    """Exhaustive search over placements for the minimum total slack."""
    budget = inst.config.algo.lto_budget if budget is None else budget
    options = inst.path_set.options()
    n_opt, K = len(options), inst.num_tasks
    total = n_opt**K
    if total > budget:
        raise LtoBudgetError(total, budget)

    topo = inst.topology
    loads = inst.loads
    tx = inst.data_sizes / lto_rate(inst.radio)
    prop = np.array([inst.path_set.path(o).round_trip for o in options])
    opt_node = np.array([topo.node_index(o[0]) for o in options])
    caps = np.array([n.capacity for n in topo.nodes])
    ttil_all = inst.max_latencies[:, None] - prop[None, :] - tx[:, None]  # (K, n_opt)
    sqrt_l = np.sqrt(loads)
    weights = n_opt ** np.arange(K - 1, -1, -1, dtype=np.int64)

    best_val, best_idx, admitted = np.inf, 0, 0
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(start + CHUNK, total), dtype=np.int64)
        digits = (idx[:, None] // weights[None, :]) % n_opt  # (C, K)
        ttil = ttil_all[np.arange(K)[None, :], digits]
        nodes = opt_node[digits]
        ll = np.broadcast_to(loads, ttil.shape)
        sl = np.broadcast_to(sqrt_l, ttil.shape)
        tot = np.zeros(len(idx))
        adm = np.zeros(len(idx), dtype=int)
        bad = np.zeros(len(idx), dtype=bool)
        for ni in np.unique(opt_node):
            member = nodes == ni
            val, ok = _node_slack(ttil, sl, ll, member, caps[ni])
            tot += val
            bad |= ~ok
            adm += _node_admission(ttil, ll, member, caps[ni])
        for c in np.flatnonzero(bad):  # rounding edge cases: fall back on bisection
            tot[c] = _evaluate(digits[c], ttil_all, loads, opt_node, caps)[0]
        # values within rounding of the minimum count as ties: first index wins
        low = float(tot.min())
        c = int(np.argmax(tot <= low + _tie_tol(low)))
        if tot[c] < best_val - _tie_tol(best_val):
            best_val, best_idx = float(tot[c]), int(idx[c])
        admitted = max(admitted, int(adm.max()))

    digits = (best_idx // weights) % n_opt
    val, ups, alpha = _evaluate(digits, ttil_all, loads, opt_node, caps)
    placement = {k: options[int(digits[k])] for k in range(K)}
    return LtoResult(val, placement, ups, alpha, admitted, int(np.sum(alpha <= ALPHA_ZERO)), total, tx)


def _evaluate(digits, ttil_all, loads, opt_node, caps):
    K = len(digits)
    ttil = ttil_all[np.arange(K), digits]
    nodes = opt_node[digits]
    ups = np.zeros(K)
    alpha = np.zeros(K)
    for ni in np.unique(nodes):
        sel = np.flatnonzero(nodes == ni)
        r = kkt_allocate(loads[sel], ttil[sel], caps[ni])
        ups[sel], alpha[sel] = r.upsilon, r.alpha
    return float(alpha.sum()), ups, alpha


def evaluate_placement(inst: ScenarioInstance, placement) -> tuple[float, np.ndarray, np.ndarray]:
    """Minimum total slack of a given placement under the relaxations."""
    options = inst.path_set.options()
    pos = {o: i for i, o in enumerate(options)}
    tx = inst.data_sizes / lto_rate(inst.radio)
    prop = np.array([inst.path_set.path(o).round_trip for o in options])
    ttil_all = inst.max_latencies[:, None] - prop[None, :] - tx[:, None]
    opt_node = np.array([inst.topology.node_index(o[0]) for o in options])
    caps = np.array([n.capacity for n in inst.topology.nodes])
    digits = np.array([pos[placement[k]] for k in range(inst.num_tasks)])
    return _evaluate(digits, ttil_all, inst.loads, opt_node, caps)
