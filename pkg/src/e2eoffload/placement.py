"""Greedy task placement and compute allocation.

``place_feasibility`` assigns every task to the (node, path) pair with the
smallest execution plus propagation latency and gives it just enough CPU to
meet its deadline, recording a latency slack ``alpha`` where that is not
possible.  ``place_optimize`` then moves tasks, one at a time, to options
that need less compute energy.

Both take a per-task radio latency: the transmission latency ``D/R`` in the
joint method, or the fixed RAN budget in the disjoint baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transport import PathSet, ResidualState, Topology, better_nodes, feasible_nodes, prop_latency

# CPU share handed to a task when its chosen node has nothing left; it is
# not committed, the resulting slack makes the task the next to be rejected
STARVED_SHARE = 1e-6

Option = tuple[int, int]


@dataclass
class PlacementResult:
    placement: dict[int, Option]
    upsilon: np.ndarray  # cycles/s, indexed by task id
    alpha: np.ndarray  # seconds, indexed by task id
    committed: set[int]  # tasks whose compute share is reserved on their node


def _order_by_deadline(tasks, order):
    if order == "ascending":
        return sorted(tasks, key=lambda t: (t.max_latency, t.id))
    if order == "descending":
        return sorted(tasks, key=lambda t: (-t.max_latency, t.id))
    raise ValueError(f"unknown order {order!r}")


def place_feasibility(
    tasks,
    radio_latency,
    link_rate,
    topology: Topology,
    path_set: PathSet,
    num_tasks: int | None = None,
    order: str = "ascending",
) -> PlacementResult:
    """Greedy placement that minimizes execution plus propagation latency.

    ``radio_latency`` and ``link_rate`` are indexed by task id; the latter
    is the traffic a task puts on every link of its path.
    """
    n_all = num_tasks if num_tasks is not None else (max((t.id for t in tasks), default=-1) + 1)
    ups = np.zeros(n_all)
    alpha = np.zeros(n_all)
    placement: dict[int, Option] = {}
    committed: set[int] = set()
    res = ResidualState(topology, path_set)
    caps = np.array([n.capacity for n in topology.nodes])

    for task in _order_by_deadline(tasks, order):
        k = task.id
        node_res = res.residual_nodes()
        node_res[node_res < STARVED_SHARE * caps] = 0.0  # rounding leftovers
        cands = feasible_nodes(res, path_set, float(link_rate[k]), k)
        best, best_val = None, np.inf
        for opt in cands:  # already in (node, path) order, so ties keep the first
            avail = node_res[topology.node_index(opt[0])]
            val = (task.load / avail if avail > 0 else np.inf) + prop_latency(path_set, opt)
            if val < best_val:
                best, best_val = opt, val
        if best is None:
            best = cands[0] if cands else (topology.bbu, 0)
        ni = topology.node_index(best[0])
        avail = node_res[ni]
        prop = prop_latency(path_set, best)
        budget = task.max_latency - radio_latency[k] - prop
        if budget > 0 and avail >= task.load / budget:
            ups[k] = task.load / budget
            alpha[k] = 0.0
        else:
            ups[k] = avail if avail > 0 else STARVED_SHARE * caps[ni]
            alpha[k] = max(radio_latency[k] + task.load / ups[k] + prop - task.max_latency, 0.0)
        placement[k] = best
        if avail > 0:
            res.commit(k, best, ups[k], float(link_rate[k]))
            committed.add(k)
    return PlacementResult(placement, ups, alpha, committed)


def compute_energy(topology: Topology, placement, upsilon, tasks=None) -> float:
    """sum_k Lambda_{n_k} * upsilon_k^3 over placed tasks."""
    ids = sorted(placement) if tasks is None else sorted(t.id for t in tasks)
    return float(sum(topology.node(placement[k][0]).energy_coeff * upsilon[k] ** 3 for k in ids))


def place_optimize(
    tasks,
    placement: dict[int, Option],
    upsilon,
    radio_latency,
    link_rate,
    topology: Topology,
    path_set: PathSet,
) -> tuple[dict[int, Option], np.ndarray]:
    """One pass of compute-energy reducing moves.

    Tasks are visited from the largest compute power down.  For each one the
    first option (in node/path order) that is no farther than the current one,
    has room for the minimal CPU share and does not raise the task's compute
    power is taken.  The input must have zero slack everywhere.
    """
    placement = dict(placement)
    ups = np.array(upsilon, dtype=float)
    res = ResidualState(topology, path_set)
    for t in tasks:
        res.commit(t.id, placement[t.id], ups[t.id], float(link_rate[t.id]))

    def power(t):
        return topology.node(placement[t.id][0]).energy_coeff * ups[t.id] ** 3

    for task in sorted(tasks, key=lambda t: (-power(t), t.id)):
        k = task.id
        cur = placement[k]
        cur_power = power(task)
        if task.max_latency - radio_latency[k] - prop_latency(path_set, cur) <= 0:
            raise AssertionError(f"task {k} has no latency budget left at its current placement")
        node_res = res.residual_nodes(exclude=k)
        for opt in better_nodes(res, path_set, float(link_rate[k]), cur, k):
            budget = task.max_latency - radio_latency[k] - prop_latency(path_set, opt)
            if budget <= 0:
                continue
            u_new = task.load / budget
            node = topology.node(opt[0])
            if node_res[topology.node_index(opt[0])] >= u_new and node.energy_coeff * u_new**3 <= cur_power:
                res.release(k)
                res.commit(k, opt, u_new, float(link_rate[k]))
                placement[k] = opt
                ups[k] = u_new
                break
    return placement, ups
