"""Brute-force references used by the tests. Nothing here shares code with
the package beyond plain numpy."""

import itertools

import numpy as np


def slack_of(loads, t_tilde, ups):
    with np.errstate(divide="ignore"):
        return float(np.sum(np.maximum(loads / ups - t_tilde, 0.0)))


def node_grid_min_slack(loads, t_tilde, capacity, points=10_000, sweeps=60):
    """min sum_k [L_k/u_k - Tt_k]^+ s.t. sum u = capacity, u > 0.

    Pairwise exchange on a grid of ``points`` transfers, shrinking the
    transfer range whenever a sweep makes no progress.  The objective is
    separable and convex, so pairwise optimality is global optimality.
    """
    loads = np.asarray(loads, float)
    t_tilde = np.asarray(t_tilde, float)
    n = len(loads)
    ups = np.full(n, capacity / n)
    if n == 1:
        return slack_of(loads, t_tilde, ups), ups
    width = capacity
    best = slack_of(loads, t_tilde, ups)
    for _ in range(sweeps):
        improved = False
        for i, j in itertools.combinations(range(n), 2):
            pair = ups[i] + ups[j]
            lo = max(1e-12 * capacity, ups[i] - width)
            hi = min(pair - 1e-12 * capacity, ups[i] + width)
            ui = np.linspace(lo, hi, points)
            uj = pair - ui
            with np.errstate(divide="ignore"):
                f = np.maximum(loads[i] / ui - t_tilde[i], 0) + np.maximum(loads[j] / uj - t_tilde[j], 0)
            m = int(np.argmin(f))
            cur = slack_of(loads[[i, j]], t_tilde[[i, j]], ups[[i, j]])
            if f[m] < cur - 1e-15:
                ups[i], ups[j] = ui[m], uj[m]
                improved = True
        new = slack_of(loads, t_tilde, ups)
        if not improved or best - new < 1e-14:
            width *= 0.1
        best = new
        if width < 1e-9 * capacity:
            break
    return best, ups


def placement_grid_min_slack(loads, t_tilde_by_option, option_node, capacities):
    """Exhaustive placements, grid allocation per node."""
    k, n_opt = t_tilde_by_option.shape
    best = (np.inf, None)
    for combo in itertools.product(range(n_opt), repeat=k):
        total = 0.0
        for node in set(option_node[c] for c in combo):
            sel = [i for i in range(k) if option_node[combo[i]] == node]
            tt = np.array([t_tilde_by_option[i, combo[i]] for i in sel])
            total += node_grid_min_slack(loads[sel], tt, capacities[node])[0]
        if total < best[0]:
            best = (total, combo)
    return best


def single_user_min_power(data_bits, deadline, gain, noise, bandwidth):
    """Power that exactly meets ``D / R = deadline`` for one isolated user."""
    return noise * (2 ** (data_bits / deadline / bandwidth) - 1) / gain
