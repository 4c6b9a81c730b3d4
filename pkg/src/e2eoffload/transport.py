"""Transport network: NFV node graph, candidate paths from the BBU node and
residual capacity bookkeeping for the placement heuristics."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

# latencies are compared after rounding so that 0.01 + 0.01 ties with 0.02
_LAT_DIGITS = 12


@dataclass(frozen=True)
class Node:
    id: int
    capacity: float  # cycles/s
    energy_coeff: float  # W per (cycles/s)^3
    is_bbu: bool = False


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    capacity: float  # bps
    latency: float  # one-way, seconds


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        bbus = [n.id for n in self.nodes if n.is_bbu]
        if len(bbus) != 1:
            raise ValueError(f"exactly one BBU node required, got {len(bbus)}")
        for n in self.nodes:
            if not (n.capacity > 0 and n.energy_coeff > 0):
                raise ValueError(f"node {n.id}: capacity and energy coefficient must be positive")
        seen = set()
        for ln in self.links:
            if ln.a == ln.b:
                raise ValueError(f"self loop on node {ln.a}")
            if ln.a not in ids or ln.b not in ids:
                raise ValueError(f"link ({ln.a}, {ln.b}) references an unknown node")
            key = frozenset((ln.a, ln.b))
            if key in seen:
                raise ValueError(f"parallel link ({ln.a}, {ln.b})")
            seen.add(key)
            if not (ln.capacity > 0 and ln.latency > 0):
                raise ValueError(f"link ({ln.a}, {ln.b}): capacity and latency must be positive")
        if not nx.is_connected(self.graph()):
            raise ValueError("topology graph is not connected")

    @property
    def bbu(self) -> int:
        return next(n.id for n in self.nodes if n.is_bbu)

    @property
    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def node(self, node_id: int) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def node_index(self, node_id: int) -> int:
        return self.node_ids.index(node_id)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(n.id for n in self.nodes)
        for i, ln in enumerate(self.links):
            g.add_edge(ln.a, ln.b, latency=ln.latency, index=i)
        return g

    def to_dot(self) -> str:
        lines = ["graph nfv {"]
        for n in self.nodes:
            shape = "doublecircle" if n.is_bbu else "box"
            lines.append(f'  n{n.id} [shape={shape}, label="{n.id}\\n{n.capacity:.3g} c/s"];')
        for ln in self.links:
            lines.append(
                f'  n{ln.a} -- n{ln.b} [label="{ln.latency * 1e3:.3g} ms / {ln.capacity:.3g} bps"];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Path:
    node: int  # destination node
    hops: tuple[int, ...]  # node sequence starting at the BBU node
    links: tuple[int, ...]  # indices into Topology.links
    latency: float  # one-way

    @property
    def round_trip(self) -> float:
        return 2.0 * self.latency


@dataclass(frozen=True)
class PathSet:
    """Candidate paths per destination node, ordered by one-way latency."""

    paths: dict[int, tuple[Path, ...]]

    def __getitem__(self, node_id: int) -> tuple[Path, ...]:
        return self.paths[node_id]

    def options(self) -> list[tuple[int, int]]:
        """Every (node, path index) pair, ordered by node id then path index."""
        return [(n, b) for n in sorted(self.paths) for b in range(len(self.paths[n]))]

    def path(self, option: tuple[int, int]) -> Path:
        n, b = option
        return self.paths[n][b]


def enumerate_paths(topology: Topology, b_max: int) -> PathSet:
    """Up to ``b_max`` loopless paths from the BBU node to every node.

    Paths come out in non-decreasing one-way latency; equal latencies are
    ordered by the node-id sequence so the result does not depend on graph
    iteration order.
    """
    if b_max < 1:
        raise ValueError("b_max must be >= 1")
    g = topology.graph()
    src = topology.bbu
    out: dict[int, tuple[Path, ...]] = {}
    for n in topology.node_ids:
        if n == src:
            out[n] = (Path(n, (src,), (), 0.0),)
            continue
        found = []
        cutoff = None
        # shortest_simple_paths yields in non-decreasing weight; keep going
        # past b_max while latencies tie with the b_max-th path
        for hops in nx.shortest_simple_paths(g, src, n, weight="latency"):
            lat = round(nx.path_weight(g, hops, "latency"), _LAT_DIGITS)
            if cutoff is not None and lat > cutoff:
                break
            found.append((lat, tuple(hops)))
            if len(found) == b_max:
                cutoff = lat
        found.sort()
        paths = []
        for _, hops in found[:b_max]:
            idx = tuple(g.edges[u, v]["index"] for u, v in zip(hops[:-1], hops[1:]))
            lat = sum(topology.links[i].latency for i in idx)
            paths.append(Path(n, hops, idx, lat))
        out[n] = tuple(paths)
    return PathSet(out)


def prop_latency(path_set: PathSet, option: tuple[int, int] | None) -> float:
    """Round-trip propagation latency of a task placed on ``option``."""
    if option is None:
        raise ValueError("task has no placement")
    return path_set.path(option).round_trip


@dataclass
class ResidualState:
    """Committed node cycles and link rates of the tasks placed so far.

    Totals are re-summed in task-id order from the commitment table, so a
    commit followed by a release restores the previous totals bit for bit.
    """

    topology: Topology
    path_set: PathSet
    commitments: dict[int, tuple[tuple[int, int], float, float]] = field(default_factory=dict)
    _node_used: np.ndarray | None = field(default=None, repr=False)
    _link_used: np.ndarray | None = field(default=None, repr=False)

    def commit(self, task: int, option: tuple[int, int], upsilon: float, rate: float):
        if task in self.commitments:
            raise ValueError(f"task {task} already committed")
        self.commitments[task] = (option, float(upsilon), float(rate))
        self._node_used = self._link_used = None

    def release(self, task: int):
        del self.commitments[task]
        self._node_used = self._link_used = None

    def _totals(self):
        if self._node_used is None:
            node_used = np.zeros(len(self.topology.nodes))
            link_used = np.zeros(len(self.topology.links))
            for k in sorted(self.commitments):
                option, ups, rate = self.commitments[k]
                node_used[self.topology.node_index(option[0])] += ups
                for li in self.path_set.path(option).links:
                    link_used[li] += rate
            self._node_used, self._link_used = node_used, link_used
        return self._node_used, self._link_used

    def node_used(self) -> np.ndarray:
        return self._totals()[0].copy()

    def link_used(self) -> np.ndarray:
        return self._totals()[1].copy()

    def residual_nodes(self, exclude: int | None = None) -> np.ndarray:
        """Unused cycles/s per node, with ``exclude``'s own commitment handed back."""
        node_used, _ = self._totals()
        res = np.array([n.capacity for n in self.topology.nodes]) - node_used
        if exclude is not None and exclude in self.commitments:
            option, ups, _ = self.commitments[exclude]
            res[self.topology.node_index(option[0])] += ups
        return res

    def residual_links(self, exclude: int | None = None) -> np.ndarray:
        _, link_used = self._totals()
        res = np.array([ln.capacity for ln in self.topology.links]) - link_used
        if exclude is not None and exclude in self.commitments:
            option, _, rate = self.commitments[exclude]
            for li in self.path_set.path(option).links:
                res[li] += rate
        return res


def feasible_nodes(residuals: ResidualState, path_set: PathSet, rate: float, task: int) -> list[tuple[int, int]]:
    """All (node, path) pairs whose links can each carry ``rate`` on top of
    everybody else's traffic."""
    link_res = residuals.residual_links(exclude=task)
    out = []
    for option in path_set.options():
        if all(rate <= link_res[li] for li in path_set.path(option).links):
            out.append(option)
    return out


def better_nodes(
    residuals: ResidualState,
    path_set: PathSet,
    rate: float,
    current: tuple[int, int],
    task: int,
) -> list[tuple[int, int]]:
    limit = prop_latency(path_set, current)
    return [
        o for o in feasible_nodes(residuals, path_set, rate, task) if prop_latency(path_set, o) <= limit
    ]
