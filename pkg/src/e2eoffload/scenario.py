"""Experiment configuration and seeded scenario generation.

A configuration is a TOML document with ``[radio]``, ``[topology]``,
``[tasks]``, ``[algo]`` and ``[rng]`` sections; anything omitted falls back
to the simulation setup defaults below (4 RRHs, 32 antennas, 20 MHz, six
NFV nodes in three tiers, ...).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import radio as _radio
from .transport import Link, Node, PathSet, Topology, enumerate_paths


class ConfigError(ValueError):
    """Invalid configuration document."""


@dataclass(frozen=True)
class Task:
    id: int
    load: float  # CPU cycles
    data_size: float  # bits
    max_latency: float  # seconds
    class_label: int | None = None

    def __post_init__(self):
        if not (self.load > 0 and self.data_size > 0 and self.max_latency > 0):
            raise ValueError(f"task {self.id}: load, data_size and max_latency must be positive")


@dataclass(frozen=True)
class TaskClass:
    count: int
    load: float = 1e6
    data_size: float = 1e5
    max_latency: float = 0.02


@dataclass(frozen=True)
class RadioConfig:
    num_rrhs: int = 4
    antennas: int = 32
    bandwidth: float = 20e6
    noise_psd_dbm_hz: float = -150.0
    power_budget: float = 0.5
    fronthaul_capacity: float = 0.6e9
    inter_site_distance: float = 100.0
    user_area_radius: float = 100.0

    @property
    def noise_power(self) -> float:
        return _radio.noise_power_w(self.noise_psd_dbm_hz, self.bandwidth)


@dataclass(frozen=True)
class AlgoConfig:
    eps: float = 1e-3
    i_max: int = 50
    i_rho_max: int = 100
    b_max: int = 4
    eta: float = 1.0
    t_ran: float | None = None  # DTO radio budget, seconds
    bisection_tol: float = 1e-12
    rho_init: float = 1e-8  # W, starting power of the feasibility phase
    lto_budget: int = 10_000_000
    i_feas_ccp: int = 10  # CCP steps per power update of the feasibility loops


def _node(id, capacity=1e9, energy_coeff=1e-28, is_bbu=False):
    return Node(id, capacity, energy_coeff, is_bbu)


def default_topology() -> Topology:
    """Six nodes: BBU (local tier), three regional nodes, two national nodes.

    Every link has 10 ms one-way latency and 0.4 Gbps, so regional nodes sit
    at 20 ms round trip and national nodes at 40 ms.
    """
    nodes = (_node(0, is_bbu=True),) + tuple(_node(i) for i in range(1, 6))
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (2, 3), (1, 4), (2, 4), (2, 5), (3, 5)]
    return Topology(nodes, tuple(Link(a, b, 0.4e9, 0.01) for a, b in pairs))


@dataclass(frozen=True)
class ScenarioConfig:
    radio: RadioConfig = field(default_factory=RadioConfig)
    topology: Topology = field(default_factory=default_topology)
    task_classes: tuple[TaskClass, ...] = (TaskClass(30),)
    algo: AlgoConfig = field(default_factory=AlgoConfig)
    seed: int = 0

    def __post_init__(self):
        r = self.radio
        for name in ("bandwidth", "power_budget", "fronthaul_capacity", "inter_site_distance", "user_area_radius"):
            if not getattr(r, name) > 0:
                raise ConfigError(f"radio.{name} must be positive")
        if r.num_rrhs < 1 or r.antennas < 1:
            raise ConfigError("radio.num_rrhs and radio.antennas must be >= 1")
        if not r.noise_power > 0:
            raise ConfigError("noise power must be positive")
        if not self.task_classes:
            raise ConfigError("tasks: at least one task class required")
        for c in self.task_classes:
            if c.count < 1 or not (c.load > 0 and c.data_size > 0 and c.max_latency > 0):
                raise ConfigError(f"tasks: invalid class {c}")
        a = self.algo
        if not (a.eps > 0 and a.i_max >= 1 and a.i_rho_max >= 1 and a.b_max >= 1 and a.eta >= 0):
            raise ConfigError("algo: eps > 0, i_max/i_rho_max/b_max >= 1 and eta >= 0 required")
        if a.t_ran is not None and not a.t_ran > 0:
            raise ConfigError("algo.t_ran must be positive")

    @property
    def num_users(self) -> int:
        return sum(c.count for c in self.task_classes)

    def with_param(self, param: str, value) -> "ScenarioConfig":
        """Copy with one experiment axis changed (T, K, C, D, L or T_RAN)."""
        p = param.upper()
        if p == "C":
            nodes = tuple(dataclasses.replace(n, capacity=float(value)) for n in self.topology.nodes)
            return dataclasses.replace(self, topology=Topology(nodes, self.topology.links))
        if p == "T_RAN":
            return dataclasses.replace(self, algo=dataclasses.replace(self.algo, t_ran=float(value)))
        if p == "K":
            if len(self.task_classes) != 1:
                raise ConfigError("K can only be swept with a single task template")
            return dataclasses.replace(
                self, task_classes=(dataclasses.replace(self.task_classes[0], count=int(value)),)
            )
        attr = {"T": "max_latency", "D": "data_size", "L": "load"}.get(p)
        if attr is None:
            raise ConfigError(f"unknown sweep parameter {param!r}")
        classes = tuple(dataclasses.replace(c, **{attr: float(value)}) for c in self.task_classes)
        return dataclasses.replace(self, task_classes=classes)


@dataclass(frozen=True)
class ScenarioInstance:
    config: ScenarioConfig
    tasks: tuple[Task, ...]
    radio: _radio.RadioEnvironment
    topology: Topology
    path_set: PathSet
    user_positions: np.ndarray
    rrh_positions: np.ndarray
    seed: int

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    @property
    def loads(self) -> np.ndarray:
        return np.array([t.load for t in self.tasks])

    @property
    def data_sizes(self) -> np.ndarray:
        return np.array([t.data_size for t in self.tasks])

    @property
    def max_latencies(self) -> np.ndarray:
        return np.array([t.max_latency for t in self.tasks])


def _section(doc, name):
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _take(sec, section, key, cast, default, positive=False):
    if key not in sec:
        return default
    try:
        val = cast(sec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from None
    if positive and not val > 0:
        raise ConfigError(f"{section}.{key} must be positive, got {val!r}")
    return val


def _check_keys(sec, section, allowed):
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"[{section}] unknown field(s): {', '.join(sorted(extra))}")


def _parse_topology(sec) -> Topology:
    if not sec:
        return default_topology()
    _check_keys(sec, "topology", ("nodes", "links"))
    nodes, links = [], []
    for i, nd in enumerate(sec.get("nodes", [])):
        _check_keys(nd, f"topology.nodes[{i}]", ("id", "capacity", "lambda", "is_bbu"))
        if "id" not in nd:
            raise ConfigError(f"topology.nodes[{i}].id missing")
        where = f"topology.nodes[{i}]"
        nodes.append(Node(
            int(nd["id"]),
            _take(nd, where, "capacity", float, 1e9, positive=True),
            _take(nd, where, "lambda", float, 1e-28, positive=True),
            bool(nd.get("is_bbu", False)),
        ))
    for i, ln in enumerate(sec.get("links", [])):
        where = f"topology.links[{i}]"
        _check_keys(ln, where, ("a", "b", "capacity_bps", "latency_s"))
        if "a" not in ln or "b" not in ln:
            raise ConfigError(f"{where}: endpoints a and b required")
        links.append(Link(
            int(ln["a"]), int(ln["b"]),
            _take(ln, where, "capacity_bps", float, 0.4e9, positive=True),
            _take(ln, where, "latency_s", float, 0.01, positive=True),
        ))
    if not any(n.is_bbu for n in nodes):
        raise ConfigError("topology: no BBU node (set is_bbu = true on one node)")
    try:
        return Topology(tuple(nodes), tuple(links))
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from None


def _parse_tasks(sec) -> tuple[TaskClass, ...]:
    _check_keys(sec, "tasks", ("K", "L", "D", "T", "classes"))
    if "classes" in sec:
        out = []
        for i, c in enumerate(sec["classes"]):
            where = f"tasks.classes[{i}]"
            _check_keys(c, where, ("count", "L", "D", "T"))
            out.append(TaskClass(
                _take(c, where, "count", int, 10, positive=True),
                _take(c, where, "L", float, 1e6, positive=True),
                _take(c, where, "D", float, 1e5, positive=True),
                _take(c, where, "T", float, 0.02, positive=True),
            ))
        return tuple(out)
    return (TaskClass(
        _take(sec, "tasks", "K", int, 30, positive=True),
        _take(sec, "tasks", "L", float, 1e6, positive=True),
        _take(sec, "tasks", "D", float, 1e5, positive=True),
        _take(sec, "tasks", "T", float, 0.02, positive=True),
    ),)


def load_config(text: str) -> ScenarioConfig:
    """Parse and validate a TOML configuration document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed document: {exc}") from None
    _check_keys(doc, "<root>", ("radio", "topology", "tasks", "algo", "rng"))

    r = _section(doc, "radio")
    _check_keys(r, "radio", (
        "num_rrhs", "antennas", "bandwidth_hz", "noise_psd_dbm_hz", "power_budget_w",
        "fronthaul_capacity_bps", "inter_site_distance_m", "user_area_radius_m",
    ))
    d = RadioConfig()
    radio_cfg = RadioConfig(
        _take(r, "radio", "num_rrhs", int, d.num_rrhs, positive=True),
        _take(r, "radio", "antennas", int, d.antennas, positive=True),
        _take(r, "radio", "bandwidth_hz", float, d.bandwidth, positive=True),
        _take(r, "radio", "noise_psd_dbm_hz", float, d.noise_psd_dbm_hz),
        _take(r, "radio", "power_budget_w", float, d.power_budget, positive=True),
        _take(r, "radio", "fronthaul_capacity_bps", float, d.fronthaul_capacity, positive=True),
        _take(r, "radio", "inter_site_distance_m", float, d.inter_site_distance, positive=True),
        _take(r, "radio", "user_area_radius_m", float, d.user_area_radius, positive=True),
    )

    a = _section(doc, "algo")
    _check_keys(a, "algo", ("eps", "i_max", "i_rho_max", "b_max", "eta", "t_ran", "bisection_tol", "rho_init", "lto_budget", "i_feas_ccp"))
    da = AlgoConfig()
    algo_cfg = AlgoConfig(
        eps=_take(a, "algo", "eps", float, da.eps, positive=True),
        i_max=_take(a, "algo", "i_max", int, da.i_max, positive=True),
        i_rho_max=_take(a, "algo", "i_rho_max", int, da.i_rho_max, positive=True),
        b_max=_take(a, "algo", "b_max", int, da.b_max, positive=True),
        eta=_take(a, "algo", "eta", float, da.eta),
        t_ran=_take(a, "algo", "t_ran", float, da.t_ran, positive=True),
        bisection_tol=_take(a, "algo", "bisection_tol", float, da.bisection_tol, positive=True),
        rho_init=_take(a, "algo", "rho_init", float, da.rho_init, positive=True),
        lto_budget=_take(a, "algo", "lto_budget", int, da.lto_budget, positive=True),
        i_feas_ccp=_take(a, "algo", "i_feas_ccp", int, da.i_feas_ccp, positive=True),
    )
    if algo_cfg.eta < 0:
        raise ConfigError("algo.eta must be non-negative")

    rng = _section(doc, "rng")
    _check_keys(rng, "rng", ("seed",))
    return ScenarioConfig(
        radio=radio_cfg,
        topology=_parse_topology(_section(doc, "topology")),
        task_classes=_parse_tasks(_section(doc, "tasks")),
        algo=algo_cfg,
        seed=_take(rng, "rng", "seed", int, 0),
    )


def rrh_layout(num_rrhs: int, isd: float) -> np.ndarray:
    """RRHs on a square grid with spacing ``isd``, centred on the origin."""
    cols = math.ceil(math.sqrt(num_rrhs))
    rows = math.ceil(num_rrhs / cols)
    pts = [(c * isd, r * isd) for r in range(rows) for c in range(cols)][:num_rrhs]
    pts = np.array(pts, dtype=float)
    return pts - pts.mean(axis=0)


def generate_instance(config: ScenarioConfig, seed: int | None = None) -> ScenarioInstance:
    """Draw user positions and channels; topology and paths are deterministic."""
    seed = config.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    rc = config.radio
    k_users = config.num_users

    radius = rc.user_area_radius * np.sqrt(rng.random(k_users))
    theta = 2.0 * np.pi * rng.random(k_users)
    users = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    rrhs = rrh_layout(rc.num_rrhs, rc.inter_site_distance)

    env = _radio.generate_channels(
        users, rrhs, rc.antennas, rng,
        noise_power=rc.noise_power,
        bandwidth=rc.bandwidth,
        fronthaul=rc.fronthaul_capacity,
        power_budget=rc.power_budget,
    )
    tasks = []
    for label, c in enumerate(config.task_classes):
        for _ in range(c.count):
            tasks.append(Task(len(tasks), c.load, c.data_size, c.max_latency,
                              label if len(config.task_classes) > 1 else None))
    return ScenarioInstance(
        config=config,
        tasks=tuple(tasks),
        radio=env,
        topology=config.topology,
        path_set=enumerate_paths(config.topology, config.algo.b_max),
        user_positions=users,
        rrh_positions=rrhs,
        seed=seed,
    )
