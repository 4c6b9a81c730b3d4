"""Batch experiments: seeded Monte Carlo sweeps written as CSV.

    e2eoffload run --sweep T=0.01,0.02,0.05 --algos jto,dto --trials 10 --out res.csv
    e2eoffload classes --capacities 1e9,1e10,2e10,5e10 --out classes.csv
    e2eoffload trace --seed 3 --out trace.csv
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lto as _lto
from . import pipelines as _pp
from . import radio as _radio
from .scenario import ConfigError, ScenarioConfig, TaskClass, generate_instance, load_config
from .transport import Link, Node, Topology

HEADER = [
    "seed", "algo", "param", "value", "acceptance_ratio", "energy_w", "mean_ttx_s",
    "mean_texe_s", "mean_tprop_s", "iters", "wall_s", "placement_hist",
]
SWEEP_PARAMS = ("T", "K", "C", "D", "L", "T_RAN")
ALGOS = ("jto", "dto", "lto")
_ALGO_RANK = {a: i for i, a in enumerate(ALGOS)}


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return f"{x:.10g}"


@dataclass(frozen=True)
class SweepSpec:
    config: ScenarioConfig
    param: str
    values: tuple[float, ...]
    trials: int = 10
    algos: tuple[str, ...] = ("jto",)
    seed: int = 0
    workers: int = 1
    timing: bool = False
    order: str = "ascending"

    def __post_init__(self):
        if self.param.upper() not in SWEEP_PARAMS:
            raise ConfigError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMS)}, got {self.param!r}")
        if not self.values:
            raise ConfigError("sweep value list is empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        bad = [a for a in self.algos if a not in ALGOS]
        if bad or not self.algos:
            raise ConfigError(f"unknown algorithm(s): {', '.join(bad) or '<none>'}")


@dataclass
class ResultRow:
    seed: int
    algo: str
    param: str
    value: float
    acceptance_ratio: float
    energy_w: float
    mean_ttx_s: float
    mean_texe_s: float
    mean_tprop_s: float
    iters: int
    wall_s: float
    placement_hist: str
    error: str = field(default="", compare=False)

    def cells(self) -> list[str]:
        return [
            str(self.seed), self.algo, self.param, _fmt(self.value), _fmt(self.acceptance_ratio),
            _fmt(self.energy_w), _fmt(self.mean_ttx_s), _fmt(self.mean_texe_s), _fmt(self.mean_tprop_s),
            str(self.iters), _fmt(self.wall_s), self.placement_hist,
        ]


def _hist(inst, placement, ids) -> str:
    counts = {n: 0 for n in inst.topology.node_ids}
    for k in ids:
        counts[placement[k][0]] += 1
    return ";".join(f"n{n}:{c}" for n, c in sorted(counts.items()))


def _latency_means(inst, ids, tx, placement, upsilon):
    if not ids:
        return float("nan"), float("nan"), float("nan")
    ids = list(ids)
    exe = inst.loads[ids] / upsilon[ids]
    prop = [inst.path_set.path(placement[k]).round_trip for k in ids]
    return float(np.mean(tx[ids])), float(np.mean(exe)), float(np.mean(prop))


def _row_from_solution(inst, sol, seed, param, value, wall):
    tx = _radio.tx_latency(inst.data_sizes, _radio.rate(inst.radio, sol.rho))
    ttx, texe, tprop = _latency_means(inst, sol.accepted, tx, sol.placement, sol.upsilon)
    return ResultRow(seed, sol.algo, param, value, sol.acceptance_ratio, sol.energy, ttx, texe, tprop,
                     sol.iterations, wall, _hist(inst, sol.placement, sol.accepted))


def run_trial(config: ScenarioConfig, param: str, value, seed: int, algos, timing=False, order="ascending"):
    """All requested algorithms on one (value, seed) point."""
    cfg = config.with_param(param, value)
    inst = generate_instance(cfg, seed)
    clock = time.monotonic if timing else (lambda: 0.0)
    rows = []
    for algo in algos:
        t0 = clock()
        if algo == "jto":
            sol = _pp.run_jto(inst, order)
            rows.append(_row_from_solution(inst, sol, seed, param, value, clock() - t0))
        elif algo == "dto":
            sol = _pp.run_dto(inst, None, order)
            rows.append(_row_from_solution(inst, sol, seed, param, value, clock() - t0))
        else:
            try:
                res = _lto.lto_search(inst)
            except _lto.LtoBudgetError as exc:
                nan = float("nan")
                rows.append(ResultRow(seed, "lto", param, value, nan, nan, nan, nan, nan, 0, clock() - t0,
                                      f"ERROR budget {exc.required}>{exc.budget}", error=str(exc)))
                continue
            ok = [k for k in range(inst.num_tasks) if res.alpha[k] <= _lto.ALPHA_ZERO]
            ttx, texe, tprop = _latency_means(inst, ok, res.tx_latency, res.placement, res.upsilon)
            rows.append(ResultRow(seed, "lto", param, value, res.admitted / inst.num_tasks, float("nan"),
                                  ttx, texe, tprop, res.candidates, clock() - t0,
                                  _hist(inst, res.placement, ok)))
    return rows


def _trial_job(args):
    return run_trial(*args)


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_sweep(spec: SweepSpec) -> list[ResultRow]:
    """Every (value, trial) point of the sweep; rows sorted by value, seed, algorithm."""
    param = spec.param.upper()
    jobs = [
        (spec.config, param, v, spec.seed + i, spec.algos, spec.timing, spec.order)
        for v in spec.values
        for i in range(spec.trials)
    ]
    rows = [r for chunk in _map(_trial_job, jobs, spec.workers) for r in chunk]
    rows.sort(key=lambda r: (r.value, r.seed, _ALGO_RANK[r.algo]))
    return rows


def rows_to_csv(rows, header=HEADER) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r.cells() if isinstance(r, ResultRow) else [r[h] for h in header])
    return buf.getvalue()


def three_tier_config(capacity: float = 1e9, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Local, regional and national node in a chain; classes T = 10/50/100 ms."""
    base = base or ScenarioConfig()
    nodes = (Node(0, capacity, 1e-28, True), Node(1, capacity, 1e-28), Node(2, capacity, 1e-28))
    links = (Link(0, 1, 0.4e9, 0.01), Link(1, 2, 0.4e9, 0.01))
    classes = (TaskClass(10, 1e6, 1e5, 0.01), TaskClass(10, 1e6, 1e5, 0.05), TaskClass(10, 1e6, 1e5, 0.1))
    return ScenarioConfig(base.radio, Topology(nodes, links), classes, base.algo, base.seed)


CLASS_HEADER = ["capacity", "class", "T", "seed", "acceptance_ratio", "placement_hist"]


def _class_job(args):
    config, cap, seed, order = args
    cfg = config.with_param("C", cap)
    inst = generate_instance(cfg, seed)
    sol = _pp.run_jto(inst, order)
    out = []
    for label, tc in enumerate(cfg.task_classes):
        ids = [t.id for t in inst.tasks if (t.class_label if t.class_label is not None else 0) == label]
        acc = [k for k in ids if k in set(sol.accepted)]
        out.append({
            "capacity": _fmt(cap), "class": str(label + 1), "T": _fmt(tc.max_latency), "seed": str(seed),
            "acceptance_ratio": _fmt(len(acc) / len(ids)), "placement_hist": _hist(inst, sol.placement, acc),
        })
    return out


def run_class_experiment(config: ScenarioConfig | None = None, capacities=(1e9, 1e10, 2e10, 5e10),
                         trials: int = 10, seed: int = 0, workers: int = 1, order: str = "ascending"):
    """Per-class acceptance and placement of JTO for each node capacity."""
    config = config or three_tier_config()
    jobs = [(config, float(c), seed + i, order) for c in capacities for i in range(trials)]
    rows = [r for chunk in _map(_class_job, jobs, workers) for r in chunk]
    rows.sort(key=lambda r: (float(r["capacity"]), int(r["seed"]), int(r["class"])))
    return rows


def summarize_classes(rows):
    """Mean acceptance per (capacity, class)."""
    acc: dict[tuple[float, int], list[float]] = {}
    for r in rows:
        acc.setdefault((float(r["capacity"]), int(r["class"])), []).append(float(r["acceptance_ratio"]))
    return {key: float(np.mean(v)) for key, v in sorted(acc.items())}


def trace_rows(config: ScenarioConfig, seed: int, order: str = "ascending"):
    inst = generate_instance(config, seed)
    sol = _pp.run_jto(inst, order)
    rows = []
    for outer, tr in enumerate(sol.alpha_traces):
        for i, v in enumerate(tr):
            rows.append({"phase": "feasibility", "outer": str(outer), "iteration": str(i), "value": _fmt(v)})
    for i, v in enumerate(sol.energy_trace):
        rows.append({"phase": "energy", "outer": "0", "iteration": str(i), "value": _fmt(v)})
    return rows


# ---- command line ----

def _parse_sweep(text: str):
    if "=" not in text:
        raise ConfigError(f"--sweep expects param=v1,v2,..., got {text!r}")
    name, vals = text.split("=", 1)
    try:
        values = tuple(float(v) for v in vals.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"--sweep values: {exc}") from None
    return name.strip(), values


def _load(path):
    if path is None:
        return ScenarioConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return load_config(text)


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="e2eoffload", description="Task offloading experiments")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="parameter sweep")
    r.add_argument("--config", help="TOML scenario file (defaults when omitted)")
    r.add_argument("--sweep", required=True, help="param=v1,v2,... with param in " + ",".join(SWEEP_PARAMS))
    r.add_argument("--algos", default="jto", help="comma list of jto,dto,lto")
    r.add_argument("--trials", type=int, default=10)
    r.add_argument("--seed", type=int, default=None, help="base seed (default: config rng seed)")
    r.add_argument("--out", default="-")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--timing", action="store_true", help="record wall time (makes output non-reproducible)")
    r.add_argument("--order", choices=("ascending", "descending"), default="ascending",
                   help="deadline order of the greedy placement")

    c = sub.add_parser("classes", help="per-class acceptance vs node capacity (three-tier chain)")
    c.add_argument("--config", help="TOML scenario file; [radio] and [algo] are used")
    c.add_argument("--capacities", default="1e9,1e10,2e10,5e10")
    c.add_argument("--trials", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="-")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--order", choices=("ascending", "descending"), default="ascending")

    t = sub.add_parser("trace", help="convergence traces of one JTO run")
    t.add_argument("--config")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default="-")
    t.add_argument("--order", choices=("ascending", "descending"), default="ascending")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            cfg = _load(args.config)
            param, values = _parse_sweep(args.sweep)
            algos = tuple(a.strip().lower() for a in args.algos.split(",") if a.strip())
            spec = SweepSpec(cfg, param, values, args.trials, algos,
                             cfg.seed if args.seed is None else args.seed,
                             args.workers, args.timing, args.order)
            rows = run_sweep(spec)
            _emit(rows_to_csv(rows), args.out)
            errors = sorted({r.error for r in rows if r.error})
            if errors:
                print("error: " + "; ".join(errors), file=sys.stderr)
                return 3
            return 0
        if args.cmd == "classes":
            base = _load(args.config)
            caps = tuple(float(v) for v in args.capacities.split(","))
            rows = run_class_experiment(three_tier_config(base=base), caps, args.trials, args.seed,
                                        args.workers, args.order)
            _emit(rows_to_csv(rows, CLASS_HEADER), args.out)
            return 0
        cfg = _load(args.config)
        rows = trace_rows(cfg, cfg.seed if args.seed is None else args.seed, args.order)
        _emit(rows_to_csv(rows, ["phase", "outer", "iteration", "value"]), args.out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
