"""End-to-end acceptance suite; prints one PASS/FAIL line per criterion."""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from e2eoffload import expcli, lto, radio
from e2eoffload import pipelines as pp
from e2eoffload.scenario import ScenarioConfig, TaskClass, generate_instance, load_config

from oracles import node_grid_min_slack

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SAFETY_TOL = 1e-9


@pytest.fixture
def report(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {num}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def non_increasing(seq):
    return all(b <= a for a, b in zip(seq, seq[1:]))


@pytest.fixture(scope="module")
def jto_runs():
    cfg = ScenarioConfig(task_classes=(TaskClass(30, max_latency=0.02),))
    t0 = time.monotonic()
    runs = []
    for seed in range(20):
        inst = generate_instance(cfg, seed)
        runs.append((inst, pp.run_jto(inst)))
    return runs, time.monotonic() - t0


def test_c1_monotone_slack(jto_runs, report):
    runs, wall = jto_runs
    bad = [seed for seed, (_, sol) in enumerate(runs) if not all(non_increasing(t) for t in sol.alpha_traces)]
    report(1, not bad and wall < 120, f"20 instances, non-monotone seeds={bad}, wall={wall:.1f}s")


def test_c2_monotone_energy(jto_runs, report):
    runs, _ = jto_runs
    bad = [seed for seed, (_, sol) in enumerate(runs) if not non_increasing(sol.energy_trace)]
    report(2, not bad, f"20 instances, non-monotone seeds={bad}")


def test_c3_ccp_safety(jto_runs, report):
    runs, _ = jto_runs
    worst = np.inf
    checked = 0
    sols = [(inst, sol) for inst, sol in runs]
    for inst, _ in runs[:5]:
        sols.append((inst, pp.run_dto(inst, 0.01)))
    for inst, sol in sols:
        rep = pp.solution_check(inst, sol)
        ok_flags = rep.power_ok and rep.placed_ok
        worst = min(worst, rep.e2e_slack, rep.node_slack, rep.link_slack, rep.fronthaul_slack,
                    0.0 if ok_flags else -np.inf)
        for res in sol.power_results:
            if res.usable:
                worst = min(worst, res.floor_slack.min(initial=np.inf), res.row_slack.min(initial=np.inf))
                checked += 1
    report(3, worst >= -SAFETY_TOL, f"{len(sols)} solutions, {checked} power vectors, worst slack={worst:.3g}")


def test_c4_kkt_oracle(report):
    rng = np.random.default_rng(2024)
    t0 = time.monotonic()
    worst_gap, worst_res = 0.0, 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        loads = rng.uniform(1e5, 5e6, n)
        tt = rng.uniform(-0.005, 0.05, n)
        cap = float(rng.uniform(1e7, 1e9))
        r = lto.kkt_allocate(loads, tt, cap)
        oracle, _ = node_grid_min_slack(loads, tt, cap)
        worst_gap = max(worst_gap, abs(r.alpha.sum() - oracle))
        if r.lam > 0:
            worst_res = max(worst_res, abs(r.upsilon.sum() - cap) / cap)
    wall = time.monotonic() - t0
    ok = worst_gap <= 1e-3 and worst_res <= 1e-6 and wall < 60
    report(4, ok, f"max |gap|={worst_gap:.3g}s, max rel residual={worst_res:.3g}, wall={wall:.1f}s")


def test_c5_optimality_gap(report):
    base = load_config((CONFIGS / "two_node.toml").read_text())
    t0 = time.monotonic()
    gaps = {}
    for T in (0.02, 0.04, 0.06, 0.08, 0.1):
        jto_ar, lto_ar = [], []
        for seed in range(10):
            inst = generate_instance(base.with_param("T", T), seed)
            jto_ar.append(pp.run_jto(inst).acceptance_ratio)
            lto_ar.append(lto.lto_search(inst).admitted / inst.num_tasks)
        gaps[T] = float(np.mean(lto_ar) - np.mean(jto_ar))
    wall = time.monotonic() - t0
    ok = max(gaps.values()) <= 0.10 and wall < 600
    detail = ", ".join(f"T={T * 1e3:.0f}ms gap={g:.3f}" for T, g in gaps.items())
    report(5, ok, f"{detail}, wall={wall:.0f}s")


def test_c6_class_trends(report):
    t0 = time.monotonic()
    caps = (1e9, 1e10, 2e10, 5e10)
    summary = expcli.summarize_classes(expcli.run_class_experiment(capacities=caps, trials=10))
    wall = time.monotonic() - t0
    ar = {c: [summary[(c, j)] for j in (1, 2, 3)] for c in caps}
    a = all(ar[c1][j] <= ar[c2][j] for c1, c2 in zip(caps, caps[1:]) for j in range(3))
    b = all(non_increasing(ar[c][::-1]) for c in caps)
    c = all(v == 1.0 for v in ar[2e10])
    d = ar[1e9][0] <= 0.1
    table = "; ".join(f"C={c:.0e}: " + "/".join(f"{v:.2f}" for v in ar[c]) for c in caps)
    report(6, a and b and c and d and wall < 300,
           f"(a)={a} (b)={b} (c)={c} (d)={d} [{table}] wall={wall:.0f}s")


def test_c7_jto_vs_dto(report):
    T = 0.03
    cfg = ScenarioConfig(task_classes=(TaskClass(30, max_latency=T),))
    grid = [T * i / 9 for i in range(1, 9)]
    jto_ar, dto_ar = [], {t: [] for t in grid}
    for seed in range(10):
        inst = generate_instance(cfg, seed)
        jto_ar.append(pp.run_jto(inst).acceptance_ratio)
        for t in grid:
            dto_ar[t].append(pp.run_dto(inst, t).acceptance_ratio)
    j = float(np.mean(jto_ar))
    d = {t: float(np.mean(v)) for t, v in dto_ar.items()}
    ok = all(j >= v for v in d.values())
    report(7, ok, f"JTO={j:.3f}, DTO=" + "/".join(f"{v:.3f}" for v in d.values()))


def _split_means(param, values, seeds=3):
    cfg = ScenarioConfig(task_classes=(TaskClass(30, max_latency=0.02),))
    rows = expcli.run_sweep(expcli.SweepSpec(cfg, param, tuple(values), trials=seeds))
    tx = [np.nanmean([r.mean_ttx_s for r in rows if r.value == v]) for v in values]
    exe = [np.nanmean([r.mean_texe_s for r in rows if r.value == v]) for v in values]
    return spearmanr(values, tx)[0], spearmanr(values, exe)[0]


def test_c8_latency_split(report):
    d_tx, d_exe = _split_means("D", (5e4, 1e5, 1.5e5, 2e5, 2.5e5))
    l_tx, l_exe = _split_means("L", (2.5e5, 5e5, 1e6, 1.5e6, 2e6))
    ok = d_tx > 0 and d_exe < 0 and l_tx < 0 and l_exe > 0
    report(8, ok, f"D sweep: rho(tx)={d_tx:.2f} rho(exe)={d_exe:.2f}; L sweep: rho(tx)={l_tx:.2f} rho(exe)={l_exe:.2f}")


def test_c9_gradients(report):
    inst = generate_instance(ScenarioConfig(task_classes=(TaskClass(6),)), 0)
    env = inst.radio
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(1000):
        rho = rng.uniform(0.05, 0.45, env.num_users) * env.power_budget / 0.5
        k = int(rng.integers(env.num_users))
        gh, gg = radio.grad_h(env, rho, k), radio.grad_g(env, rho, k)
        scale = max(np.abs(gh).max(), np.abs(gg).max())
        for i in range(env.num_users):
            step = 1e-4 * rho[i]  # small enough for truncation, large enough against cancellation
            e = np.zeros(env.num_users)
            e[i] = step
            hp, gp = radio.h_g_split(env, rho + e)
            hm, gm = radio.h_g_split(env, rho - e)
            fd_h = (hp[k] - hm[k]) / (2 * step)
            fd_g = (gp[k] - gm[k]) / (2 * step)
            worst = max(worst, abs(fd_h - gh[i]) / max(abs(gh[i]), 1e-12 * scale),
                        abs(fd_g - gg[i]) / max(abs(gg[i]), 1e-12 * scale) if gg[i] != 0 else abs(fd_g) / scale)
    report(9, worst <= 1e-4, f"1000 points, worst relative error={worst:.3g}")


def test_c10_determinism(report):
    cfg = load_config((CONFIGS / "two_node.toml").read_text()).with_param("K", 6)
    spec = expcli.SweepSpec(cfg, "T", (0.02, 0.05), trials=2, algos=("jto", "dto", "lto"))
    a = expcli.rows_to_csv(expcli.run_sweep(spec)).encode()
    b = expcli.rows_to_csv(expcli.run_sweep(spec)).encode()
    report(10, a == b, f"{len(a)} bytes, identical={a == b}")
