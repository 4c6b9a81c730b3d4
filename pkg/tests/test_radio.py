import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from e2eoffload import radio
from e2eoffload.radio import generate_channels, path_loss_db

from conftest import BW, NOISE, make_env


def random_env(seed, k=5):
    rng = np.random.default_rng(seed)
    users = rng.uniform(-100, 100, (k, 2))
    rrhs = np.array([[-25.0, 0.0], [25.0, 0.0]])
    return generate_channels(users, rrhs, 8, rng, noise_power=NOISE, bandwidth=BW, fronthaul=1e9, power_budget=0.5)


def test_path_loss_100m():
    assert path_loss_db(0.1) == pytest.approx(90.5, abs=1e-12)
    assert 10 ** (-path_loss_db(0.1) / 10) == pytest.approx(10 ** -9.05, rel=1e-12)


def test_cross_gain_expectation_monte_carlo():
    # E|h_k^H h_j|^2 / ||h_k||^2 = Q_j while gain[k][k] ~ M Q_k
    users = np.array([[10.0, 0.0], [0.0, 60.0]])
    rrh = np.array([[0.0, 0.0]])
    q = 10 ** (-path_loss_db(np.linalg.norm(users, axis=1) / 1e3) / 10)
    rng = np.random.default_rng(0)
    cross, own = [], []
    for _ in range(1000):
        env = generate_channels(users, rrh, 32, rng, noise_power=NOISE, bandwidth=BW, fronthaul=1e9, power_budget=0.5)
        cross.append(env.gain[0, 1])
        own.append(env.gain[0, 0])
    assert 0.5 < np.mean(cross) / q[1] < 2.0
    assert 0.5 < np.mean(own) / (32 * q[0]) < 2.0
    # relative interference ~ 1/M
    assert 0.5 < np.mean(np.array(cross) / np.array(own)) / (q[1] / (32 * q[0])) < 2.0


def test_channels_repeatable():
    a, b = random_env(5), random_env(5)
    assert np.array_equal(a.gain, b.gain)


def test_cauchy_schwarz_bound():
    users = np.random.default_rng(1).uniform(-50, 50, (6, 2))
    rrh = np.zeros((1, 2))
    rng = np.random.default_rng(2)
    env = generate_channels(users, rrh, 4, rng, noise_power=NOISE, bandwidth=BW, fronthaul=1e9, power_budget=0.5)
    # all users share one RRH, so ||h_j||^2 = gain[j][j]
    norms = np.diag(env.gain)
    assert np.all(env.gain <= norms[None, :] * (1 + 1e-12))


def test_sinr_single_user():
    env = make_env([[1e-10]])
    assert radio.sinr(env, [0.1], 0) == pytest.approx(0.5, rel=1e-12)
    assert radio.sinr(env, [0.0], 0) == 0.0


def test_rate_example():
    env = make_env([[1e-10]])
    assert radio.rate(env, [0.1], 0) == pytest.approx(2e7 * np.log2(1.5), rel=1e-12)
    assert radio.rate(env, [0.1], 0) == pytest.approx(1.1699e7, rel=1e-4)


def test_tx_latency():
    assert radio.tx_latency(1e5, 1e7) == pytest.approx(0.01)
    assert radio.tx_latency(1e5, 0.0) == np.inf
    env = make_env([[1e-10]])
    assert radio.tx_latency(1e5, radio.rate(env, [0.0], 0)) == np.inf


def test_no_cross_gain_is_orthogonal():
    g = np.diag([1e-10, 3e-11, 5e-12])
    env = make_env(g)
    rho = np.array([0.1, 0.2, 0.3])
    assert np.allclose(radio.sinr(env, rho), np.diag(g) * rho / NOISE, rtol=1e-14)


def test_h_g_at_zero_power():
    env = random_env(0)
    h, g = radio.h_g_split(env, np.zeros(env.num_users))
    assert np.allclose(h, BW * np.log2(NOISE))
    assert np.allclose(h - g, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_h_minus_g_is_rate(seed):
    env = random_env(seed)
    rho = np.random.default_rng(seed).uniform(0, 0.5, env.num_users)
    h, g = radio.h_g_split(env, rho)
    r = radio.rate(env, rho)
    assert np.allclose(h - g, r, rtol=1e-9, atol=1e-9 * np.abs(h).max())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_h_g_concave_midpoint(seed):
    env = random_env(seed)
    rng = np.random.default_rng(seed + 1)
    r1, r2 = rng.uniform(0, 0.5, (2, env.num_users))
    hm, gm = radio.h_g_split(env, 0.5 * (r1 + r2))
    h1, g1 = radio.h_g_split(env, r1)
    h2, g2 = radio.h_g_split(env, r2)
    tol = 1e-9 * np.abs(hm).max()
    assert np.all(hm >= 0.5 * (h1 + h2) - tol)
    assert np.all(gm >= 0.5 * (g1 + g2) - tol)


def test_grad_g_own_entry_zero():
    env = random_env(3)
    rho = np.full(env.num_users, 0.2)
    for k in range(env.num_users):
        assert radio.grad_g(env, rho, k)[k] == 0.0


def test_gradients_central_differences():
    env = random_env(4)
    rho = np.random.default_rng(4).uniform(0.05, 0.45, env.num_users)
    step = 1e-9 * 0.5
    for k in range(env.num_users):
        gh, gg = radio.grad_h(env, rho, k), radio.grad_g(env, rho, k)
        for i in range(env.num_users):
            e = np.zeros(env.num_users)
            e[i] = step
            hp, gp = radio.h_g_split(env, rho + e)
            hm, gm = radio.h_g_split(env, rho - e)
            assert (hp[k] - hm[k]) / (2 * step) == pytest.approx(gh[i], rel=1e-4, abs=1e-4 * np.abs(gh).max())
            assert (gp[k] - gm[k]) / (2 * step) == pytest.approx(gg[i], rel=1e-4, abs=1e-4 * np.abs(gh).max())


def test_linearizations_anchor_and_majorize():
    env = random_env(6)
    rng = np.random.default_rng(6)
    rho0 = rng.uniform(0, 0.5, env.num_users)
    h0, g0 = radio.h_g_split(env, rho0)
    for k in range(env.num_users):
        assert radio.g_hat(env, rho0, rho0, k) == pytest.approx(g0[k], rel=1e-14)
        assert radio.h_hat(env, rho0, rho0, k) == pytest.approx(h0[k], rel=1e-14)
    for _ in range(20):
        rho = rng.uniform(0, 0.5, env.num_users)
        h, g = radio.h_g_split(env, rho)
        for k in range(env.num_users):
            assert radio.g_hat(env, rho, rho0, k) >= g[k] - 1e-6
            assert radio.h_hat(env, rho, rho0, k) >= h[k] - 1e-6


def test_fronthaul_load_and_subset():
    env = random_env(7, k=6)
    rho = np.full(6, 0.1)
    load = radio.fronthaul_load(env, rho)
    assert load.sum() == pytest.approx(radio.rate(env, rho).sum())
    sub = radio.subset(env, [1, 3])
    assert sub.gain.shape == (2, 2)
    assert sub.gain[0, 1] == env.gain[1, 3]
