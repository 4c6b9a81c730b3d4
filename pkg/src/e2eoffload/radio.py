"""Uplink radio model: MRC receive combining at the serving RRH.

All per-user quantities are driven by an effective K x K gain matrix::

    gain[k, k] = ||h_{u(k),k}||^2
    gain[k, j] = |h_{u(k),k}^H h_{u(k),j}|^2 / ||h_{u(k),k}||^2   (j != k)

so that ``SINR_k = gain[k,k] rho_k / (sum_{j!=k} gain[k,j] rho_j + noise)``.
The rate splits into a difference of two concave functions of the power
vector, ``R_k = h_k - g_k``, which is what the power solver linearizes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)
MIN_DISTANCE_KM = 1e-3


@dataclass(frozen=True)
class RadioEnvironment:
    serving: np.ndarray  # serving RRH index per UE
    gain: np.ndarray  # K x K effective gains, linear
    noise_power: float  # W
    bandwidth: float  # Hz
    fronthaul: np.ndarray  # bps per RRH
    power_budget: np.ndarray  # W per UE

    @property
    def num_users(self) -> int:
        return self.gain.shape[0]

    def users_of(self, rrh: int) -> np.ndarray:
        return np.flatnonzero(self.serving == rrh)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["user"] + [f"g{j}" for j in range(self.num_users)])
            for k, row in enumerate(self.gain):
                w.writerow([k] + [repr(float(x)) for x in row])


def path_loss_db(distance_km):
    d = np.maximum(np.asarray(distance_km, dtype=float), MIN_DISTANCE_KM)
    return 128.1 + 37.6 * np.log10(d)


def noise_power_w(noise_psd_dbm_hz: float, bandwidth_hz: float) -> float:
    return 10.0 ** (noise_psd_dbm_hz / 10.0) * 1e-3 * bandwidth_hz


def generate_channels(
    positions,
    rrh_positions,
    antennas: int,
    seed,
    *,
    serving=None,
    noise_power: float,
    bandwidth: float,
    fronthaul,
    power_budget,
) -> RadioEnvironment:
    """Draw block-fading channels and build the MRC gain matrix.

    ``positions`` and ``rrh_positions`` are in meters. Each UE is served by
    its nearest RRH unless ``serving`` is given. ``seed`` may be an int or
    a ``numpy.random.Generator``.
    """
    if antennas < 1:
        raise ValueError("antennas must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pos = np.asarray(positions, dtype=float)
    rrh = np.asarray(rrh_positions, dtype=float)
    k_users, n_rrh = len(pos), len(rrh)

    dist_km = np.linalg.norm(pos[None, :, :] - rrh[:, None, :], axis=-1) / 1e3  # (U, K)
    if serving is None:
        serving = np.argmin(dist_km, axis=0)
    serving = np.asarray(serving, dtype=int)
    q = 10.0 ** (-path_loss_db(dist_km) / 10.0)

    small = (rng.standard_normal((n_rrh, k_users, antennas))
             + 1j * rng.standard_normal((n_rrh, k_users, antennas))) / np.sqrt(2.0)
    h = np.sqrt(q)[:, :, None] * small  # h[u, k] is the M-vector

    gain = np.empty((k_users, k_users))
    for k in range(k_users):
        hu = h[serving[k]]  # every user's channel to k's RRH
        own = np.vdot(hu[k], hu[k]).real
        cross = np.abs(hu.conj() @ hu[k]) ** 2 / own
        norms = np.einsum("km,km->k", hu.conj(), hu).real
        if np.any(cross > norms * (1 + 1e-9)):
            raise AssertionError("cross gain exceeds Cauchy-Schwarz bound")
        gain[k] = cross
        gain[k, k] = own

    fronthaul = np.broadcast_to(np.asarray(fronthaul, dtype=float), (n_rrh,)).copy()
    pmax = np.broadcast_to(np.asarray(power_budget, dtype=float), (k_users,)).copy()
    return RadioEnvironment(serving, gain, float(noise_power), float(bandwidth), fronthaul, pmax)


def _interference(env: RadioEnvironment, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    return env.gain @ rho - np.diag(env.gain) * rho


def sinr(env: RadioEnvironment, rho, k=None):
    """SINR of user ``k``, or of every user when ``k`` is None."""
    rho = np.asarray(rho, dtype=float)
    s = np.diag(env.gain) * rho / (_interference(env, rho) + env.noise_power)
    return s if k is None else float(s[k])


def rate(env: RadioEnvironment, rho, k=None):
    """Achievable uplink rate in bps."""
    s = sinr(env, rho)
    r = env.bandwidth * np.log2(1.0 + s)
    return r if k is None else float(r[k])


def tx_latency(data_bits, rate_bps):
    """Radio transmission latency ``D / R``; infinite at zero rate."""
    d = np.asarray(data_bits, dtype=float)
    r = np.asarray(rate_bps, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(r > 0, d / np.where(r > 0, r, 1.0), np.inf)
    return out if out.ndim else float(out)


def h_g_split(env: RadioEnvironment, rho):
    """Concave pieces ``(h, g)`` with ``h - g`` equal to the rate vector."""
    rho = np.asarray(rho, dtype=float)
    interf = _interference(env, rho)
    total = interf + np.diag(env.gain) * rho
    w = env.bandwidth
    return w * np.log2(total + env.noise_power), w * np.log2(interf + env.noise_power)


def grad_h(env: RadioEnvironment, rho, k: int) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    denom = env.gain[k] @ rho + env.noise_power
    return env.bandwidth * env.gain[k] / (LN2 * denom)


def grad_g(env: RadioEnvironment, rho, k: int) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    row = env.gain[k].copy()
    row[k] = 0.0
    denom = row @ rho + env.noise_power
    return env.bandwidth * row / (LN2 * denom)


def g_hat(env: RadioEnvironment, rho, rho0, k: int) -> float:
    """First-order expansion of ``g_k`` at ``rho0``; over-estimates ``g_k``."""
    rho0 = np.asarray(rho0, dtype=float)
    _, g0 = h_g_split(env, rho0)
    return float(g0[k] + grad_g(env, rho0, k) @ (np.asarray(rho, dtype=float) - rho0))


def h_hat(env: RadioEnvironment, rho, rho0, k: int) -> float:
    rho0 = np.asarray(rho0, dtype=float)
    h0, _ = h_g_split(env, rho0)
    return float(h0[k] + grad_h(env, rho0, k) @ (np.asarray(rho, dtype=float) - rho0))


def fronthaul_load(env: RadioEnvironment, rho) -> np.ndarray:
    """Sum rate per RRH, to compare against ``env.fronthaul``."""
    r = rate(env, rho)
    return np.array([r[env.serving == u].sum() for u in range(len(env.fronthaul))])


def subset(env: RadioEnvironment, users) -> RadioEnvironment:
    """Environment restricted to ``users``; everybody else is silent."""
    idx = np.asarray(users, dtype=int)
    return RadioEnvironment(
        env.serving[idx],
        env.gain[np.ix_(idx, idx)],
        env.noise_power,
        env.bandwidth,
        env.fronthaul,
        env.power_budget[idx],
    )
