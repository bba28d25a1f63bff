"""Distortion bound for separate source and channel coding.

The channel side is the MIMO MAC sum-capacity (iterative waterfilling), the
source side a lower bound on the sum-rate of distributed Gaussian source
coding. Equating the two under a common per-user distortion target gives
the smallest achievable sum-distortion ``D_sum`` for one channel draw. The
bound only uses the sum-rate constraint, so it is optimistic (labelled
``approximate``) for every K, including K = 2.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import linalg
from .errors import ContractViolation, UnsupportedConfiguration
from .model import SINGULAR_COV_TOL, ChannelRealization, RngStream, Scenario, sample_channel

__all__ = [
    "CapacityResult", "BoundResult", "waterfill", "iterative_waterfilling",
    "mac_sum_rate", "sum_rate_distortion", "separation_bound", "sdr_bound_curve",
]


@dataclass(frozen=True)
class CapacityResult:
    Q: tuple
    sum_rate: float
    iterations: int
    history: tuple = ()


@dataclass(frozen=True)
class BoundResult:
    D_sum: float
    per_channel: tuple
    sdr_opt_db: float
    meta: dict = field(default_factory=dict, compare=False)


def waterfill(gains, total_power: float) -> np.ndarray:
    """Powers ``max(0, mu - 1/g_i)`` summing to `total_power` over unit-noise modes."""
    g = np.asarray(gains, dtype=float)
    p = np.zeros_like(g)
    active = np.flatnonzero(g > 1e-300)
    if active.size == 0 or total_power <= 0:
        return p
    order = active[np.argsort(g[active])[::-1]]
    inv = 1.0 / g[order]
    # largest n such that the water level stays above the n-th floor
    for n in range(order.size, 0, -1):
        mu = (total_power + inv[:n].sum()) / n
        if mu > inv[n - 1]:
            p[order[:n]] = mu - inv[:n]
            break
    return p


def mac_sum_rate(channel: ChannelRealization, Q, noise_var: float) -> float:
    """``log2 det(I + (1/sigma^2) sum_k H_k Q_k H_k^H)``."""
    R = np.eye(channel.Nr, dtype=complex)
    for Hk, Qk in zip(channel.blocks, Q):
        R = R + Hk @ Qk @ Hk.conj().T / noise_var
    return float(np.linalg.slogdet(R)[1] / np.log(2.0))


def iterative_waterfilling(channel: ChannelRealization, T, noise_var: float = 1.0,
                           tol: float = 1e-9, max_iters: int = 1000) -> CapacityResult:
    """Sum-capacity transmit covariances of the MIMO MAC.

    Users are updated cyclically; each waterfills its budget over its own
    channel whitened by noise plus the other users' current signals. Stops
    when a full cycle improves the sum-rate by less than `tol` bits.
    """
    K, Nr, Nt = channel.K, channel.Nr, channel.Nt
    T = np.broadcast_to(np.asarray(T, dtype=float), (K,))
    Q = [np.zeros((Nt, Nt), dtype=complex) for _ in range(K)]
    rate = 0.0
    history = [rate]
    it = 0
    for it in range(1, max_iters + 1):
        for k, Hk in enumerate(channel.blocks):
            R = noise_var * np.eye(Nr, dtype=complex)
            for j, Hj in enumerate(channel.blocks):
                if j != k:
                    R += Hj @ Q[j] @ Hj.conj().T
            G = np.linalg.solve(linalg.cholesky(R), Hk)  # whitened channel
            lam, V = np.linalg.eigh(G.conj().T @ G)
            p = waterfill(lam, T[k])
            Q[k] = (V * p) @ V.conj().T
        new_rate = mac_sum_rate(channel, Q, noise_var)
        history.append(new_rate)
        improved = new_rate - rate
        rate = new_rate
        if improved < tol:
            break
    return CapacityResult(tuple(Q), rate, it, tuple(history))


def _check_cov(Cs) -> np.ndarray:
    C = linalg.as_matrix(getattr(Cs, "Cs", Cs))
    if np.min(np.linalg.eigvalsh(C)) < SINGULAR_COV_TOL:
        raise UnsupportedConfiguration("rate-distortion bound needs a nonsingular source covariance")
    return C


def _is_uniform(C: np.ndarray) -> bool:
    K = C.shape[0]
    if K == 1:
        return True
    off = C[~np.eye(K, dtype=bool)]
    return bool(np.allclose(off, off[0], atol=1e-14, rtol=0))


def _rate_for_b(C: np.ndarray, b: np.ndarray) -> float:
    K = C.shape[0]
    return float(np.linalg.slogdet(np.eye(K) + C @ np.diag(b))[1] / np.log(2.0))


def _symmetric_b(C: np.ndarray, D: float) -> float:
    lam = np.linalg.eigvalsh(C)
    K = lam.size
    diag_entry = lambda b: float(np.sum(1.0 / (1.0 / lam + b)) / K)
    if diag_entry(0.0) <= D:
        return 0.0
    hi = 1.0 / D
    while diag_entry(hi) > D:
        hi *= 2.0
    return brentq(lambda b: diag_entry(b) - D, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                  maxiter=500)


def _coordinate_b(C: np.ndarray, d: np.ndarray, max_sweeps: int = 10000) -> np.ndarray:
    K = C.shape[0]
    Cinv = np.linalg.inv(C)
    b = np.zeros(K)
    for _ in range(max_sweeps):
        b_old = b.copy()
        for i in range(K):
            b[i] = 0.0
            m_ii = float(np.real(np.linalg.inv(Cinv + np.diag(b))[i, i]))
            # Sherman-Morrison: [(M + b e_i e_i^T)^{-1}]_ii = m_ii / (1 + b m_ii)
            b[i] = max(0.0, 1.0 / d[i] - 1.0 / m_ii)
        if np.max(np.abs(b - b_old)) <= 1e-13 * max(1.0, np.max(b)):
            break
    return b


def sum_rate_distortion(Cs, d) -> float:
    """Sum-rate (bits) needed to meet per-user MSE targets `d`.

    ``min log2(|Cs| / |D_s|)`` over ``D_s = (Cs^{-1} + B)^{-1}`` with ``B``
    diagonal and nonnegative, subject to ``[D_s]_ii <= d_i``. For a uniform
    covariance with equal targets ``B = b I`` by symmetry; otherwise the
    ``b_i`` are found by cyclic coordinate updates, each one closed form.
    """
    C = _check_cov(Cs)
    K = C.shape[0]
    d = np.broadcast_to(np.asarray(d, dtype=float), (K,)).copy()
    if np.any(d <= 0):
        raise ContractViolation("distortion targets must be positive")
    if _is_uniform(C) and np.allclose(d, d[0], rtol=0, atol=0):
        b = np.full(K, _symmetric_b(C, float(d[0])))
    else:
        b = _coordinate_b(C, d)
    return _rate_for_b(C, b)


def separation_bound(channel: ChannelRealization, Cs, T, noise_var: float = 1.0,
                     capacity: CapacityResult = None) -> BoundResult:
    """Smallest sum-distortion reachable with separate coding on one channel draw.

    Finds the common per-user target ``D`` at which the source sum-rate
    equals the channel sum-capacity; ``D_sum = K D``. With zero capacity the
    prior distortion ``tr(Cs)`` is returned.
    """
    C = _check_cov(Cs)
    K = C.shape[0]
    if capacity is None:
        capacity = iterative_waterfilling(channel, T, noise_var)
    R = capacity.sum_rate
    d_prior = float(np.max(np.real(np.diag(C))))
    if R <= 0:
        D_sum = float(np.real(np.trace(C)))
        return BoundResult(D_sum, (D_sum,), float(10 * np.log10(K / D_sum)),
                           {"sum_rate": R, "residual": 0.0, "approximate": True})
    f = lambda logD: sum_rate_distortion(C, np.exp(logD)) - R
    lo = np.log(d_prior)
    step = 1.0
    while f(lo - step) < 0:
        step *= 2.0
    logD = brentq(f, lo - step, lo, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    D = float(np.exp(logD))
    D_sum = K * D
    return BoundResult(D_sum, (D_sum,), float(10 * np.log10(K / D_sum)),
                       {"sum_rate": R, "residual": abs(f(logD)), "approximate": True,
                        "per_user_distortion": D})


def sdr_bound_curve(scenario: Scenario, snr_grid_db: Sequence, L: int, seed: int = 0):
    """Monte Carlo separation bound over `L` channel draws for each SNR.

    Channel draw ``l`` uses ``RngStream(seed, l)``, the same streams the
    simulation harness uses, so bound and precoder curves share channels.

    Returns
    -------
    list of dict
        Keys ``snr_db``, ``sdr_opt_db`` (``10 log10(K E[1/D_sum])``),
        ``sdr_opt_unnormalized_db`` (``10 log10(E[1/D_sum])``) and ``trials``.
    """
    if L < 1:
        raise ContractViolation("need at least one channel realization")
    K = scenario.K
    C = scenario.source.Cs
    channels = [sample_channel(scenario, RngStream(seed, l)) for l in range(L)]
    rows = []
    for snr in snr_grid_db:
        scn = Scenario.from_snr_db(K, scenario.Nt, scenario.Nr, scenario.rho, snr, scenario.noise_var)
        inv = np.array([1.0 / separation_bound(ch, C, scn.T, scn.noise_var).D_sum for ch in channels])
        m = float(np.mean(inv))
        rows.append({"snr_db": snr, "sdr_opt_db": float(10 * np.log10(K * m)),
                     "sdr_opt_unnormalized_db": float(10 * np.log10(m)), "trials": L,
                     "approximate": True})
    return rows
