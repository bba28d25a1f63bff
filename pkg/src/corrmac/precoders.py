"""Linear precoder designs for correlated sources over the MIMO MAC.

All designers take a :class:`~corrmac.model.Scenario` and a
:class:`~corrmac.model.ChannelRealization` and return a
:class:`~corrmac.model.PrecoderSet` that respects the per-user power
budgets. The receiver is always the linear MMSE filter.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .errors import ContractViolation, InfeasibleDimensions
from .model import (ChannelRealization, PrecoderSet, RngStream, Scenario,
                    blockdiag_precoder)
from .two_user import two_user_optimal

__all__ = [
    "GradientConfig", "DirectionSet", "GainVector",
    "full_power", "mse_gradient", "project_feasible", "projected_gradient",
    "amrt", "mrt_directions", "nusvd_directions", "optimize_gains",
    "mrt", "mrt_optimized", "nusvd", "nusvd_optimized", "equivalent_channel",
]


@dataclass(frozen=True)
class GradientConfig:
    """Settings of the projected gradient search with Armijo backtracking.

    ``init_step`` is the first trial step. When ``bb_init`` is set, later
    iterations start backtracking from a Barzilai-Borwein step estimate
    instead; every accepted step still passes the Armijo test.
    """

    max_iters: int = 5000
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    init_step: float = 1.0
    convergence_tol: float = 1e-8
    bb_init: bool = True
    multistart: bool = False
    n_random_starts: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.armijo_shrink < 1 or not 0 < self.armijo_slope < 1:
            raise ContractViolation("Armijo shrink and slope must lie in (0, 1)")
        if self.init_step <= 0 or self.convergence_tol <= 0 or self.max_iters < 1:
            raise ContractViolation("step, tolerance and iteration cap must be positive")


@dataclass(frozen=True)
class DirectionSet:
    """Unit-norm transmit direction per user, stored as ``K x Nt``."""

    u: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=complex))
        norms = np.linalg.norm(u, axis=1)
        if np.any(np.abs(norms - 1) > 1e-10):
            raise ContractViolation("direction vectors must have unit norm")
        object.__setattr__(self, "u", u)

    @property
    def K(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class GainVector:
    gamma: np.ndarray

    def check_feasible(self, scn: Scenario, tol: float = 1e-9) -> None:
        if np.any(np.abs(self.gamma) ** 2 > scn.T + tol * np.maximum(1.0, scn.T)):
            raise ContractViolation("gain exceeds its power budget")


def full_power(scn: Scenario, channel: Optional[ChannelRealization] = None) -> PrecoderSet:
    """No precoding: every user transmits ``sqrt(T_k)`` with zero phase.

    With several transmit antennas the MRT direction of each user is used
    at full gain, which needs `channel`.
    """
    g = np.sqrt(scn.T)
    if scn.Nt == 1:
        return PrecoderSet(g[:, None], {"design": "none"})
    if channel is None:
        raise ContractViolation("multi-antenna baseline needs the channel")
    return PrecoderSet(g[:, None] * mrt_directions(channel).u, {"design": "none"})


def mse_gradient(P, H, Cs, noise_var: float) -> np.ndarray:
    """Gradient of the sum-MSE with respect to the complex matrix ``P``.

    ``grad = -(2/sigma^2) H^H H P ((1/sigma^2) P^H H^H H P + Cs^{-1})^{-2}``,
    i.e. ``d f / d Re(P) + 1j d f / d Im(P)``. It points uphill.
    """
    P = linalg.as_matrix(P)
    H = linalg.as_matrix(H.H if isinstance(H, ChannelRealization) else H)
    C = linalg.as_matrix(Cs)
    X = H.conj().T @ H / noise_var
    Minv = np.linalg.inv(P.conj().T @ X @ P + linalg.inverse(C))
    return -2.0 * X @ P @ Minv @ Minv


def project_feasible(P_raw, scn: Scenario) -> PrecoderSet:
    """Projection onto the feasible set.

    Off-block-diagonal entries are dropped and any user above its budget is
    scaled back onto the sphere ``||p_k||^2 = T_k``.
    """
    P_raw = np.asarray(P_raw, dtype=complex)
    if P_raw.shape == (scn.K, scn.Nt):
        V = P_raw.copy()
    elif P_raw.shape == (scn.Nt * scn.K, scn.K):
        V = np.array([P_raw[k * scn.Nt:(k + 1) * scn.Nt, k] for k in range(scn.K)])
    else:
        raise ContractViolation(f"unexpected precoder shape {P_raw.shape}")
    return PrecoderSet(_project(V, scn.T))


def _project(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    pw = np.sum(np.abs(V) ** 2, axis=1)
    scale = np.ones_like(pw)
    over = pw > T
    scale[over] = np.sqrt(T[over] / pw[over])
    return V * scale[:, None]


class _Objective:
    """Sum-MSE and its block gradient as functions of the ``K x Nt`` vectors."""

    def __init__(self, H: np.ndarray, Cs: np.ndarray, noise_var: float, K: int, Nt: int):
        self.K, self.Nt = K, Nt
        self.X = H.conj().T @ H / noise_var
        self.Cinv = linalg.inverse(Cs)

    def _P(self, V):
        return blockdiag_precoder(V)

    def value(self, V) -> float:
        P = self._P(V)
        M = P.conj().T @ self.X @ P + self.Cinv
        return float(np.real(np.trace(np.linalg.inv(M))))

    def value_grad(self, V):
        P = self._P(V)
        M = P.conj().T @ self.X @ P + self.Cinv
        Minv = np.linalg.inv(M)
        G = -2.0 * self.X @ P @ (Minv @ Minv)
        g = np.array([G[k * self.Nt:(k + 1) * self.Nt, k] for k in range(self.K)])
        return float(np.real(np.trace(Minv))), g


def _rdot(a, b) -> float:
    return float(np.real(np.vdot(a, b)))


def _descend(obj: _Objective, V0: np.ndarray, T: np.ndarray, cfg: GradientConfig):
    V = _project(np.asarray(V0, dtype=complex), T)
    f, g = obj.value_grad(V)
    history = [f]
    step = cfg.init_step
    radius = float(np.sqrt(np.sum(T)))
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        mu = step
        while True:
            V_new = _project(V - mu * g, T)
            d = V_new - V
            f_new = obj.value(V_new)
            if f_new <= f + cfg.armijo_slope * _rdot(g, d):
                break
            mu *= cfg.armijo_shrink
            if mu < 1e-30:
                V_new, f_new, d = V, f, np.zeros_like(V)
                break
        if f_new > f:  # never accept an uphill move
            V_new, f_new, d = V, f, np.zeros_like(V)
        f_new, g_new = obj.value_grad(V_new)
        moved = np.linalg.norm(d)
        if cfg.bb_init:
            y = g_new - g
            sy = _rdot(d, y)
            step = _rdot(d, d) / sy if sy > 0 else mu / cfg.armijo_shrink
            # far past the feasible radius the projection no longer changes, only overflows
            gn = np.linalg.norm(g_new)
            if gn > 0:
                step = min(step, 1e6 * radius / gn)
        else:
            step = cfg.init_step
        V, f, g = V_new, f_new, g_new
        history.append(f)
        if moved < cfg.convergence_tol:
            converged = True
            break
    return V, f, {"iterations": it, "converged": converged, "history": history}


def _prepare(scn: Scenario, channel: ChannelRealization, Cs):
    if Cs is None:
        Cs = scn.source.Cs
    Cs = linalg.as_matrix(getattr(Cs, "Cs", Cs))
    if channel.K != scn.K or channel.Nt != scn.Nt:
        raise ContractViolation("channel does not match the scenario")
    return Cs


def projected_gradient(scn: Scenario, channel: ChannelRealization, Cs=None,
                       config: Optional[GradientConfig] = None,
                       P_init=None) -> PrecoderSet:
    """Projected steepest descent on the sum-MSE with Armijo backtracking.

    Starts from `P_init` (AMRT by default). With ``config.multistart`` the
    search is also run from full power and from random feasible points and
    the best local solution is kept. The returned set carries ``iterations``,
    ``converged`` and the objective ``history`` in its ``meta``.

    `Cs` must be invertible; ``rho = 1`` is not supported by this designer.
    """
    cfg = config or GradientConfig()
    Cs = _prepare(scn, channel, Cs)
    obj = _Objective(channel.H, Cs, scn.noise_var, scn.K, scn.Nt)
    T = scn.T
    if P_init is None:
        starts = [amrt(scn, channel).vectors]
    else:
        V0 = P_init.vectors if isinstance(P_init, PrecoderSet) else project_feasible(P_init, scn).vectors
        starts = [V0]
    if cfg.multistart:
        starts.append(full_power(scn, channel).vectors)
        rng = RngStream(cfg.seed, 0)
        for i in range(cfg.n_random_starts):
            Z = rng.complex_normal((scn.K, scn.Nt), purpose=100 + i)
            Z *= np.sqrt(T)[:, None] / np.linalg.norm(Z, axis=1, keepdims=True)
            starts.append(Z)
    best = None
    for V0 in starts:
        V, f, info = _descend(obj, V0, T, cfg)
        if best is None or f < best[1]:
            best = (V, f, info)
    V, f, info = best
    return PrecoderSet(V, {"design": "gradient", "xi": f, **info})


def amrt(scn: Scenario, channel: ChannelRealization) -> PrecoderSet:
    """Aligned MRT: every user beams onto one common receive direction.

    The direction ``g`` is the dominant left singular vector of the user
    channel with the largest singular value (lowest index on ties). Each
    user then transmits ``sqrt(T_k) H_k^H g / ||H_k^H g||``; a user with
    ``H_k^H g = 0`` falls back to its own MRT direction.
    """
    svds = [linalg.svd(Hk) for Hk in channel.blocks]
    top = np.array([s.S[0] for s in svds])
    best = int(np.argmax(top))
    g = svds[best].U[:, 0]
    V = np.zeros((channel.K, channel.Nt), dtype=complex)
    for k, Hk in enumerate(channel.blocks):
        v = Hk.conj().T @ g
        nv = np.linalg.norm(v)
        if nv <= 1e-12 * max(top[k], 1e-300):
            v, nv = svds[k].V[:, 0], 1.0
        V[k] = np.sqrt(scn.T[k]) * v / nv
    return PrecoderSet(V, {"design": "amrt", "anchor_user": best})


def mrt_directions(channel: ChannelRealization) -> DirectionSet:
    """Dominant right singular vector of each user's channel."""
    return DirectionSet(np.array([linalg.svd(Hk).V[:, 0] for Hk in channel.blocks]))


def nusvd_directions(channel: ChannelRealization, tol: float = 1e-8, max_iters: int = 200):
    """Nullspace-directed SVD directions with a zero-forcing receiver.

    Users are visited round-robin. For user ``k`` the receive filter is
    confined to the nullspace of the other users' current effective channels
    ``H_j u_j``, and ``u_k`` becomes the dominant right singular vector of
    ``H_k`` seen through that nullspace. Iteration stops when no direction
    moves by more than `tol`.

    Returns
    -------
    directions : DirectionSet
        ``meta`` holds ``converged`` and ``iterations``.
    W : np.ndarray
        ``Nr x K`` receive filter with ``W^H H P = I`` for
        ``P = blockdiag(u_1, ..., u_K)``.

    Raises
    ------
    InfeasibleDimensions
        If ``Nr < K``.
    """
    K, Nr = channel.K, channel.Nr
    if Nr < K:
        raise InfeasibleDimensions(f"Nu-SVD needs Nr >= K (got Nr={Nr}, K={K})")
    U = mrt_directions(channel).u.copy()
    Hs = channel.blocks
    converged = K == 1
    it = 0
    for it in range(1, max_iters + 1):
        if K == 1:
            break
        change = 0.0
        for k in range(K):
            N = _interference_nullspace(Hs, U, k)
            s = linalg.svd(N.conj().T @ Hs[k])
            if s.S[0] <= 0:
                continue
            u_new = s.V[:, 0]
            change = max(change, np.linalg.norm(u_new - U[k]))
            U[k] = u_new
        if change < tol:
            converged = True
            break
    W = np.zeros((Nr, K), dtype=complex)
    for k in range(K):
        N = _interference_nullspace(Hs, U, k) if K > 1 else np.eye(Nr)
        a = N.conj().T @ (Hs[k] @ U[k])
        W[:, k] = N @ a / np.real(np.vdot(a, a))
    return DirectionSet(U, {"converged": converged, "iterations": it}), W


def _interference_nullspace(Hs, U, k) -> np.ndarray:
    others = np.array([Hs[j] @ U[j] for j in range(len(Hs)) if j != k])
    return linalg.nullspace(others.conj(), tol=1e-10)


def equivalent_channel(directions: DirectionSet, channel: ChannelRealization) -> ChannelRealization:
    """Per-user effective channel ``H_k u_k`` (one column per user)."""
    return ChannelRealization.from_columns(*[Hk @ uk for Hk, uk in zip(channel.blocks, directions.u)])


def optimize_gains(directions: DirectionSet, scn: Scenario, channel: ChannelRealization,
                   Cs=None, config: Optional[GradientConfig] = None) -> PrecoderSet:
    """Correlation-aware complex gains on fixed unit-norm directions.

    The gains ``gamma_k`` minimise the sum-MSE over the equivalent
    single-antenna channels ``H_k u_k``: in closed form for two users,
    by projected gradient otherwise.
    """
    Cs = _prepare(scn, channel, Cs)
    eq = equivalent_channel(directions, channel)
    eq_scn = Scenario(scn.K, 1, scn.Nr, scn.rho, scn.powers, scn.noise_var)
    if scn.K == 2:
        rho = float(np.real(Cs[0, 1]))
        sol = two_user_optimal(eq.blocks[0], eq.blocks[1], scn.T[0], scn.T[1], rho, scn.noise_var)
        gamma = sol.precoders[:, 0]
    else:
        gamma = projected_gradient(eq_scn, eq, Cs, config).vectors[:, 0]
    return PrecoderSet(gamma[:, None] * directions.u, {"gains": GainVector(gamma)})


def mrt(scn: Scenario, channel: ChannelRealization) -> PrecoderSet:
    """MRT directions at full gain."""
    return PrecoderSet(np.sqrt(scn.T)[:, None] * mrt_directions(channel).u, {"design": "mrt"})


def mrt_optimized(scn, channel, Cs=None, config=None) -> PrecoderSet:
    return optimize_gains(mrt_directions(channel), scn, channel, Cs, config)


def nusvd(scn: Scenario, channel: ChannelRealization) -> PrecoderSet:
    """Nu-SVD directions at full gain."""
    d, _ = nusvd_directions(channel)
    return PrecoderSet(np.sqrt(scn.T)[:, None] * d.u, {"design": "nusvd", **d.meta})


def nusvd_optimized(scn, channel, Cs=None, config=None) -> PrecoderSet:
    d, _ = nusvd_directions(channel)
    return optimize_gains(d, scn, channel, Cs, config)
