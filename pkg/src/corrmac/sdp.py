"""Semidefinite relaxation for single-antenna users and one receive antenna.

With ``Nt = Nr = 1`` the sum-MSE is ``K`` minus a ratio of quadratic forms in
the stacked precoder. Homogenising ``p = q / t`` and lifting
``Z = z z^H`` with ``z = [q; t]`` gives the convex problem::

    maximise    tr(A Z)
    subject to  tr(B Z) = 1,  tr(D_k Z) <= 0,  Z >= 0

    A   = blockdiag(H Cs^2 H^H, 0)
    B   = blockdiag(H Cs H^H, sigma^2)
    D_k = blockdiag(e_k e_k^T, -T_k),      H = diag(h)

which is solved here with a dense primal-dual path-following method.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ContractViolation, NumericalFailure, UnsupportedConfiguration
from .model import ChannelRealization, PrecoderSet

__all__ = [
    "SdpProblem", "SdpSolution", "RANK1_TOL", "build_problem", "solve_sdp",
    "extract_rank1", "siso_precoder", "homogenized_objective", "realify",
]

# Relative size of the second eigenvalue of the precoder block below which
# the solution is treated as rank one.
RANK1_TOL = 1e-7


@dataclass(frozen=True)
class SdpProblem:
    A: np.ndarray
    B: np.ndarray
    D: tuple
    T: np.ndarray
    noise_var: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> int:
        return self.n - 1


@dataclass(frozen=True)
class SdpSolution:
    Z: np.ndarray
    objective: float
    duality_gap: float
    iterations: int
    meta: dict = field(default_factory=dict, compare=False)


def build_problem(h, Cs, T, noise_var: float = 1.0) -> SdpProblem:
    """Homogenised matrices for the SISO multiuser precoder problem.

    Parameters
    ----------
    h : array_like
        ``1 x K`` row of per-user scalar channels. A channel with more than
        one receive or transmit antenna raises
        :class:`~corrmac.errors.UnsupportedConfiguration`.
    Cs : array_like
        ``K x K`` source covariance.
    T : array_like
        Per-user power budgets.
    """
    if isinstance(h, ChannelRealization):
        if h.Nr != 1 or h.Nt != 1:
            raise UnsupportedConfiguration("the SDP relaxation needs Nt = Nr = 1")
        h = h.H
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    if h.shape[0] != 1:
        raise UnsupportedConfiguration("the SDP relaxation needs a single receive antenna")
    K = h.shape[1]
    C = linalg.as_matrix(getattr(Cs, "Cs", Cs))
    T = np.asarray(T, dtype=float).ravel()
    if C.shape != (K, K) or T.size != K:
        raise ContractViolation("dimension mismatch between h, Cs and T")
    Hd = np.diag(h.ravel())
    HCH = Hd @ C @ Hd.conj().T
    A = linalg.blockdiag(Hd @ C @ C @ Hd.conj().T, np.zeros((1, 1)))
    B = linalg.blockdiag(HCH, np.array([[noise_var]]))
    D = []
    for k in range(K):
        Dk = np.zeros((K + 1, K + 1), dtype=complex)
        Dk[k, k] = 1.0
        Dk[K, K] = -T[k]
        D.append(Dk)
    return SdpProblem(0.5 * (A + A.conj().T), 0.5 * (B + B.conj().T), tuple(D), T, float(noise_var))


def homogenized_objective(prob: SdpProblem, z) -> float:
    """``z^H A z / z^H B z`` for a homogenised vector ``z = [q; t]``."""
    z = np.asarray(z, dtype=complex).ravel()
    return float(np.real(np.vdot(z, prob.A @ z)) / np.real(np.vdot(z, prob.B @ z)))


def realify(M) -> np.ndarray:
    """Real symmetric embedding ``[[Re M, -Im M], [Im M, Re M]]`` of a Hermitian matrix."""
    M = np.asarray(M, dtype=complex)
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def _complexify(Y: np.ndarray) -> np.ndarray:
    n = Y.shape[0] // 2
    re = 0.5 * (Y[:n, :n] + Y[n:, n:])
    im = 0.5 * (Y[n:, :n] - Y[:n, n:])
    return re + 1j * im


def _max_step(X, dX) -> float:
    L = np.linalg.cholesky(X)
    Li = np.linalg.inv(L)
    lam = np.linalg.eigvalsh(Li @ dX @ Li.T).min()
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_vec(x, dx) -> float:
    neg = dx < 0
    return np.inf if not np.any(neg) else float(np.min(-x[neg] / dx[neg]))


def _ipm(Cm, cv, Am, av, b, tol, max_iters, polish_iters=8):
    """Primal-dual predictor-corrector (HKM direction) for

    min <Cm, X> + cv.x  s.t.  <Am_i, X> + av_i.x = b_i,  X >= 0, x >= 0.
    """
    N, nl, m = Cm.shape[0], cv.size, len(b)
    Am = np.asarray(Am)
    scale = max(1.0, np.linalg.norm(Cm), np.linalg.norm(cv))
    X = np.eye(N)
    x = np.ones(nl)
    S = np.eye(N) * scale
    z = np.ones(nl) * scale
    y = np.zeros(m)
    nrm_b = 1.0 + np.linalg.norm(b)
    nrm_c = 1.0 + np.linalg.norm(Cm) + np.linalg.norm(cv)
    info = {}
    best = None
    polish = 0
    for it in range(1, max_iters + 1):
        AX = np.einsum("ijk,jk->i", Am, X) + av @ x
        rp = b - AX
        Rd = Cm - np.einsum("i,ijk->jk", y, Am) - S
        rd = cv - av.T @ y - z
        mu = (np.sum(X * S) + x @ z) / (N + nl)
        pobj = np.sum(Cm * X) + cv @ x
        dobj = b @ y
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(rp) / nrm_b
        dinf = (np.linalg.norm(Rd) + np.linalg.norm(rd)) / nrm_c
        info = dict(iterations=it, pobj=pobj, dobj=dobj, gap=gap, pinf=pinf, dinf=dinf, mu=mu)
        if gap < tol and pinf < tol and dinf < tol:
            if best is not None and mu >= best[-1]["mu"]:
                return best
            best = (X, x, y, S, z, info)
            # keep stepping while complementarity still shrinks; pushes the
            # iterate closer to the face of optimal solutions
            polish += 1
            if polish > polish_iters:
                return best
        elif best is not None:
            return best
        try:
            X, x, y, S, z = _step(Cm, cv, Am, av, X, x, y, S, z, rp, Rd, rd, mu, N + nl)
        except np.linalg.LinAlgError:
            if best is not None:
                return best
            # round-off broke positive definiteness; accept a nearly converged iterate
            if gap < 100 * tol and pinf < 100 * tol and dinf < 100 * tol:
                return X, x, y, S, z, info
            raise NumericalFailure("interior point iterate lost definiteness",
                                   best=(X, x, y, S, z, info))
    if best is not None:
        return best
    raise NumericalFailure(f"interior point method hit the iteration cap ({max_iters}); "
                           f"gap={info.get('gap'):.3e}", best=(X, x, y, S, z, info))


def _step(Cm, cv, Am, av, X, x, y, S, z, rp, Rd, rd, mu, nu):
    Sinv = np.linalg.inv(S)
    Sinv = 0.5 * (Sinv + Sinv.T)
    XA = np.einsum("jk,ikl,lm->ijm", X, Am, Sinv)
    M = np.einsum("ijk,lkj->il", Am, XA) + (av * (x / z)) @ av.T
    M = 0.5 * (M + M.T)
    try:
        Mc = np.linalg.cholesky(M)
        msolve = lambda r: np.linalg.solve(Mc.T, np.linalg.solve(Mc, r))
    except np.linalg.LinAlgError:
        msolve = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]
    XRdSinv = X @ Rd @ Sinv

    def direction(Rc, rc):
        rhs = rp - np.einsum("ijk,jk->i", Am, Rc - XRdSinv) - av @ (rc - x * rd / z)
        dy = msolve(rhs)
        dS = Rd - np.einsum("i,ijk->jk", dy, Am)
        dz = rd - av.T @ dy
        dX = Rc - X @ dS @ Sinv
        dX = 0.5 * (dX + dX.T)
        dx = rc - x * dz / z
        return dX, dx, dy, dS, dz

    # predictor
    dX, dx, dy, dS, dz = direction(-X, -x)
    ap = min(1.0, _max_step(X, dX), _max_step_vec(x, dx))
    ad = min(1.0, _max_step(S, dS), _max_step_vec(z, dz))
    mu_aff = (np.sum((X + ap * dX) * (S + ad * dS)) + (x + ap * dx) @ (z + ad * dz)) / nu
    sigma = min(1.0, (mu_aff / mu) ** 3)
    # corrector
    Rc = sigma * mu * Sinv - X - dX @ dS @ Sinv
    rc = sigma * mu / z - x - dx * dz / z
    dX, dx, dy, dS, dz = direction(Rc, rc)
    ap = _max_step(X, dX)
    ap = min(ap, _max_step_vec(x, dx))
    ad = min(_max_step(S, dS), _max_step_vec(z, dz))
    gamma = 0.9 + 0.09 * min(1.0, ap, ad)
    ap = min(1.0, gamma * ap)
    ad = min(1.0, gamma * ad)
    X = X + ap * dX
    x = x + ap * dx
    y = y + ad * dy
    S = S + ad * dS
    z = z + ad * dz
    np.linalg.cholesky(X)
    np.linalg.cholesky(S)
    return 0.5 * (X + X.T), x, y, 0.5 * (S + S.T), z


def solve_sdp(prob: SdpProblem, tol: float = 1e-8, max_iters: int = 200) -> SdpSolution:
    """Solve the relaxed problem ``max tr(A Z)`` by interior point iterations.

    The complex Hermitian problem is mapped to its real symmetric embedding,
    the power inequalities get nonnegative slacks, and variables are
    rescaled by ``sqrt(T_k)`` for conditioning before solving.

    Raises
    ------
    NumericalFailure
        When the iteration cap is hit; ``exc.best`` holds the last iterate.
    """
    K, T = prob.K, prob.T
    sc = np.concatenate([np.sqrt(T), [1.0]])
    Sc = np.diag(sc)
    A = Sc @ prob.A @ Sc
    B = Sc @ prob.B @ Sc
    a_scale = max(np.max(np.abs(A)), 1e-300)
    Am = [0.5 * realify(B)]
    av = np.zeros((K + 1, K))
    for k in range(K):
        Dk = Sc @ prob.D[k] @ Sc / T[k]
        Am.append(0.5 * realify(Dk))
        av[k + 1, k] = 1.0
    b = np.zeros(K + 1)
    b[0] = 1.0
    Cm = -0.5 * realify(A) / a_scale
    cv = np.zeros(K)
    X, x, y, S, z, info = _ipm(Cm, cv, Am, av, b, tol, max_iters)
    Zs = _complexify(X)
    Z = Sc @ Zs @ Sc
    Z = 0.5 * (Z + Z.conj().T)
    # exact normalisation; the power inequalities are homogeneous so keep their sign
    Z = Z / np.real(np.trace(prob.B @ Z))
    objective = float(np.real(np.trace(prob.A @ Z)))
    dual = float(-info["dobj"] * a_scale)
    meta = dict(info, primal_objective=objective, dual_objective=dual,
                trace_B=float(np.real(np.trace(prob.B @ Z))),
                trace_D=[float(np.real(np.trace(Dk @ Z))) for Dk in prob.D],
                min_eig=float(np.linalg.eigvalsh(Z).min()))
    return SdpSolution(Z, objective, float(abs(dual - objective)), info["iterations"], meta)


def extract_rank1(sol: SdpSolution, T, rank_tol: float = RANK1_TOL,
                  prob: SdpProblem = None) -> np.ndarray:
    """Homogenised rank-one read-out ``p = u / sqrt(w)``.

    ``u`` is the dominant eigenvector of the top-left ``K x K`` block scaled
    by the square root of its eigenvalue, and ``w`` the bottom-right entry
    of ``Z``. The result is exact when that block has rank one and the
    dominant-eigenvector approximation otherwise (``meta`` records which).
    The global phase is fixed so the first entry is real and nonnegative;
    any user left above its budget by round-off is scaled back.

    When the block is not rank one and `prob` is given, a second candidate
    with magnitudes ``sqrt(Z_kk / w)`` and the eigenvector's phases is also
    scored, and the better of the two is returned. For rank-one ``Z`` both
    candidates coincide.

    The vector returned is the conjugate of the users' precoders; see
    :func:`siso_precoder`.
    """
    Z = np.asarray(sol.Z)
    K = Z.shape[0] - 1
    w = float(np.real(Z[K, K]))
    if w <= 1e-12:
        raise NumericalFailure("degenerate homogenisation: t^2 is (numerically) zero")
    lam, V = linalg.herm_eig(Z[:K, :K])
    u = np.sqrt(max(lam[0], 0.0)) * V[:, 0]
    ratio = lam[1] / lam[0] if K > 1 and lam[0] > 0 else 0.0
    sol.meta["rank1"] = bool(ratio <= rank_tol)
    sol.meta["rank_ratio"] = float(ratio)
    sol.meta["rank_tol"] = rank_tol
    T = np.asarray(T, dtype=float)
    p = _fit(u / np.sqrt(w), T)
    sol.meta["extraction"] = "exact" if sol.meta["rank1"] else "eigenvector"
    if not sol.meta["rank1"] and prob is not None:
        mag = np.sqrt(np.clip(np.real(np.diag(Z)[:K]), 0.0, None) / w)
        alt = _fit(mag * np.exp(1j * np.angle(u)), T)
        score = lambda v: homogenized_objective(prob, np.concatenate([v, [1.0]]))
        if score(alt) > score(p):
            p = alt
            sol.meta["extraction"] = "diagonal"
    return p


def _fit(p: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Fix the global phase (first entry real, nonnegative) and clip to the budgets."""
    p = p.copy()
    if abs(p[0]) > 0:
        p = p * (abs(p[0]) / p[0])
    pw = np.abs(p) ** 2
    over = pw > T
    p[over] *= np.sqrt(T[over] / pw[over])
    return p


def siso_precoder(h, Cs, T, noise_var: float = 1.0, tol: float = 1e-8) -> PrecoderSet:
    """Sum-MSE precoders for single-antenna users and receiver via the SDP relaxation."""
    prob = build_problem(h, Cs, T, noise_var)
    sol = solve_sdp(prob, tol)
    q = extract_rank1(sol, prob.T, prob=prob)
    # the lifted variable stacks conj(p_k); undo that to get the precoders
    return PrecoderSet(np.conj(q)[:, None], {"design": "sdp", "solution": sol,
                                            "xi": prob.K - homogenized_objective(prob, np.append(q, 1.0)),
                                            "relaxation_xi": prob.K - sol.objective})
