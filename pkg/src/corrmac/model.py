"""System model of the correlated-source MIMO multiple access channel.

K users, each with ``Nt`` antennas, send one source symbol per channel use
through a linear precoder ``p_k`` to a receiver with ``Nr`` antennas::

    y = H P s + n,    H = [H_1 ... H_K],    P = blockdiag(p_1, ..., p_K)

The receiver forms ``s_hat = W^H y`` with the linear MMSE filter. Everything
in this module is a pure function of its arguments.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ContractViolation

__all__ = [
    "Scenario", "SourceModel", "ChannelRealization", "PrecoderSet", "RngStream",
    "SINGULAR_COV_TOL", "uniform_covariance", "sample_sources", "sample_channel",
    "mmse_receiver", "sum_mse", "sum_mse_lemma_form", "empirical_sum_mse",
    "sdr_db", "transmit", "snr_to_power",
]

# Covariances whose smallest eigenvalue falls below this are handled as singular.
SINGULAR_COV_TOL = 1e-10


def snr_to_power(snr_db, noise_var: float = 1.0):
    """Per-user power budget for a given SNR in dB (``T = sigma^2 10^(snr/10)``)."""
    return noise_var * 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Dimensions, source correlation and power budgets of one MAC setup."""

    K: int
    Nt: int
    Nr: int
    rho: float
    powers: tuple
    noise_var: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(float(t) for t in np.atleast_1d(self.powers)))
        if self.K < 1 or self.Nt < 1 or self.Nr < 1:
            raise ContractViolation("K, Nt and Nr must all be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ContractViolation(f"rho must lie in [0, 1], got {self.rho}")
        if len(self.powers) == 1 and self.K > 1:
            object.__setattr__(self, "powers", self.powers * self.K)
        if len(self.powers) != self.K:
            raise ContractViolation(f"expected {self.K} power budgets, got {len(self.powers)}")
        if min(self.powers) <= 0:
            raise ContractViolation("power budgets must be positive")
        if self.noise_var <= 0:
            raise ContractViolation("noise variance must be positive")

    @classmethod
    def from_snr_db(cls, K, Nt, Nr, rho, snr_db, noise_var=1.0):
        """Build a scenario whose budgets follow ``T_k = sigma^2 10^(SNR_k/10)``.

        `snr_db` may be a scalar (common SNR) or one value per user.
        """
        snr = np.atleast_1d(np.asarray(snr_db, dtype=float))
        if snr.size == 1:
            snr = np.repeat(snr, K)
        return cls(K, Nt, Nr, rho, tuple(snr_to_power(snr, noise_var)), noise_var)

    @property
    def T(self) -> np.ndarray:
        return np.asarray(self.powers)

    @property
    def source(self) -> "SourceModel":
        return uniform_covariance(self.K, self.rho)


@dataclass(frozen=True)
class SourceModel:
    """Source covariance ``Cs = E[s s^H]`` with unit diagonal."""

    Cs: np.ndarray

    def __post_init__(self):
        C = linalg.as_matrix(self.Cs)
        if C.shape[0] != C.shape[1]:
            raise ContractViolation("covariance must be square")
        if np.linalg.norm(C - C.conj().T) > 1e-10 * max(1.0, np.linalg.norm(C)):
            raise ContractViolation("covariance must be Hermitian")
        if not np.allclose(np.diag(C), 1.0, atol=1e-12):
            raise ContractViolation("covariance must have unit diagonal")
        if np.min(np.linalg.eigvalsh(C)) < -1e-10:
            raise ContractViolation("covariance must be positive semidefinite")
        C.setflags(write=False)
        object.__setattr__(self, "Cs", C)

    @property
    def K(self) -> int:
        return self.Cs.shape[0]

    @property
    def is_singular(self) -> bool:
        return bool(np.min(np.linalg.eigvalsh(self.Cs)) < SINGULAR_COV_TOL)


@dataclass(frozen=True)
class ChannelRealization:
    """Per-user channel blocks ``H_k`` (each ``Nr x Nt``)."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(linalg.as_matrix(b) for b in self.blocks)
        if not blocks:
            raise ContractViolation("need at least one user channel")
        if len({b.shape for b in blocks}) != 1:
            raise ContractViolation("all user channels must share one shape")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_stacked(cls, H, K: int):
        H = linalg.as_matrix(H)
        if H.shape[1] % K:
            raise ContractViolation("stacked channel width is not a multiple of K")
        Nt = H.shape[1] // K
        return cls(tuple(H[:, k * Nt:(k + 1) * Nt] for k in range(K)))

    @classmethod
    def from_columns(cls, *columns):
        """Single-antenna users: one receive vector per user."""
        return cls(tuple(np.asarray(c, dtype=complex).reshape(-1, 1) for c in columns))

    @property
    def K(self) -> int:
        return len(self.blocks)

    @property
    def Nr(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def Nt(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def H(self) -> np.ndarray:
        return np.hstack(self.blocks)


@dataclass(frozen=True)
class PrecoderSet:
    """One precoding vector per user, stored as a ``K x Nt`` array."""

    vectors: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        if V.ndim != 2:
            raise ContractViolation("precoder vectors must form a K x Nt array")
        V = V.copy()
        V.setflags(write=False)
        object.__setattr__(self, "vectors", V)

    @classmethod
    def from_blockdiag(cls, P, K: int, **meta):
        P = np.asarray(P, dtype=complex)
        Nt = P.shape[0] // K
        return cls(np.array([P[k * Nt:(k + 1) * Nt, k] for k in range(K)]), dict(meta))

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def Nt(self) -> int:
        return self.vectors.shape[1]

    @property
    def powers(self) -> np.ndarray:
        return np.sum(np.abs(self.vectors) ** 2, axis=1)

    @property
    def P(self) -> np.ndarray:
        return blockdiag_precoder(self.vectors)

    def check_feasible(self, scn: Scenario, tol: float = 1e-9) -> None:
        if self.K != scn.K or self.Nt != scn.Nt:
            raise ContractViolation("precoder dimensions do not match the scenario")
        if np.any(self.powers > scn.T + tol * np.maximum(1.0, scn.T)):
            raise ContractViolation("precoder violates a power constraint")


def blockdiag_precoder(vectors) -> np.ndarray:
    """``blockdiag(p_1, ..., p_K)`` as an ``(Nt K) x K`` matrix."""
    V = np.atleast_2d(np.asarray(vectors, dtype=complex))
    K, Nt = V.shape
    P = np.zeros((Nt * K, K), dtype=complex)
    for k in range(K):
        P[k * Nt:(k + 1) * Nt, k] = V[k]
    return P


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream)``.

    Draws come from a counter-based Philox generator, so any two streams
    with different ids are independent and a stream can be rebuilt anywhere.
    """

    seed: int
    stream: int = 0

    def generator(self, purpose: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF,
                                     self.stream & 0xFFFFFFFFFFFFFFFF, purpose])
        return np.random.Generator(np.random.Philox(ss))

    def complex_normal(self, shape, purpose: int = 0) -> np.ndarray:
        """Circularly symmetric CN(0, 1) draws; real and imaginary parts have variance 1/2."""
        g = self.generator(purpose)
        z = g.standard_normal(tuple(shape) + (2,))
        return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def uniform_covariance(K: int, rho: float) -> SourceModel:
    """Unit-diagonal covariance with every off-diagonal entry equal to `rho`."""
    if not 0.0 <= rho <= 1.0:
        raise ContractViolation(f"rho must lie in [0, 1], got {rho}")
    if isinstance(rho, complex):
        raise ContractViolation("only real correlation factors are supported")
    C = np.full((K, K), float(rho), dtype=complex)
    np.fill_diagonal(C, 1.0)
    return SourceModel(C)


def _source_factor(Cs: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(Cs)
    if w.min() < SINGULAR_COV_TOL:
        return V * np.sqrt(np.clip(w, 0.0, None))
    return linalg.cholesky(Cs)


def sample_sources(model: SourceModel, M: int, rng: RngStream, purpose: int = 1) -> np.ndarray:
    """Draw `M` source vectors (columns of a ``K x M`` array) from CN(0, Cs)."""
    if M < 1:
        raise ContractViolation("need at least one symbol")
    F = _source_factor(np.asarray(model.Cs))
    return F @ rng.complex_normal((model.K, M), purpose)


def sample_channel(scn: Scenario, rng: RngStream, purpose: int = 0) -> ChannelRealization:
    """I.i.d. Rayleigh channel: every entry CN(0, 1)."""
    H = rng.complex_normal((scn.Nr, scn.Nt * scn.K), purpose)
    return ChannelRealization.from_stacked(H, scn.K)


def _as_H(H) -> np.ndarray:
    if isinstance(H, ChannelRealization):
        return H.H
    return linalg.as_matrix(H)


def _as_P(P) -> np.ndarray:
    if isinstance(P, PrecoderSet):
        return P.P
    return linalg.as_matrix(P)


def _as_C(Cs) -> np.ndarray:
    if isinstance(Cs, SourceModel):
        return np.asarray(Cs.Cs)
    return linalg.as_matrix(Cs)


def mmse_receiver(H, P, Cs, noise_var: float) -> np.ndarray:
    """Linear MMSE filter ``W`` (``Nr x K``) such that ``s_hat = W^H y``.

    ``W^H = Cs P^H H^H (H P Cs P^H H^H + sigma^2 I)^{-1}``.
    """
    H, P, C = _as_H(H), _as_P(P), _as_C(Cs)
    G = H @ P
    R = G @ C @ G.conj().T + noise_var * np.eye(H.shape[0])
    Wh = linalg.solve(R.T, (C @ G.conj().T).T).T  # C G^H R^{-1}
    return Wh.conj().T


def sum_mse(H, P, Cs, noise_var: float) -> float:
    """Sum-MSE achieved by the MMSE receiver.

    ``xi = tr((1/sigma^2) P^H H^H H P + Cs^{-1})^{-1}``. When `Cs` is
    singular the equivalent form from :func:`sum_mse_lemma_form` is used.
    """
    H, P, C = _as_H(H), _as_P(P), _as_C(Cs)
    if np.min(np.linalg.eigvalsh(C)) < SINGULAR_COV_TOL:
        return sum_mse_lemma_form(H, P, C, noise_var)
    G = H @ P
    M = G.conj().T @ G / noise_var + np.linalg.inv(C)
    return float(np.real(np.trace(np.linalg.inv(M))))


def sum_mse_lemma_form(H, P, Cs, noise_var: float) -> float:
    """Sum-MSE written without ``Cs^{-1}``; valid for singular `Cs`.

    ``xi = tr(Cs) - tr(Cs G^H (G Cs G^H + sigma^2 I)^{-1} G Cs)``, ``G = H P``.
    """
    H, P, C = _as_H(H), _as_P(P), _as_C(Cs)
    G = H @ P
    R = G @ C @ G.conj().T + noise_var * np.eye(H.shape[0])
    X = np.linalg.solve(R, G @ C)
    return float(np.real(np.trace(C) - np.trace(C @ G.conj().T @ X)))


def transmit(H, P, s: np.ndarray, noise_var: float, rng: RngStream, purpose: int = 2) -> np.ndarray:
    """Received block ``y = H P s + n`` for a ``K x M`` source block."""
    H, P = _as_H(H), _as_P(P)
    n = np.sqrt(noise_var) * rng.complex_normal((H.shape[0], s.shape[1]), purpose)
    return H @ P @ s + n


def empirical_sum_mse(s: np.ndarray, s_hat: np.ndarray) -> float:
    """``(1/M) sum_m sum_k |s_km - s_hat_km|^2``."""
    s = np.asarray(s)
    s_hat = np.asarray(s_hat)
    if s.shape != s_hat.shape:
        raise ContractViolation(f"shape mismatch {s.shape} vs {s_hat.shape}")
    if s.ndim != 2 or s.shape[1] == 0:
        raise ContractViolation("need a K x M block with M >= 1")
    return float(np.sum(np.abs(s - s_hat) ** 2) / s.shape[1])


def sdr_db(K: int, xi: float) -> float:
    """Signal-to-distortion ratio normalised by the user count, ``10 log10(K / xi)``."""
    if not xi > 0:
        raise ContractViolation("SDR is undefined for zero distortion")
    return float(10.0 * np.log10(K / xi))
