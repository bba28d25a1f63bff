"""Closed-form optimum for two single-antenna users (SIMO MAC).

Phase convention used throughout this module: ``phi_d = arg(p_1) - arg(p_2)``.
With user 1 anchored at zero phase the precoders are
``p_1 = sqrt(P1)`` and ``p_2 = sqrt(P2) exp(-1j * phi_d)``, and the optimal
phase difference is ``phi_d = arg(h1^H h2)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegenerateChannel

__all__ = [
    "TwoUserSolution", "two_user_sum_mse", "two_user_alpha", "two_user_boundary",
    "two_user_optimal", "two_user_region", "large_nr_sum_mse", "single_rx_sum_mse",
    "two_user_asymptotic_mse",
]

# |h1^H h2| below this fraction of ||h1|| ||h2|| counts as orthogonal.
_ORTHO_TOL = 1e-14


@dataclass(frozen=True)
class TwoUserSolution:
    P1: float
    P2: float
    phi_d: float
    xi: float
    region: str

    @property
    def precoders(self) -> np.ndarray:
        """``2 x 1`` array of the user precoders (``p_1`` real, ``p_2`` rotated)."""
        return np.array([[np.sqrt(self.P1)],
                         [np.sqrt(self.P2) * np.exp(-1j * self.phi_d)]])


def _stats(h1, h2):
    h1 = np.asarray(h1, dtype=complex).ravel()
    h2 = np.asarray(h2, dtype=complex).ravel()
    if h1.shape != h2.shape:
        raise ContractViolation("channel vectors must have equal length")
    n1 = float(np.real(np.vdot(h1, h1)))
    n2 = float(np.real(np.vdot(h2, h2)))
    c = complex(np.vdot(h1, h2))  # h1^H h2
    gram_det = max(n1 * n2 - abs(c) ** 2, 0.0)
    return n1, n2, c, gram_det


def two_user_sum_mse(P1, P2, phi_d, h1, h2, rho, noise_var=1.0):
    """Sum-MSE of two single-antenna users with powers `P1`, `P2` and phase gap `phi_d`.

    `P1`, `P2` and `phi_d` broadcast against each other; scalars give a float.
    """
    n1, n2, c, d = _stats(h1, h2)
    s2 = noise_var
    num = s2 * (2 * s2 + (1 - rho ** 2) * (P1 * n1 + P2 * n2))
    ups = P1 * n1 + P2 * n2 + 2 * rho * np.sqrt(P1 * P2) * np.real(np.exp(-1j * phi_d) * c)
    omega = P1 * P2 * (1 - rho ** 2) * d
    xi = num / (s2 ** 2 + s2 * ups + omega)
    return float(xi) if np.ndim(xi) == 0 else xi


def _alpha(P1, P2, n1, n2, c_abs, d, rho, s2):
    r2 = 1 - rho ** 2
    A = -s2 ** 2 * (1 + rho ** 2) * n1 - 2 * s2 * r2 * d * P2 - r2 ** 2 * n2 * d * P2 ** 2
    B = s2 * rho * r2 * c_abs
    ratio = np.sqrt(P2 / P1)
    return A + B * (n1 * P1 - n2 * P2) * ratio - 2 * s2 ** 2 * rho * c_abs * ratio


def two_user_alpha(P1, P2, h1, h2, rho, noise_var=1.0):
    """Numerators ``(alpha_1, alpha_2)`` of the power derivatives of the sum-MSE.

    The sign of ``alpha_k`` is the sign of the derivative of the sum-MSE (at
    the optimal phase) with respect to ``P_k``. ``alpha_2`` is ``alpha_1``
    with the users swapped.
    """
    if P1 <= 0 or P2 <= 0:
        raise ContractViolation("powers must be positive")
    n1, n2, c, d = _stats(h1, h2)
    a1 = _alpha(P1, P2, n1, n2, abs(c), d, rho, noise_var)
    a2 = _alpha(P2, P1, n2, n1, abs(c), d, rho, noise_var)
    return float(a1), float(a2)


def _boundary(P_other, n_self, n_other, c_abs, d, rho, s2):
    """sqrt(P_self) solving alpha_self = 0 for a given power of the other user."""
    r2 = 1 - rho ** 2
    A = -s2 ** 2 * (1 + rho ** 2) * n_self - 2 * s2 * r2 * d * P_other - r2 ** 2 * n_other * d * P_other ** 2
    B = s2 * rho * r2 * c_abs
    Z = -A / (2 * B * n_self * np.sqrt(P_other))
    return Z + np.sqrt(Z ** 2 + n_other / n_self * P_other + 2 * s2 / (r2 * n_self))


def two_user_boundary(user, P_other, h1, h2, rho, noise_var=1.0) -> float:
    """Region boundary: ``sqrt(P_user)`` at which ``alpha_user`` vanishes.

    ``user=1`` gives ``f_1(P_2)``, ``user=2`` gives ``f_2(P_1)``. Only
    defined for ``0 < rho < 1`` and non-orthogonal channels.
    """
    n1, n2, c, d = _stats(h1, h2)
    if not 0 < rho < 1 or abs(c) == 0 or P_other <= 0:
        raise ContractViolation("boundary is only defined for 0 < rho < 1, h1^H h2 != 0, P > 0")
    if user == 1:
        return float(_boundary(P_other, n1, n2, abs(c), d, rho, noise_var))
    if user == 2:
        return float(_boundary(P_other, n2, n1, abs(c), d, rho, noise_var))
    raise ContractViolation("user must be 1 or 2")


def two_user_region(T1, T2, h1, h2, rho, noise_var=1.0) -> str:
    """Label of the region containing the full-power point ``(T1, T2)``."""
    n1, n2, c, _ = _stats(h1, h2)
    if rho in (0.0, 1.0) or abs(c) <= _ORTHO_TOL * np.sqrt(n1 * n2):
        return "special"
    a1, a2 = two_user_alpha(T1, T2, h1, h2, rho, noise_var)
    if a1 <= 0 and a2 <= 0:
        return "R1"
    if a2 > 0:
        return "R2"
    return "R3"


def two_user_optimal(h1, h2, T1, T2, rho, noise_var=1.0) -> TwoUserSolution:
    """Sum-MSE optimal powers and phase for two single-antenna users.

    Every KKT candidate on the power-constraint boundary, i.e. ``(T1, T2)``,
    ``(T1, f_2(T1)^2)`` and ``(f_1(T2)^2, T2)``, is evaluated and the one with
    the lowest sum-MSE is returned.

    Raises
    ------
    DegenerateChannel
        If either user's channel is identically zero.
    """
    if not 0.0 <= rho <= 1.0:
        raise ContractViolation("rho must lie in [0, 1]")
    if T1 <= 0 or T2 <= 0:
        raise ContractViolation("power budgets must be positive")
    n1, n2, c, d = _stats(h1, h2)
    if n1 == 0 or n2 == 0:
        raise DegenerateChannel("a user channel is zero")
    phi_d = float(np.angle(c))
    region = two_user_region(T1, T2, h1, h2, rho, noise_var)

    def xi(P1, P2):
        return two_user_sum_mse(P1, P2, phi_d, h1, h2, rho, noise_var)

    if region == "special":
        return TwoUserSolution(float(T1), float(T2), phi_d, xi(T1, T2), region)

    candidates = [(float(T1), float(T2))]
    P2c = _boundary(T1, n2, n1, abs(c), d, rho, noise_var) ** 2
    if P2c < T2:
        candidates.append((float(T1), float(P2c)))
    P1c = _boundary(T2, n1, n2, abs(c), d, rho, noise_var) ** 2
    if P1c < T1:
        candidates.append((float(P1c), float(T2)))
    P1, P2 = min(candidates, key=lambda pq: xi(*pq))
    return TwoUserSolution(P1, P2, phi_d, xi(P1, P2), region)


def large_nr_sum_mse(T1, T2, rho, Nr, noise_var=1.0) -> float:
    """Sum-MSE approximation for many receive antennas (``H^H H ~ Nr I``)."""
    s2 = noise_var
    num = 2 * s2 ** 2 + (1 - rho ** 2) * s2 * Nr * (T1 + T2)
    den = s2 ** 2 + s2 * Nr * (T1 + T2) + T1 * T2 * Nr ** 2 * (1 - rho ** 2)
    return float(num / den)


def single_rx_sum_mse(P1, P2, h1, h2, rho, noise_var=1.0) -> float:
    """Sum-MSE for one receive antenna at the optimal phase; the Gram determinant vanishes."""
    a1 = abs(complex(np.ravel(h1)[0])) ** 2
    a2 = abs(complex(np.ravel(h2)[0])) ** 2
    cross = abs(complex(np.ravel(h1)[0]).conjugate() * complex(np.ravel(h2)[0]))
    s2 = noise_var
    num = 2 * s2 + (1 - rho ** 2) * (P1 * a1 + P2 * a2)
    den = s2 + P1 * a1 + P2 * a2 + 2 * np.sqrt(P1 * P2) * rho * cross
    return float(num / den)


def two_user_asymptotic_mse(regime, **params) -> float:
    """Dispatch to :func:`large_nr_sum_mse` (``regime="large_nr"``) or
    :func:`single_rx_sum_mse` (``regime="single_rx"``)."""
    if regime == "large_nr":
        return large_nr_sum_mse(**params)
    if regime == "single_rx":
        return single_rx_sum_mse(**params)
    raise ContractViolation(f"unknown regime {regime!r}")
