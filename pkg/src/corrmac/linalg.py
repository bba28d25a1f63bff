"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``. The
functions here wrap LAPACK (through numpy) and add the things the rest of
the package relies on: a deterministic phase convention for singular and
eigen vectors, explicit exceptions instead of silent garbage, and fixed
tolerances.
"""

from typing import NamedTuple

import numpy as np
from scipy.linalg import block_diag

from .errors import ContractViolation, NotPositiveDefinite, NumericalFailure, SingularMatrix

__all__ = [
    "RECON_TOL", "ORTHO_TOL", "HERM_TOL", "PD_PIVOT_TOL",
    "SvdResult", "HermEigResult",
    "as_matrix", "hermitian", "svd", "herm_eig", "cholesky", "solve",
    "inverse", "det", "nullspace", "blockdiag", "normalize_phase",
]

RECON_TOL = 1e-9
ORTHO_TOL = 1e-10
HERM_TOL = 1e-10
PD_PIVOT_TOL = 1e-12
# Reciprocal condition number below which a square matrix counts as singular.
SINGULAR_RCOND = 1e-14


class SvdResult(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


class HermEigResult(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(M) -> np.ndarray:
    """Return `M` as a 2-D complex128 array, rejecting non-finite entries."""
    A = np.asarray(M, dtype=complex)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(-1, 1)
    elif A.ndim != 2:
        raise ContractViolation(f"expected a matrix, got array with ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise ContractViolation("matrix has NaN or Inf entries")
    return A


def hermitian(M) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(np.asarray(M)).T


def _pivot_phases(V: np.ndarray) -> np.ndarray:
    mags = np.abs(V)
    # round before argmax so that ties survive floating point noise
    idx = np.argmax(np.round(mags / max(mags.max(), 1e-300), 12), axis=0)
    pivots = V[idx, np.arange(V.shape[1])]
    phases = np.ones(V.shape[1], dtype=complex)
    nz = np.abs(pivots) > 0
    phases[nz] = np.abs(pivots[nz]) / pivots[nz]
    return phases


def normalize_phase(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and >= 0.

    Ties between entries of equal magnitude go to the lowest row index.
    """
    V = np.array(vectors, dtype=complex)
    if V.size == 0:
        return V
    return V * _pivot_phases(V)


def svd(M) -> SvdResult:
    """Thin singular value decomposition ``M = U diag(S) V^H``.

    Singular values come back in descending order. Each pair of singular
    vectors is rotated by a common phase so that the largest entry of the
    right singular vector is real and nonnegative; the left vector gets the
    same rotation, so the product is unchanged.
    """
    A = as_matrix(M)
    if min(A.shape) < 1:
        raise ContractViolation("svd needs at least one row and one column")
    try:
        U, S, Vh = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    V = hermitian(Vh)
    phases = _pivot_phases(V)
    # same rotation on U keeps U diag(S) V^H invariant
    return SvdResult(U * phases, S, V * phases)


def herm_eig(M) -> HermEigResult:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Raises
    ------
    ContractViolation
        If `M` is not square or deviates from Hermitian by more than
        ``HERM_TOL`` (relative to its Frobenius norm).
    """
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise ContractViolation(f"herm_eig needs a square matrix, got {A.shape}")
    scale = max(np.linalg.norm(A), 1.0)
    if np.linalg.norm(A - hermitian(A)) > HERM_TOL * scale:
        raise ContractViolation("matrix is not Hermitian within tolerance")
    A = 0.5 * (A + hermitian(A))
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigh did not converge: {exc}") from exc
    order = np.argsort(w)[::-1]
    return HermEigResult(w[order], normalize_phase(V[:, order]))


def cholesky(M) -> np.ndarray:
    """Lower-triangular ``L`` with ``L L^H = M``.

    A squared pivot below ``PD_PIVOT_TOL`` times the largest diagonal entry
    raises :class:`NotPositiveDefinite`.
    """
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise ContractViolation("cholesky needs a square matrix")
    A = 0.5 * (A + hermitian(A))
    dmax = max(np.max(np.real(np.diag(A))), 0.0)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    if np.min(np.abs(np.diag(L))) ** 2 < PD_PIVOT_TOL * max(dmax, 1e-300):
        raise NotPositiveDefinite("matrix is numerically singular (tiny Cholesky pivot)")
    return L


def _check_square_nonsingular(A: np.ndarray) -> None:
    if A.shape[0] != A.shape[1]:
        raise ContractViolation(f"expected a square matrix, got {A.shape}")
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0 or s[-1] / s[0] < SINGULAR_RCOND:
        raise SingularMatrix("matrix is singular to working precision")


def solve(M, B) -> np.ndarray:
    """Solve ``M X = B``."""
    A = as_matrix(M)
    rhs = as_matrix(B)
    _check_square_nonsingular(A)
    if rhs.shape[0] != A.shape[0]:
        raise ContractViolation("right-hand side has incompatible rows")
    return np.linalg.solve(A, rhs)


def inverse(M) -> np.ndarray:
    A = as_matrix(M)
    _check_square_nonsingular(A)
    return np.linalg.inv(A)


def det(M) -> complex:
    """Determinant via LU (product of the triangular factors' diagonals)."""
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise ContractViolation("det needs a square matrix")
    return complex(np.linalg.det(A))


def nullspace(M, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the right nullspace of `M`.

    Singular values at or below ``tol * max(S)`` are treated as zero. A
    full-column-rank input yields an ``(n, 0)`` array.
    """
    A = as_matrix(M)
    n = A.shape[1]
    if A.shape[0] == 0 or not np.any(A):
        return np.eye(n, dtype=complex)
    _, S, Vh = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(S > tol * S[0]))
    return normalize_phase(hermitian(Vh[rank:, :]))


def blockdiag(*blocks) -> np.ndarray:
    return block_diag(*[as_matrix(b) for b in blocks]).astype(complex)
