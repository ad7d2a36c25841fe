"""Small dense linear-algebra kernel used by the transmission policy design.

Everything here operates on plain 2-D float numpy arrays.  Problem sizes are
tiny (n <= ~8), so the solvers favour transparency over performance: the
Lyapunov equation is solved by Kronecker vectorization plus partial-pivot
elimination, and symmetric eigenvalue bounds come from cyclic Jacobi sweeps.
"""

from __future__ import annotations

import numpy as np

# Default tolerances; callers may override per call.
LYAP_RTOL = 1e-8          # residual bound for solve_lyapunov, relative to |Q|
PIVOT_RTOL = 1e-12        # relative pivot threshold for singularity detection
SYM_RTOL = 1e-9           # symmetry tolerance, relative to |S|
JACOBI_OFFDIAG_RTOL = 1e-10

_JACOBI_MAX_SWEEPS = 100


class MatlibError(Exception):
    pass


class SingularLyapunov(MatlibError):
    """The Lyapunov operator P -> A'P + PA is numerically singular."""


class NotSymmetric(MatlibError):
    pass


def as_matrix(a, name="matrix"):
    """Coerce input to a finite 2-D float array."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise MatlibError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise MatlibError(f"{name} has non-finite entries")
    return m


def require_symmetric(S, rtol=SYM_RTOL, name="matrix"):
    """Return the symmetrized matrix, raising NotSymmetric beyond tolerance."""
    S = as_matrix(S, name)
    if S.shape[0] != S.shape[1]:
        raise NotSymmetric(f"{name} is not square: {S.shape}")
    scale = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > rtol * max(scale, 1e-300):
        raise NotSymmetric(f"{name} is not symmetric within tolerance {rtol}")
    return 0.5 * (S + S.T)


def _solve_partial_pivot(M, b, pivot_rtol=PIVOT_RTOL):
    """Solve M z = b by Gaussian elimination with partial pivoting.

    Raises SingularLyapunov when a pivot falls below pivot_rtol relative to
    the largest initial entry of M.
    """
    M = M.copy()
    b = b.copy()
    m = M.shape[0]
    threshold = pivot_rtol * max(np.max(np.abs(M)), 1e-300)
    for k in range(m):
        piv = k + int(np.argmax(np.abs(M[k:, k])))
        if np.abs(M[piv, k]) < threshold:
            raise SingularLyapunov(
                f"pivot {np.abs(M[piv, k]):.3e} below relative threshold")
        if piv != k:
            M[[k, piv]] = M[[piv, k]]
            b[[k, piv]] = b[[piv, k]]
        factors = M[k + 1:, k] / M[k, k]
        M[k + 1:, k:] -= np.outer(factors, M[k, k:])
        b[k + 1:] -= factors * b[k]
    z = np.zeros(m)
    for k in range(m - 1, -1, -1):
        z[k] = (b[k] - M[k, k + 1:] @ z[k + 1:]) / M[k, k]
    return z


def solve_lyapunov(A, Q, rtol=LYAP_RTOL, pivot_rtol=PIVOT_RTOL):
    """Solve A'P + PA = -Q for symmetric P.

    The equation is vectorized into an n^2 x n^2 linear system, solved by
    partial-pivot elimination.  Raises SingularLyapunov when two eigenvalues
    of A sum to (numerically) zero, and MatlibError if the residual check
    ``|A'P + PA + Q| <= rtol * |Q|`` fails.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise MatlibError(f"A must be square, got {A.shape}")
    Q = require_symmetric(Q, name="Q")
    if Q.shape[0] != n:
        raise MatlibError("Q dimension does not match A")

    # vec(A'P) + vec(PA) = (I (x) A' + A' (x) I) vec(P), column-major vec.
    K = np.kron(np.eye(n), A.T) + np.kron(A.T, np.eye(n))
    vecP = _solve_partial_pivot(K, -Q.flatten(order="F"), pivot_rtol)
    P = vecP.reshape((n, n), order="F")
    P = 0.5 * (P + P.T)

    residual = np.linalg.norm(A.T @ P + P @ A + Q)
    if residual > rtol * max(np.linalg.norm(Q), 1e-300):
        raise MatlibError(
            f"Lyapunov residual {residual:.3e} exceeds tolerance")
    return P


def is_positive_definite(S, sym_rtol=SYM_RTOL):
    """Positive definiteness via Cholesky factorization."""
    S = require_symmetric(S, rtol=sym_rtol)
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return False
    return True


def _jacobi_diagonalize(S, offdiag_rtol=JACOBI_OFFDIAG_RTOL):
    """Cyclic Jacobi sweeps; returns the (approximately) diagonalized matrix."""
    A = S.copy()
    n = A.shape[0]
    if n == 1:
        return A
    scale = max(np.linalg.norm(S), 1e-300)

    def offdiag_norm(M):
        return np.sqrt(max(0.0, np.linalg.norm(M) ** 2
                           - np.linalg.norm(np.diag(M)) ** 2))

    for _ in range(_JACOBI_MAX_SWEEPS):
        if offdiag_norm(A) <= offdiag_rtol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * A[:, p] - s * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = s * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                A[p, q] = A[q, p] = 0.0
    return A


def sym_eig_bounds(S, sym_rtol=SYM_RTOL, offdiag_rtol=JACOBI_OFFDIAG_RTOL):
    """Extreme eigenvalues (lambda_min, lambda_max) of a symmetric matrix."""
    S = require_symmetric(S, rtol=sym_rtol)
    D = _jacobi_diagonalize(S, offdiag_rtol)
    d = np.diag(D)
    return float(np.min(d)), float(np.max(d))


def spectral_norm(M):
    """Induced 2-norm: sqrt of the largest eigenvalue of M'M."""
    M = as_matrix(M, "M")
    if M.size == 0 or not np.any(M):
        return 0.0
    _, lam_max = sym_eig_bounds(M.T @ M)
    return float(np.sqrt(max(0.0, lam_max)))


def hurwitz_check(A):
    """Lyapunov criterion for Hurwitz-ness; returns (verdict, reason)."""
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise MatlibError(f"A must be square, got {A.shape}")
    try:
        P = solve_lyapunov(A, np.eye(A.shape[0]))
    except SingularLyapunov:
        return False, "Lyapunov operator singular (eigenvalues summing to zero)"
    if not is_positive_definite(P):
        return False, "Lyapunov solution is not positive definite"
    return True, "Lyapunov solution positive definite"


def is_hurwitz(A):
    ok, _ = hurwitz_check(A)
    return ok
