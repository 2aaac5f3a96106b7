"""Top two singular values of small dense matrices by power iteration."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

POWER_TOL = 1e-12
POWER_MAX_ITER = 5000


def _top_singular(A: np.ndarray, tol: float, max_iter: int, v0: np.ndarray):
    """Return ``(sigma, u, v)`` for the dominant singular triple of ``A``.

    Alternates ``u = A v / |A v|`` and ``v = A^T u / |A^T u|``; stops when
    the singular value estimate moves by less than ``tol`` (relative).
    """
    v = v0 / np.linalg.norm(v0)
    sigma = 0.0
    u = np.zeros(A.shape[0])
    for _ in range(max_iter):
        Av = A @ v
        nu = np.linalg.norm(Av)
        if nu == 0.0:
            return 0.0, u, v
        u = Av / nu
        Atu = A.T @ u
        s = np.linalg.norm(Atu)
        if s == 0.0:
            return 0.0, u, v
        v = Atu / s
        if abs(s - sigma) <= tol * s:
            sigma = s
            break
        sigma = s
    return sigma, u, v


def top_two_singular(A, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER):
    """``(sigma_1, sigma_2, u_1, v_1)`` for a real matrix.

    The second value comes from power iteration on ``A - sigma_1 u_1 v_1^T``,
    so its absolute accuracy is at the level of ``eps * sigma_1`` rather
    than ``sqrt(eps) * sigma_1``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[1] == 1 or A.shape[0] == 1:
        s = float(np.linalg.norm(A))
        u = A[:, 0] / s if A.shape[1] == 1 and s else np.ones(A.shape[0])
        v = A[0] / s if A.shape[0] == 1 and s else np.ones(A.shape[1])
        return s, 0.0, u, v
    # the all-ones start is never orthogonal to the Perron vector of a
    # nonnegative matrix; a second deterministic start covers the rest
    n = A.shape[1]
    s1, u1, v1 = _top_singular(A, tol, max_iter, np.ones(n))
    if s1 == 0.0:
        return 0.0, 0.0, u1, v1
    R = A - s1 * np.outer(u1, v1)
    start = np.cos(np.arange(1, n + 1, dtype=float))
    start -= (start @ v1) * v1
    if np.linalg.norm(start) < 1e-8:
        start = np.sin(np.arange(1, n + 1, dtype=float))
    s2, _, _ = _top_singular(R, tol, max_iter, start)
    return s1, s2, u1, v1


def singular_ratio(A, tol: float = POWER_TOL) -> float:
    """``sigma_2 / sigma_1``; zero for an exactly rank-one matrix, 1 for a
    permutation matrix."""
    if is_exact_rank_one(A):
        return 0.0
    s1, s2, _, _ = top_two_singular(A, tol)
    if s1 == 0.0:
        return float("nan")
    return float(min(s2 / s1, 1.0))


def is_exact_rank_one(A) -> bool:
    """Every 2x2 minor vanishes in exact rational arithmetic on the stored
    floats, and the matrix is nonzero."""
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        return False
    r = int(np.argmax(np.abs(A).sum(axis=1)))
    d0 = int(np.argmax(np.abs(A[r])))
    # every row must be proportional to row r: A[i, c] A[r, d0] == A[i, d0] A[r, c]
    cross = A * A[r, d0] - np.outer(A[:, d0], A[r])
    if np.abs(cross).max() > 1e-6 * A[r, d0] ** 2:
        return False
    ref = [Fraction(float(v)) for v in A[r]]
    piv = ref[d0]
    for i in range(A.shape[0]):
        if i == r or not np.any(A[i]):
            continue
        lead = Fraction(float(A[i, d0]))
        for c in range(A.shape[1]):
            if Fraction(float(A[i, c])) * piv != lead * ref[c]:
                return False
    return True
