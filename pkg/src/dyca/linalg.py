"""Dense symmetric linear algebra.

Cholesky factorisation, a parallel-ordered cyclic Jacobi eigensolver,
the Cholesky reduction of the generalized symmetric-definite problem
``A u = lambda B u``, and an LU solve with a ridge fallback for
ill-conditioned systems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ExactlySingular, InputError, NoConvergence, NotPositiveDefinite

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
SOLVE_COND_LIMIT = 1e12
SOLVE_RIDGE = 1e-10


def sym(a) -> np.ndarray:
    """Return ``(a + a.T) / 2`` as a float array after checking it is square.

    Inputs whose asymmetry exceeds ``1e-10 * max|a|`` are still accepted;
    symmetrisation is the contract, the tolerance is only used by
    :func:`is_symmetric`.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def is_symmetric(a, rtol: float = 1e-10) -> bool:
    a = np.asarray(a, dtype=float)
    scale = np.abs(a).max(initial=0.0)
    return bool(np.abs(a - a.T).max(initial=0.0) <= rtol * scale)


@dataclass(frozen=True)
class EigPair:
    """Eigenvalues in descending order; column ``i`` of ``eigenvectors`` pairs with value ``i``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises :class:`NotPositiveDefinite` naming the first pivot that is not
    strictly positive.
    """
    a = sym(a)
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        row = low[j, :j]
        d = a[j, j] - row @ row
        if not d > 0.0:
            raise NotPositiveDefinite(j, float(d))
        ljj = np.sqrt(d)
        low[j, j] = ljj
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ row) / ljj
    return low


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # Tournament schedule: n-1 rounds (n even) of n/2 disjoint pairs covering every pair once.
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for k in range(m // 2):
            i, j = players[k], players[m - 1 - k]
            if i < n and j < n:
                p.append(min(i, j))
                q.append(max(i, j))
        rounds.append((np.array(p, dtype=int), np.array(q, dtype=int)))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    # Largest-magnitude component (first one on ties) made positive.
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _sorted_pair(vals: np.ndarray, vecs: np.ndarray, sweeps: int) -> EigPair:
    order = np.argsort(-vals, kind="stable")
    return EigPair(vals[order], _canonical_signs(vecs[:, order]), sweeps)


def jacobi_eig(a, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> EigPair:
    """Cyclic Jacobi eigensolver with parallel (round-robin) pair ordering.

    Each round annihilates ``n/2`` disjoint off-diagonal entries at once.
    Iterates until the off-diagonal Frobenius norm drops below
    ``tol * ||a||_F``.
    """
    a = sym(a).copy()
    n = a.shape[0]
    vecs = np.eye(n)
    scale = np.linalg.norm(a)
    if n == 1 or scale == 0.0:
        return _sorted_pair(np.diag(a).copy(), vecs, 0)
    rounds = _round_robin(n)
    diag = np.eye(n, dtype=bool)
    target = tol * scale
    for sweep in range(max_sweeps + 1):
        off = np.linalg.norm(a[~diag])
        if off <= target:
            return _sorted_pair(np.diag(a).copy(), vecs, sweep)
        if sweep == max_sweeps:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(n)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            vecs = vecs @ rot
    raise NoConvergence(
        f"Jacobi iteration did not converge in {max_sweeps} sweeps "
        f"(off-diagonal norm {off:.3e}, target {target:.3e})"
    )


def sym_eig(a, method: str = "jacobi") -> EigPair:
    """Full spectrum of a symmetric matrix, descending.

    ``method="jacobi"`` uses :func:`jacobi_eig`; ``method="lapack"`` defers to
    ``numpy.linalg.eigh`` (faster for repeated small problems).
    """
    if method == "jacobi":
        return jacobi_eig(a)
    if method == "lapack":
        a = sym(a)
        try:
            vals, vecs = np.linalg.eigh(a)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(str(exc)) from exc
        return _sorted_pair(vals, vecs, 0)
    raise InputError(f"unknown eigensolver {method!r}")


def gen_sym_def_eig(a, b, method: str = "jacobi") -> EigPair:
    """Solve ``a u = lambda b u`` for symmetric ``a`` and symmetric positive definite ``b``.

    Reduces to the standard problem ``L^-1 a L^-T y = lambda y`` with
    ``b = L L^T`` and back-transforms ``u = L^-T y``, so the returned
    eigenvectors are ``b``-orthonormal.
    """
    a = sym(a)
    b = sym(b)
    if a.shape != b.shape:
        raise InputError(f"matrix shapes differ: {a.shape} vs {b.shape}")
    low = cholesky(b)
    half = scipy.linalg.solve_triangular(low, a, lower=True)
    reduced = scipy.linalg.solve_triangular(low, half.T, lower=True)
    pair = sym_eig(reduced, method=method)
    u = scipy.linalg.solve_triangular(low.T, pair.eigenvectors, lower=False)
    return EigPair(pair.eigenvalues, _canonical_signs(u), pair.sweeps)


class LinearSolution(NamedTuple):
    x: np.ndarray
    regularized: bool
    condition: float
    ridge: float = 0.0


def solve(a, rhs, cond_limit: float = SOLVE_COND_LIMIT, ridge: float = SOLVE_RIDGE) -> LinearSolution:
    """LU solve of ``a x = rhs`` with partial pivoting.

    If the 2-norm condition number of ``a`` exceeds ``cond_limit`` the
    system ``(a + eps I) x = rhs`` is solved instead, with
    ``eps = ridge * ||a||_F / sqrt(n)`` (this equals ``ridge * trace(a) / n``
    in scale for a positive semi-definite matrix with flat spectrum, and
    stays non-zero for matrices with vanishing trace).
    """
    a = np.asarray(a, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    if rhs.shape[0] != a.shape[0]:
        raise InputError(f"rhs has {rhs.shape[0]} rows, matrix has {a.shape[0]}")
    n = a.shape[0]
    cond = float(np.linalg.cond(a)) if np.any(a) else np.inf
    eps = 0.0
    mat = a
    if not cond <= cond_limit:
        eps = ridge * np.linalg.norm(a) / np.sqrt(n)
        if eps == 0.0:
            raise ExactlySingular("matrix is identically zero")
        mat = a + eps * np.eye(n)
    lu, piv = scipy.linalg.lu_factor(mat, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if np.any(pivots == 0.0):
        raise ExactlySingular(f"zero pivot at index {int(np.argmin(pivots))}")
    x = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    return LinearSolution(x, eps > 0.0, cond, eps)
