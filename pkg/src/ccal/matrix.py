"""Dense double-precision kernels and their reverse-mode (adjoint) rules.

Matrices are plain 2-D ``float64`` numpy arrays. The three decompositions the
CCA layer relies on (Cholesky, triangular inverse, symmetric eigensolver) are
written out here rather than taken from LAPACK so that their exact behaviour,
including eigenvector signs, is fixed and reproducible. The inner loops are
compiled with numba.

Adjoints follow the "symmetric gradient" convention for symmetric inputs: the
returned ``S_bar`` is symmetric and satisfies ``<S_bar, dS> = df`` for every
symmetric perturbation ``dS``.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import (ContractError, ConvergenceError, DecompositionError,
                     DegenerateSpectrumError, SingularMatrixError)

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
GAP_EPS = 1e-8


def as_mat(a, name="matrix"):
    """Validate and convert ``a`` to a finite, non-empty 2-D float64 array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ContractError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} contains NaN or Inf")
    return a


def _require_square(a, name):
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"{name} must be square, got shape {a.shape}")


def _require_symmetric(a, tol, name):
    scale = max(1.0, float(np.max(np.abs(a))))
    asym = float(np.max(np.abs(a - a.T)))
    if asym > tol * scale:
        raise ContractError(f"{name} is not symmetric (max asymmetry {asym:.3e})")


# ---------------------------------------------------------------------------
# compiled kernels; each returns a status code instead of raising

@njit(cache=True)
def _cholesky_kernel(S, L):
    n = S.shape[0]
    for j in range(n):
        d = S[j, j]
        for p in range(j):
            d -= L[j, p] * L[j, p]
        if not d > 0.0:
            L[j, j] = d
            return j
        ljj = np.sqrt(d)
        L[j, j] = ljj
        for i in range(j + 1, n):
            s = S[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            L[i, j] = s / ljj
    return -1


@njit(cache=True)
def _invert_lower_kernel(L, M):
    n = L.shape[0]
    for j in range(n):
        M[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, n):
            s = 0.0
            for p in range(j, i):
                s += L[i, p] * M[p, j]
            M[i, j] = -s / L[i, i]


@njit(cache=True)
def _jacobi_kernel(A, V, tol, max_sweeps):
    """Cyclic row-by-row Jacobi. Returns (sweeps used, final off-diagonal norm)."""
    n = A.shape[0]
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += A[i, j] * A[i, j]
    fro = np.sqrt(fro)
    threshold = tol * fro
    sweeps = 0
    while True:
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * A[i, j] * A[i, j]
        off = np.sqrt(off)
        if off <= threshold:
            return sweeps, off
        if sweeps >= max_sweeps:
            return sweeps, off
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq


# ---------------------------------------------------------------------------
# forward operations

def cholesky_lower(S):
    """Lower-triangular ``L`` with ``S = L @ L.T``.

    Raises DecompositionError (1-based pivot) if ``S`` is not positive definite.
    """
    S = as_mat(S, "S")
    _require_square(S, "S")
    _require_symmetric(S, 1e-10, "S")
    L = np.zeros_like(S)
    bad = _cholesky_kernel(np.ascontiguousarray(S), L)
    if bad >= 0:
        raise DecompositionError(bad + 1, float(L[bad, bad]))
    return L


def invert_lower(L):
    L = as_mat(L, "L")
    _require_square(L, "L")
    diag = np.diag(L)
    bad = np.flatnonzero(~(diag > 0.0))
    if bad.size:
        raise SingularMatrixError(int(bad[0]), float(diag[bad[0]]))
    M = np.zeros_like(L)
    _invert_lower_kernel(np.ascontiguousarray(np.tril(L)), M)
    return M


@dataclass(frozen=True)
class EigSym:
    """Eigenvalues in descending order and matching orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def fix_signs(U):
    """Flip each column so that its largest-magnitude entry is positive.

    ``argmax`` returns the first maximum, which gives the lowest-index tie-break.
    """
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[idx, np.arange(U.shape[1])] < 0.0, -1.0, 1.0)
    return U * signs


def eig_sym(S, psd=False):
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    With ``psd=True`` the input is known to be positive semi-definite
    (e.g. ``T @ T.T``); round-off negatives down to ``-1e-10 * scale`` are
    clamped to zero and anything more negative is rejected.
    """
    S = as_mat(S, "S")
    _require_square(S, "S")
    _require_symmetric(S, 1e-9, "S")
    A = np.ascontiguousarray(0.5 * (S + S.T))
    n = A.shape[0]
    V = np.eye(n)
    sweeps, off = _jacobi_kernel(A, V, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    if off > JACOBI_TOL * np.linalg.norm(S):
        raise ConvergenceError(sweeps, off)
    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    V = fix_signs(V[:, order])
    if psd:
        scale = max(1.0, float(np.max(np.abs(values))))
        if values[-1] < -1e-10 * scale:
            raise ContractError(f"matrix expected PSD has eigenvalue {values[-1]:.3e}")
        values = np.maximum(values, 0.0)
    return EigSym(values, V)


# ---------------------------------------------------------------------------
# adjoints

def _phi(X):
    """Lower triangle with the diagonal halved."""
    out = np.tril(X)
    out[np.diag_indices_from(out)] *= 0.5
    return out


def _sym(X):
    return 0.5 * (X + X.T)


def cholesky_adjoint(L, L_bar):
    """Adjoint of ``S -> cholesky_lower(S)``; returns symmetric ``S_bar``."""
    L = as_mat(L, "L")
    L_bar = as_mat(L_bar, "L_bar")
    if L.shape != L_bar.shape:
        raise ContractError(f"shape mismatch: L {L.shape} vs L_bar {L_bar.shape}")
    L_bar = np.tril(L_bar)
    M = invert_lower(L)
    P = _phi(L.T @ L_bar)
    return _sym(M.T @ P @ M)


def invert_lower_adjoint(L_inv, M_bar):
    """Adjoint of ``L -> inv(L)`` for lower-triangular ``L``.

    Only the lower triangle of ``L`` is a free input, so the result is
    restricted to it.
    """
    L_inv = as_mat(L_inv, "L_inv")
    M_bar = as_mat(M_bar, "M_bar")
    if L_inv.shape != M_bar.shape:
        raise ContractError(f"shape mismatch: L_inv {L_inv.shape} vs adjoint {M_bar.shape}")
    return -np.tril(L_inv.T @ M_bar @ L_inv.T)


def eig_sym_adjoint(decomp, value_adjoints, vector_adjoints, gap_eps=GAP_EPS):
    """Adjoint of ``S -> eig_sym(S)`` for distinct eigenvalues.

    ``S_bar = U (diag(e_bar) + F * (U' U_bar)) U'`` symmetrized, with
    ``F[i, j] = 1 / (e[j] - e[i])`` off the diagonal. Raises
    DegenerateSpectrumError when an eigenvalue pair closer than ``gap_eps``
    involves an eigenvector with nonzero adjoint.
    """
    e = decomp.values
    U = decomp.vectors
    n = e.size
    e_bar = np.zeros(n) if value_adjoints is None else np.asarray(value_adjoints, dtype=np.float64)
    U_bar = np.zeros((n, n)) if vector_adjoints is None else np.asarray(vector_adjoints, dtype=np.float64)
    if e_bar.shape != (n,) or U_bar.shape != (n, n):
        raise ContractError("adjoint shapes do not match the decomposition")

    gaps = e[None, :] - e[:, None]
    active = np.any(U_bar != 0.0, axis=0)
    close = np.abs(gaps) < gap_eps
    np.fill_diagonal(close, False)
    bad = close & (active[None, :] | active[:, None])
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise DegenerateSpectrumError(int(i), int(j), float(abs(gaps[i, j])))

    with np.errstate(divide="ignore"):
        F = np.where(close | np.eye(n, dtype=bool), 0.0, 1.0 / np.where(gaps == 0.0, 1.0, gaps))
    inner = F * (U.T @ U_bar)
    inner[np.diag_indices(n)] += e_bar
    return _sym(U @ inner @ U.T)
