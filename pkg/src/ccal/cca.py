"""Classic CCA and the trace-norm objective, samples as rows.

Every routine takes an ``m x d_x`` matrix ``X`` and an ``m x d_y`` matrix ``Y``
whose rows are paired observations. Covariances are
``Xc' Xc / (m - 1) + r I`` with ``Xc`` the column-centred data.

The canonical directions are obtained without an SVD: the whitened
cross-covariance ``T = Lx^-1 Sxy Ly^-T`` is decomposed through the two
symmetric eigenproblems ``T T'`` and ``T' T``, and the projections are then
sign-aligned so that every canonical pair is positively correlated.
"""
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import matrix
from .errors import ContractError, DegenerateSpectrumError, InsufficientSamplesError

DEFAULT_REG = 1e-3


class Covariances(NamedTuple):
    sxx: np.ndarray
    syy: np.ndarray
    sxy: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray


@dataclass
class CcaState:
    """Means, projections and canonical correlations of a fitted CCA."""

    mean_x: np.ndarray
    mean_y: np.ndarray
    proj_x: np.ndarray
    proj_y: np.ndarray
    corr: np.ndarray
    reg: float
    k: int

    def copy(self):
        return CcaState(self.mean_x.copy(), self.mean_y.copy(), self.proj_x.copy(),
                        self.proj_y.copy(), self.corr.copy(), self.reg, self.k)

    def equals(self, other, atol=0.0):
        if other is None or self.k != other.k:
            return False
        pairs = [(self.mean_x, other.mean_x), (self.mean_y, other.mean_y),
                 (self.proj_x, other.proj_x), (self.proj_y, other.proj_y),
                 (self.corr, other.corr)]
        return all(a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=atol) for a, b in pairs)


@dataclass
class CcaTape:
    """Intermediates of one CCA computation, kept for the reverse pass."""

    m: int
    Xc: np.ndarray
    Yc: np.ndarray
    cov: Covariances
    Lx: np.ndarray
    Ly: np.ndarray
    Mx: np.ndarray
    My: np.ndarray
    T: np.ndarray
    eig_u: matrix.EigSym
    eig_v: matrix.EigSym
    k: int
    signs: np.ndarray
    state: CcaState


def _check_pair(X, Y):
    X = matrix.as_mat(X, "X")
    Y = matrix.as_mat(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ContractError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    return X, Y


def estimate_covariances(X, Y, r=DEFAULT_REG):
    X, Y = _check_pair(X, Y)
    m = X.shape[0]
    if m < 2:
        raise InsufficientSamplesError(f"need at least 2 samples to estimate covariances, got {m}")
    if r < 0:
        raise ContractError(f"regularization must be non-negative, got {r}")
    mean_x = X.mean(axis=0)
    mean_y = Y.mean(axis=0)
    Xc = X - mean_x
    Yc = Y - mean_y
    sxx = Xc.T @ Xc / (m - 1) + r * np.eye(X.shape[1])
    syy = Yc.T @ Yc / (m - 1) + r * np.eye(Y.shape[1])
    sxy = Xc.T @ Yc / (m - 1)
    return Covariances(matrix._sym(sxx), matrix._sym(syy), sxy, mean_x, mean_y)


def compute_T(sxx, syy, sxy):
    """Whitened cross-covariance ``Lx^-1 Sxy Ly^-T`` (Cholesky factors ``L``)."""
    Mx = matrix.invert_lower(matrix.cholesky_lower(sxx))
    My = matrix.invert_lower(matrix.cholesky_lower(syy))
    return Mx @ sxy @ My.T


def cca_forward(X, Y, r, k):
    """Fit CCA on one batch and keep everything the reverse pass needs."""
    X, Y = _check_pair(X, Y)
    dx, dy = X.shape[1], Y.shape[1]
    if not 1 <= k <= min(dx, dy):
        raise ContractError(f"k={k} must lie in [1, min(d_x, d_y)={min(dx, dy)}]")
    cov = estimate_covariances(X, Y, r)
    m = X.shape[0]
    Lx = matrix.cholesky_lower(cov.sxx)
    Ly = matrix.cholesky_lower(cov.syy)
    Mx = matrix.invert_lower(Lx)
    My = matrix.invert_lower(Ly)
    T = Mx @ cov.sxy @ My.T
    eig_u = matrix.eig_sym(matrix._sym(T @ T.T), psd=True)
    eig_v = matrix.eig_sym(matrix._sym(T.T @ T), psd=True)

    # whitening is Lx^-1 on the left of Sxy, so the projection needs Lx^-T
    A = Mx.T @ eig_u.vectors[:, :k]
    B = My.T @ eig_v.vectors[:, :k]
    signs = np.where(np.einsum("ij,ij->j", A, cov.sxy @ B) < 0.0, -1.0, 1.0)
    A = A * signs
    corr = np.clip(np.sqrt(eig_u.values[:k]), 0.0, 1.0)
    state = CcaState(cov.mean_x, cov.mean_y, A, B, corr, float(r), k)
    return CcaTape(m, X - cov.mean_x, Y - cov.mean_y, cov, Lx, Ly, Mx, My, T,
                   eig_u, eig_v, k, signs, state)


def cca_fit(X, Y, r=DEFAULT_REG, k=None):
    X, Y = _check_pair(X, Y)
    if k is None:
        k = min(X.shape[1], Y.shape[1])
    return cca_forward(X, Y, r, k).state


def project(state, X, Y):
    """Centre with the stored means and apply the stored projections."""
    X = matrix.as_mat(X, "X")
    Y = matrix.as_mat(Y, "Y")
    if X.shape[1] != state.proj_x.shape[0] or Y.shape[1] != state.proj_y.shape[0]:
        raise ContractError(
            f"inputs have widths ({X.shape[1]}, {Y.shape[1]}), "
            f"state expects ({state.proj_x.shape[0]}, {state.proj_y.shape[0]})")
    return (X - state.mean_x) @ state.proj_x, (Y - state.mean_y) @ state.proj_y


def tno_value(X, Y, r=DEFAULT_REG):
    """Trace norm of ``T``: the sum of all canonical correlations."""
    return float(np.sum(cca_fit(X, Y, r).corr))


def backprop_whitening(tape, T_bar, Mx_bar, My_bar, Xc_bar, Yc_bar):
    """Push adjoints of ``T``, ``Lx^-1``, ``Ly^-1`` (and of the centred data)
    back to the raw inputs ``X`` and ``Y``."""
    T_bar = np.asarray(T_bar)
    cov = tape.cov
    Mx_bar = Mx_bar + T_bar @ tape.My @ cov.sxy.T
    My_bar = My_bar + T_bar.T @ tape.Mx @ cov.sxy
    sxy_bar = tape.Mx.T @ T_bar @ tape.My

    sxx_bar = matrix.cholesky_adjoint(tape.Lx, matrix.invert_lower_adjoint(tape.Mx, Mx_bar))
    syy_bar = matrix.cholesky_adjoint(tape.Ly, matrix.invert_lower_adjoint(tape.My, My_bar))

    scale = 1.0 / (tape.m - 1)
    Xc_bar = Xc_bar + scale * (2.0 * tape.Xc @ sxx_bar + tape.Yc @ sxy_bar.T)
    Yc_bar = Yc_bar + scale * (2.0 * tape.Yc @ syy_bar + tape.Xc @ sxy_bar)
    # the batch mean depends on every row
    return Xc_bar - Xc_bar.mean(axis=0), Yc_bar - Yc_bar.mean(axis=0)


def _check_tno_spectrum(e, k, gap_eps):
    for i in range(k):
        if not e[i] > 0.0:
            raise DegenerateSpectrumError(i, i, float(e[i]))
    stop = min(k + 1, e.size)
    for i in range(stop - 1):
        gap = e[i] - e[i + 1]
        if gap < gap_eps:
            raise DegenerateSpectrumError(i, i + 1, float(gap))


def tno_gradient(X, Y, r=DEFAULT_REG, gap_eps=matrix.GAP_EPS, tape: Optional[CcaTape] = None):
    """Gradient of :func:`tno_value` with respect to ``X`` and ``Y``.

    Runs the decomposition adjoints in reverse (eigenvalues of ``T T'`` back to
    ``T``, whitening factors, covariances, data) rather than a closed form.
    """
    if tape is None:
        X, Y = _check_pair(X, Y)
        tape = cca_forward(X, Y, r, min(X.shape[1], Y.shape[1]))
    e = tape.eig_u.values
    k = tape.k
    _check_tno_spectrum(e, k, gap_eps)
    e_bar = np.zeros_like(e)
    e_bar[:k] = 0.5 / np.sqrt(e[:k])
    P_bar = matrix.eig_sym_adjoint(tape.eig_u, e_bar, None, gap_eps)
    T_bar = 2.0 * P_bar @ tape.T
    zeros_x = np.zeros_like(tape.Mx)
    zeros_y = np.zeros_like(tape.My)
    return backprop_whitening(tape, T_bar, zeros_x, zeros_y,
                              np.zeros_like(tape.Xc), np.zeros_like(tape.Yc))
