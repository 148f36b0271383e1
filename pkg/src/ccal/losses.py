"""Cosine scoring, pairwise ranking hinge loss and the trace-norm loss."""
from dataclasses import dataclass

import numpy as np

from . import cca
from .errors import ContractError, UndefinedScoreError


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.5
    symmetric: bool = False

    def __post_init__(self):
        if not self.margin > 0:
            raise ContractError(f"margin must be positive, got {self.margin}")

    @property
    def queries_per_row(self):
        return 2 if self.symmetric else 1


def cosine_score(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise UndefinedScoreError("cosine score of a zero-norm vector is undefined")
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


def _normalize_rows(E, name):
    norms = np.linalg.norm(E, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise UndefinedScoreError(f"row {zero[0]} of {name} has zero norm", row=int(zero[0]))
    return E / norms[:, None], norms


def _hinges(Xs, Ys, cfg):
    Xs = np.asarray(Xs, dtype=np.float64)
    Ys = np.asarray(Ys, dtype=np.float64)
    if Xs.ndim != 2 or Xs.shape != Ys.shape:
        raise ContractError(f"embeddings must be equal-shape matrices, got {Xs.shape} and {Ys.shape}")
    if Xs.shape[0] < 2:
        raise ContractError("ranking loss needs at least two pairs")
    xn, x_norms = _normalize_rows(Xs, "X*")
    yn, y_norms = _normalize_rows(Ys, "Y*")
    S = xn @ yn.T
    match = np.diag(S)
    off = ~np.eye(S.shape[0], dtype=bool)
    # H[i, j]: x_i as query, y_j as contrastive candidate
    H = np.where(off, cfg.margin - match[:, None] + S, 0.0)
    Hy = None
    if cfg.symmetric:
        # y_i as query, x_j as contrastive candidate
        Hy = np.where(off, cfg.margin - match[:, None] + S.T, 0.0)
    return xn, yn, x_norms, y_norms, H, Hy


def ranking_loss(Xs, Ys, cfg=LossConfig()):
    """Sum over queries and mismatching candidates of ``max(0, margin - s_match + s_other)``."""
    *_, H, Hy = _hinges(Xs, Ys, cfg)
    loss = np.maximum(H, 0.0).sum()
    if Hy is not None:
        loss += np.maximum(Hy, 0.0).sum()
    return float(loss)


def ranking_loss_adjoint(Xs, Ys, cfg=LossConfig()):
    """Subgradient of :func:`ranking_loss`; a hinge sitting exactly at zero counts as inactive."""
    xn, yn, x_norms, y_norms, H, Hy = _hinges(Xs, Ys, cfg)
    G = (H > 0.0).astype(np.float64)
    np.fill_diagonal(G, -G.sum(axis=1))
    if Hy is not None:
        Gy = (Hy > 0.0).astype(np.float64)
        # d/dS of Hy[i, j] = S[j, i] - S[i, i]
        G += Gy.T
        G[np.diag_indices_from(G)] -= Gy.sum(axis=1)
    xn_bar = G @ yn
    yn_bar = G.T @ xn
    x_bar = (xn_bar - xn * np.sum(xn * xn_bar, axis=1, keepdims=True)) / x_norms[:, None]
    y_bar = (yn_bar - yn * np.sum(yn * yn_bar, axis=1, keepdims=True)) / y_norms[:, None]
    return x_bar, y_bar


def tno_loss(X, Y, r=cca.DEFAULT_REG):
    """Negated trace norm with its gradient, so that minimizing maximizes correlation."""
    X, Y = cca._check_pair(X, Y)
    tape = cca.cca_forward(X, Y, r, min(X.shape[1], Y.shape[1]))
    gx, gy = cca.tno_gradient(X, Y, r, tape=tape)
    return -float(np.sum(tape.state.corr)), -gx, -gy
