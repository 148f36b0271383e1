"""CCA projection layer.

During training the layer fits CCA on the incoming batch, stores the batch
statistics and projects both views with the freshly computed projections; the
reverse pass differentiates through the whole fit. At evaluation time it only
applies the stored statistics.
"""
from dataclasses import dataclass

import numpy as np

from . import cca, matrix
from .errors import ContractError, InsufficientSamplesError, StaleTapeError


@dataclass
class LayerTape:
    inner: cca.CcaTape
    owner_id: int
    generation: int


class CCALayer:
    """Topmost layer computing optimal CCA projections per batch.

    ``k`` is fixed at construction. ``state`` holds the statistics of the last
    training batch (or of the last :meth:`refit_statistics` call).
    """

    def __init__(self, k, r=cca.DEFAULT_REG, state=None):
        if k < 1:
            raise ContractError(f"k must be positive, got {k}")
        if r < 0:
            raise ContractError(f"r must be non-negative, got {r}")
        self.k = int(k)
        self.r = float(r)
        self.state = state
        self._generation = 0

    def _fit(self, X, Y, r):
        X, Y = cca._check_pair(X, Y)
        m = X.shape[0]
        if m < self.k + 1:
            raise InsufficientSamplesError(f"batch of {m} samples is too small for k={self.k} (need k+1)")
        return cca.cca_forward(X, Y, self.r if r is None else r, self.k)

    def forward_train(self, X, Y, r=None):
        """Fit on ``(X, Y)``, update the state and return ``(X*, Y*, tape)``.

        ``r`` overrides the layer regularization for this call only.
        """
        inner = self._fit(X, Y, r)
        self.state = inner.state.copy()
        self._generation += 1
        tape = LayerTape(inner, id(self), self._generation)
        st = inner.state
        return inner.Xc @ st.proj_x, inner.Yc @ st.proj_y, tape

    def forward_eval(self, X, Y):
        if self.state is None:
            raise ContractError("CCA layer has no fitted statistics; train or refit it first")
        return cca.project(self.state, X, Y)

    def refit_statistics(self, X, Y):
        self.state = self._fit(X, Y, None).state.copy()
        self._generation += 1
        return self.state

    def backward(self, tape, adj_x, adj_y):
        """Adjoints of the layer inputs given adjoints of the projected outputs."""
        if tape.owner_id != id(self) or tape.generation != self._generation:
            raise StaleTapeError("layer tape is stale: the layer ran another forward pass since")
        return projection_backward(tape.inner, adj_x, adj_y)


def projection_backward(t, adj_x, adj_y, gap_eps=matrix.GAP_EPS):
    """Reverse pass of ``(X, Y) -> (Xc A*, Yc B*)`` including the fit of A*, B*."""
    k = t.k
    st = t.state
    adj_x = np.asarray(adj_x, dtype=np.float64)
    adj_y = np.asarray(adj_y, dtype=np.float64)
    if adj_x.shape != (t.m, k) or adj_y.shape != (t.m, k):
        raise ContractError(f"output adjoints must have shape {(t.m, k)}")

    Xc_bar = adj_x @ st.proj_x.T
    Yc_bar = adj_y @ st.proj_y.T
    A0_bar = (t.Xc.T @ adj_x) * t.signs
    B_bar = t.Yc.T @ adj_y

    Uk = t.eig_u.vectors[:, :k]
    Vk = t.eig_v.vectors[:, :k]
    Mx_bar = Uk @ A0_bar.T
    My_bar = Vk @ B_bar.T
    U_bar = np.zeros_like(t.eig_u.vectors)
    V_bar = np.zeros_like(t.eig_v.vectors)
    U_bar[:, :k] = t.Mx @ A0_bar
    V_bar[:, :k] = t.My @ B_bar

    P_bar = matrix.eig_sym_adjoint(t.eig_u, None, U_bar, gap_eps)
    Q_bar = matrix.eig_sym_adjoint(t.eig_v, None, V_bar, gap_eps)
    T_bar = 2.0 * (P_bar @ t.T + t.T @ Q_bar)
    return cca.backprop_whitening(t, T_bar, Mx_bar, My_bar, Xc_bar, Yc_bar)
