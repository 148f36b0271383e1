"""Cosine nearest-neighbour retrieval and its evaluation measures."""
from dataclasses import dataclass

import numpy as np

from . import cca
from .errors import ContractError, UndefinedScoreError

DIRECTIONS = ("x2y", "y2x")
REPORT_FIELDS = ("R@1", "R@5", "R@10", "MR", "MRR")


@dataclass(frozen=True)
class RetrievalIndex:
    embeddings: np.ndarray
    ids: tuple


def _unit_rows(E, ids=None):
    E = np.asarray(E, dtype=np.float64)
    norms = np.linalg.norm(E, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        who = zero[0] if ids is None else ids[zero[0]]
        raise UndefinedScoreError(f"embedding {who!r} has zero norm", row=int(zero[0]))
    return E / norms[:, None]


def build_index(embeddings, ids):
    E = np.asarray(embeddings, dtype=np.float64)
    ids = tuple(ids)
    if E.ndim != 2 or E.shape[0] != len(ids) or E.shape[0] < 1:
        raise ContractError("need one id per embedding row and at least one row")
    if len(set(ids)) != len(ids):
        raise ContractError("candidate ids must be unique")
    return RetrievalIndex(_unit_rows(E, ids), ids)


def rank_of(index, query, target_id):
    """1-based position of ``target_id`` when candidates are sorted by descending cosine score.

    Equal scores keep candidate insertion order.
    """
    try:
        t = index.ids.index(target_id)
    except ValueError:
        raise ContractError(f"target id {target_id!r} is not in the index") from None
    q = _unit_rows(np.atleast_2d(query))[0]
    scores = index.embeddings @ q
    order = np.argsort(-scores, kind="stable")
    return int(np.flatnonzero(order == t)[0]) + 1


def ranks_from_scores(S):
    """Rank of the diagonal entry in each row of a query-by-candidate score matrix."""
    target = np.diag(S)[:, None]
    better = np.sum(S > target, axis=1)
    earlier_ties = np.sum(np.tril(S == target, k=-1), axis=1)
    return better + earlier_ties + 1


def cross_ranks(Q, C):
    """Ranks when query ``i`` should retrieve candidate ``i``."""
    Qn = _unit_rows(Q)
    Cn = _unit_rows(C)
    return ranks_from_scores(Qn @ Cn.T)


@dataclass(frozen=True)
class RetrievalReport:
    direction: str
    r1: float
    r5: float
    r10: float
    mr: int
    mrr: float
    n_queries: int

    def values(self):
        return (self.r1, self.r5, self.r10, self.mr, self.mrr)

    def line(self, model_name=""):
        return "\t".join([model_name, self.direction, f"{self.r1:.2f}", f"{self.r5:.2f}",
                          f"{self.r10:.2f}", str(self.mr), f"{self.mrr:.2f}"])


def report_from_ranks(ranks, direction=""):
    ranks = np.asarray(ranks)
    if ranks.size == 0 or ranks.min() < 1:
        raise ContractError("ranks must be a non-empty array of positive integers")
    n = ranks.size
    # lower median keeps MR an integer
    mr = int(np.sort(ranks)[(n - 1) // 2])
    return RetrievalReport(direction,
                           100.0 * np.mean(ranks <= 1), 100.0 * np.mean(ranks <= 5),
                           100.0 * np.mean(ranks <= 10), mr,
                           100.0 * float(np.mean(1.0 / ranks)), n)


def evaluate_embeddings(Xe, Ye, direction):
    if direction == "x2y":
        return report_from_ranks(cross_ranks(Xe, Ye), direction)
    if direction == "y2x":
        return report_from_ranks(cross_ranks(Ye, Xe), direction)
    raise ContractError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def evaluate(model, test, direction="x2y"):
    """Embed both views of ``test`` with ``model`` and score one query direction."""
    return evaluate_embeddings(model.embed_x(test.X), model.embed_y(test.Y), direction)


def mean_mrr(model, data):
    Xe, Ye = model.embed_x(data.X), model.embed_y(data.Y)
    return 0.5 * (evaluate_embeddings(Xe, Ye, "x2y").mrr + evaluate_embeddings(Xe, Ye, "y2x").mrr)


def ap_at_50(query_emb, query_labels, cand_emb, cand_labels, top=50):
    """Class precision of the top-50 candidates, averaged per class, in percent."""
    query_labels = np.asarray(query_labels)
    cand_labels = np.asarray(cand_labels)
    if cand_labels.size < top:
        raise ContractError(f"need at least {top} candidates, got {cand_labels.size}")
    missing = set(query_labels.tolist()) - set(cand_labels.tolist())
    if missing:
        raise ContractError(f"query classes without candidates: {sorted(missing)}")
    S = _unit_rows(query_emb) @ _unit_rows(cand_emb).T
    top_idx = np.argsort(-S, axis=1, kind="stable")[:, :top]
    hits = np.mean(cand_labels[top_idx] == query_labels[:, None], axis=1)
    per_class = [hits[query_labels == c].mean() for c in np.unique(query_labels)]
    return 100.0 * float(np.mean(per_class))


def correlation_profile(model, data, r=cca.DEFAULT_REG):
    """Canonical correlations between the two towers' topmost representations."""
    if len(data) < model.k + 1:
        raise ContractError(f"correlation profile needs at least k+1 = {model.k + 1} rows, got {len(data)}")
    x, y = model.towers(data.X, data.Y)
    return cca.cca_fit(x, y, r, model.k).corr
