"""Per-batch model graph built from rank correlations of score vectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .detectors import ScoreSet
from .stats import spearman_matrix

log = logging.getLogger(__name__)

MIN_SCORE_LENGTH = 10


@dataclass
class CorrelationMatrix:
    batch_index: int
    model_ids: list
    entries: np.ndarray


@dataclass
class ModelGraph:
    """Undirected weighted graph over model ids.

    ``weights`` is the dense symmetric matrix with a zero diagonal; an edge
    exists wherever an off-diagonal weight is nonzero.
    """

    batch_index: int
    nodes: list
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        iu, ju = np.nonzero(np.triu(self.weights, k=1))
        return [(self.nodes[i], self.nodes[j], float(self.weights[i, j])) for i, j in zip(iu, ju)]

    def subgraph(self, members) -> "ModelGraph":
        members = sorted(members)
        pos = [self.nodes.index(m) for m in members]
        return ModelGraph(self.batch_index, members, self.weights[np.ix_(pos, pos)].copy())

    def to_edgelist(self) -> str:
        return "".join(f"{i} {j} {w:.17g}\n" for i, j, w in self.edges)

    @classmethod
    def from_edgelist(cls, text: str, nodes=None, batch_index: int = 0) -> "ModelGraph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        found = {int(r[0]) for r in rows} | {int(r[1]) for r in rows}
        nodes = sorted(found if nodes is None else set(nodes) | found)
        pos = {n: k for k, n in enumerate(nodes)}
        w = np.zeros((len(nodes), len(nodes)))
        for a, b, val in rows:
            i, j = pos[int(a)], pos[int(b)]
            w[i, j] = w[j, i] = float(val)
        return cls(batch_index, nodes, w)


def spearman_corr(score_set: ScoreSet) -> CorrelationMatrix:
    if len(score_set) < 2:
        raise ValueError("need at least two score vectors")
    if score_set.n_steps < MIN_SCORE_LENGTH:
        raise ValueError(f"score vectors need at least {MIN_SCORE_LENGTH} entries")
    m = score_set.matrix
    constant = np.ptp(m, axis=1) == 0.0
    if constant.any():
        ids = [mid for mid, c in zip(score_set.model_ids, constant) if c]
        log.warning("batch %d: constant score vectors from models %s", score_set.batch_index, ids)
    return CorrelationMatrix(score_set.batch_index, list(score_set.model_ids), spearman_matrix(m))


def build_graph(corr: CorrelationMatrix) -> ModelGraph:
    w = corr.entries.copy()
    np.fill_diagonal(w, 0.0)
    return ModelGraph(corr.batch_index, list(corr.model_ids), w)


def positive_view(graph: ModelGraph) -> ModelGraph:
    """Negative weights clamped to zero, which also removes those edges."""
    return ModelGraph(graph.batch_index, list(graph.nodes), np.maximum(graph.weights, 0.0))
