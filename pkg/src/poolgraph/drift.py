"""Concept drift from changes in model-graph structure."""

from __future__ import annotations

from dataclasses import dataclass

from .community import Partition, pagerank
from .graph import ModelGraph, positive_view
from .stats import kendall_tau_b, normalized_mutual_info


class Incomparable(ValueError):
    """Consecutive graphs share fewer than two models."""


@dataclass
class CentralityRanking:
    batch_index: int
    ranking: dict  # model id -> rank, 1 = most central


@dataclass
class DriftScore:
    batch_index: int
    d_cent: float
    d_comm: float
    combined: float
    drifted: bool

    def as_record(self) -> dict:
        return {"d_cent": self.d_cent, "d_comm": self.d_comm, "D": self.combined,
                "drifted": self.drifted}


def centrality_ranking(graph: ModelGraph, damping: float = 0.85) -> CentralityRanking:
    if len(graph) == 0:
        raise ValueError("empty graph")
    pr = pagerank(positive_view(graph), damping=damping)
    order = sorted(pr, key=lambda m: (-pr[m], m))
    return CentralityRanking(graph.batch_index, {m: r for r, m in enumerate(order, start=1)})


def _common(a, b) -> list:
    common = sorted(set(a) & set(b))
    if len(common) < 2:
        raise Incomparable(f"only {len(common)} common models")
    return common


def centrality_drift(prev: CentralityRanking, cur: CentralityRanking) -> float:
    """``(1 - tau) / 2`` over the models both rankings share."""
    common = _common(prev.ranking, cur.ranking)
    tau = kendall_tau_b([prev.ranking[m] for m in common], [cur.ranking[m] for m in common])
    return float(min(max((1.0 - tau) / 2.0, 0.0), 1.0))


def community_drift(prev: Partition, cur: Partition) -> float:
    """``1 - NMI`` between the two partitions restricted to their shared models."""
    prev_ids = [m for c in prev.communities for m in c]
    cur_ids = [m for c in cur.communities for m in c]
    common = _common(prev_ids, cur_ids)
    nmi = normalized_mutual_info(prev.restricted(common).labels(common),
                                 cur.restricted(common).labels(common))
    return float(min(max(1.0 - nmi, 0.0), 1.0))


def drift_score(d_comm: float, d_cent: float, beta: float = 0.5, theta: float = 0.3,
                batch_index: int = 0) -> DriftScore:
    for name, v in (("d_comm", d_comm), ("d_cent", d_cent), ("beta", beta)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    combined = beta * d_comm + (1.0 - beta) * d_cent
    return DriftScore(batch_index, float(d_cent), float(d_comm), float(combined),
                      bool(combined > theta))


def graph_drift(prev_rank: CentralityRanking | None, cur_rank: CentralityRanking,
                prev_part: Partition | None, cur_part: Partition,
                beta: float, theta: float) -> DriftScore:
    """Drift between consecutive batches.

    The first batch has no predecessor and scores 0. Batches that share
    fewer than two models with their predecessor count as fully drifted.
    """
    t = cur_rank.batch_index
    if prev_rank is None or prev_part is None:
        return drift_score(0.0, 0.0, beta, theta, t)
    try:
        d_cent = centrality_drift(prev_rank, cur_rank)
        d_comm = community_drift(prev_part, cur_part)
    except Incomparable:
        return DriftScore(t, 1.0, 1.0, 1.0, 1.0 > theta)
    return drift_score(d_comm, d_cent, beta, theta, t)

