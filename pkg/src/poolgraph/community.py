"""Community detection, centrality, pseudo ground truth and representative
selection over the model graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detectors import ScoreSet
from .graph import ModelGraph, positive_view
from .stats import roc_auc, znormalize

_GAIN_EPS = 1e-12


@dataclass
class Partition:
    batch_index: int
    communities: list  # sorted tuples of model ids, ordered by smallest member
    resolution: float = 1.0

    def __post_init__(self):
        comms = [tuple(sorted(c)) for c in self.communities]
        self.communities = sorted(comms, key=lambda c: c[0] if c else -1)

    def __len__(self):
        return len(self.communities)

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.communities]

    def labels(self, ids) -> np.ndarray:
        """Community index of each id in ``ids``."""
        where = {m: k for k, c in enumerate(self.communities) for m in c}
        return np.array([where[m] for m in ids])

    def restricted(self, ids) -> "Partition":
        keep = set(ids)
        comms = [tuple(m for m in c if m in keep) for c in self.communities]
        return Partition(self.batch_index, [c for c in comms if c], self.resolution)

    def validate(self, nodes) -> None:
        seen = [m for c in self.communities for m in c]
        if any(len(c) == 0 for c in self.communities):
            raise AssertionError("partition has an empty community")
        if len(seen) != len(set(seen)):
            raise AssertionError("partition communities overlap")
        if set(seen) != set(nodes):
            raise AssertionError("partition does not cover the node set")

    @classmethod
    def singletons(cls, nodes, batch_index=0, resolution=1.0):
        return cls(batch_index, [(n,) for n in nodes], resolution)

    @classmethod
    def whole(cls, nodes, batch_index=0, resolution=1.0):
        return cls(batch_index, [tuple(nodes)], resolution)


@dataclass
class PseudoLabels:
    batch_index: int
    labels: np.ndarray


@dataclass
class RepresentativeSet:
    batch_index: int
    members: dict  # community index -> model id
    combined_scores: dict = field(default_factory=dict)
    centrality: dict = field(default_factory=dict)
    pseudo_auc: dict = field(default_factory=dict)

    @property
    def ids(self) -> list[int]:
        return sorted(self.members.values())


@dataclass
class EnsembleScore:
    batch_index: int
    scores: np.ndarray


# --------------------------------------------------------------------------
# modularity and Louvain


def modularity(weights: np.ndarray, labels, resolution: float = 1.0) -> float:
    """Weighted modularity with a resolution factor on the null-model term."""
    w = np.asarray(weights, dtype=float)
    m2 = w.sum()
    if m2 == 0.0:
        return 0.0
    labels = np.asarray(labels)
    k = w.sum(axis=1)
    same = labels[:, None] == labels[None, :]
    return float(((w - resolution * np.outer(k, k) / m2) * same).sum() / m2)


def _one_level(w: np.ndarray, m2: float, resolution: float, order) -> tuple[np.ndarray, bool]:
    n = w.shape[0]
    comm = np.arange(n)
    k = w.sum(axis=1)
    tot = k.copy()
    improved = False
    moved = True
    while moved:
        moved = False
        for i in order:
            old = comm[i]
            tot[old] -= k[i]
            links = np.bincount(comm, weights=w[i], minlength=n)
            links[old] -= w[i, i]
            gains = links - resolution * tot * k[i] / m2
            best, best_gain = old, gains[old]
            for c in np.unique(comm[w[i] > 0]):
                if c != old and gains[c] > best_gain + _GAIN_EPS:
                    best, best_gain = c, gains[c]
            # leaving for an empty community has zero gain
            if best_gain < -_GAIN_EPS:
                empty = np.setdiff1d(np.arange(n), comm)
                if empty.size:
                    best, best_gain = empty[0], 0.0
            comm[i] = best
            tot[best] += k[i]
            if best != old:
                moved = improved = True
    _, comm = np.unique(comm, return_inverse=True)
    return comm, improved


def louvain(graph: ModelGraph, resolution: float = 1.0, seed: int | None = None,
            shuffle: bool = False) -> Partition:
    """Louvain modularity maximisation on nonnegative weights.

    Nodes are visited in ascending id order unless ``shuffle`` is set, in
    which case ``seed`` fixes a random visiting order at every level.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    w = np.asarray(graph.weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("louvain needs nonnegative weights; pass positive_view(graph)")
    n = len(graph)
    if n == 0:
        raise ValueError("empty graph")
    m2 = w.sum()
    membership = np.arange(n)
    if m2 > 0.0:
        rng = np.random.default_rng(seed) if shuffle else None
        level_w = w
        while True:
            order = np.arange(level_w.shape[0])
            if rng is not None:
                rng.shuffle(order)
            comm, improved = _one_level(level_w, m2, resolution, order)
            if not improved:
                break
            membership = comm[membership]
            agg = np.zeros((comm.max() + 1, level_w.shape[0]))
            agg[comm, np.arange(level_w.shape[0])] = 1.0
            level_w = agg @ level_w @ agg.T
    groups: dict[int, list] = {}
    for node, c in zip(graph.nodes, membership):
        groups.setdefault(int(c), []).append(node)
    part = Partition(graph.batch_index, list(groups.values()), resolution)
    part.validate(graph.nodes)
    return part


# --------------------------------------------------------------------------
# PageRank


class PageRankError(RuntimeError):
    pass


def pagerank(graph: ModelGraph, damping: float = 0.85, tol: float = 1e-12,
             max_iter: int = 10000) -> dict:
    """Weighted PageRank by power iteration; dangling mass is spread uniformly."""
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    w = np.asarray(graph.weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("pagerank needs nonnegative weights")
    n = len(graph)
    if n == 0:
        return {}
    k = w.sum(axis=1)
    dangling = k == 0.0
    trans = np.divide(w, k[:, None], out=np.zeros_like(w), where=~dangling[:, None])
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = (1.0 - damping) / n + damping * (x @ trans + x[dangling].sum() / n)
        nxt /= nxt.sum()
        err = np.abs(nxt - x).sum()
        x = nxt
        if err < tol:
            return {node: float(v) for node, v in zip(graph.nodes, x)}
    raise PageRankError(f"pagerank did not converge in {max_iter} iterations")


# --------------------------------------------------------------------------
# pseudo ground truth


def gmm_binarize(scores: np.ndarray, max_iter: int = 100, tol: float = 1e-6,
                 var_floor: float = 1e-12) -> np.ndarray:
    """Two-component 1-D Gaussian mixture per row; 1 where the point belongs
    to the higher-mean component.

    Rows are fitted jointly but independently. Means start at the 25th and
    90th percentiles (the maximum replaces the latter when the two tie) with
    equal weights and a shared variance. Constant rows
    and fits whose means end within 1e-9 flag nothing.
    """
    x = np.atleast_2d(np.asarray(scores, dtype=float))
    m, n = x.shape
    flags = np.zeros((m, n), dtype=np.int8)
    live = np.ptp(x, axis=1) > 0.0
    if not live.any():
        return flags
    xs = x[live]
    lo, hi = np.percentile(xs, 25, axis=1), np.percentile(xs, 90, axis=1)
    # a tied upper percentile would start both components on the same mean
    hi = np.where(hi > lo, hi, xs.max(axis=1))
    mu = np.stack([lo, hi], axis=1)
    var = np.repeat(np.maximum(xs.var(axis=1), var_floor)[:, None], 2, axis=1)
    pi = np.full_like(mu, 0.5)
    prev = np.full(xs.shape[0], -np.inf)
    active = np.ones(xs.shape[0], dtype=bool)

    def log_joint(mu, var, pi):
        d = xs[:, None, :] - mu[:, :, None]
        return (np.log(pi)[:, :, None] - 0.5 * np.log(2.0 * np.pi * var)[:, :, None]
                - 0.5 * d * d / var[:, :, None])

    for _ in range(max_iter):
        lj = log_joint(mu, var, pi)
        norm = np.logaddexp(lj[:, 0], lj[:, 1])
        ll = norm.sum(axis=1)
        active &= ~(ll - prev < tol)
        if not active.any():
            break
        prev = np.where(active, ll, prev)
        resp = np.exp(lj - norm[:, None, :])
        nk = np.maximum(resp.sum(axis=2), 1e-300)
        new_mu = (resp * xs[:, None, :]).sum(axis=2) / nk
        d = xs[:, None, :] - new_mu[:, :, None]
        new_var = np.maximum((resp * d * d).sum(axis=2) / nk, var_floor)
        new_pi = np.maximum(nk / n, 1e-300)
        a = active[:, None]
        mu = np.where(a, new_mu, mu)
        var = np.where(a, new_var, var)
        pi = np.where(a, new_pi, pi)

    post = log_joint(mu, var, pi)
    high = np.argmax(mu, axis=1)
    assign = np.argmax(post, axis=1)  # ties go to component 0
    out = (assign == high[:, None]).astype(np.int8)
    out[np.abs(mu[:, 0] - mu[:, 1]) < 1e-9] = 0
    flags[live] = out
    return flags


def pseudo_ground_truth(score_set: ScoreSet, seed: int | None = None) -> PseudoLabels:
    """Majority vote (strictly more than half) over per-model GMM flags.

    The EM initialisation is deterministic, so ``seed`` has no effect; it is
    accepted for interface symmetry with the stochastic components.
    """
    if len(score_set) < 1:
        raise ValueError("need at least one score vector")
    flags = gmm_binarize(score_set.matrix)
    votes = flags.sum(axis=0)
    return PseudoLabels(score_set.batch_index, (2 * votes > len(score_set)).astype(np.int8))


def pseudo_performance(scores, pseudo) -> float:
    labels = pseudo.labels if isinstance(pseudo, PseudoLabels) else np.asarray(pseudo)
    scores = np.asarray(scores, dtype=float)
    if scores.shape != labels.shape:
        raise ValueError("scores and pseudo labels differ in length")
    if labels.min() == labels.max():
        return 0.5
    return roc_auc(scores, labels)


# --------------------------------------------------------------------------
# selection and ensemble


def select_representatives(graph: ModelGraph, partition: Partition, score_set: ScoreSet,
                           pseudo: PseudoLabels, alpha: float = 0.5,
                           damping: float = 0.85) -> RepresentativeSet:
    """One model per community by ``alpha * centrality + (1 - alpha) * pseudo AUC``.

    Centrality is PageRank on the community's induced subgraph, min-max
    scaled within the community (singletons and all-equal communities get 1).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    partition.validate(graph.nodes)
    pos_graph = positive_view(graph)
    reps = RepresentativeSet(partition.batch_index, {})
    for ci, members in enumerate(partition.communities):
        pr = pagerank(pos_graph.subgraph(members), damping=damping)
        vals = np.array([pr[m] for m in members])
        lo, hi = vals.min(), vals.max()
        cent = np.ones_like(vals) if hi - lo <= 0.0 else (vals - lo) / (hi - lo)
        best, best_h = None, -np.inf
        for m, c in zip(members, cent):
            q = pseudo_performance(score_set.vector(m), pseudo)
            h = alpha * c + (1.0 - alpha) * q
            reps.centrality[m] = float(c)
            reps.pseudo_auc[m] = float(q)
            reps.combined_scores[m] = float(h)
            if h > best_h:
                best, best_h = m, h
        reps.members[ci] = best
    return reps


def ensemble(reps: RepresentativeSet, score_set: ScoreSet) -> EnsembleScore:
    """Equal-weight mean of the representatives' per-batch z-normalized scores."""
    ids = reps.ids
    missing = [m for m in ids if m not in score_set.model_ids]
    if missing:
        raise KeyError(f"no scores for representatives {missing}")
    stack = np.vstack([znormalize(score_set.vector(m)) for m in ids])
    return EnsembleScore(score_set.batch_index, stack.mean(axis=0))
