"""Rank statistics shared by graph construction, drift detection and evaluation."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata


def spearman_matrix(scores: np.ndarray) -> np.ndarray:
    """Pairwise Spearman correlation between the rows of ``scores``.

    Ties get average ranks. Rows with zero rank variance (constant rows)
    correlate 0 with everything. The diagonal is zero and the result is
    bit-exactly symmetric.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise ValueError("scores must be a 2-D array (models x time steps)")
    ranks = rankdata(scores, method="average", axis=1)
    ranks -= ranks.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", ranks, ranks))
    degenerate = norms == 0.0
    norms[degenerate] = 1.0
    unit = ranks / norms[:, None]
    corr = unit @ unit.T
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    np.clip(corr, -1.0, 1.0, out=corr)
    upper = np.triu(corr, k=1)
    return upper + upper.T


def kendall_tau_b(x, y) -> float:
    """Tie-adjusted Kendall rank correlation of two equal-length sequences."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("kendall_tau_b expects two 1-D sequences of equal length")
    n = x.size
    if n < 2:
        raise ValueError("need at least two observations")
    iu = np.triu_indices(n, k=1)
    dx = np.sign(x[:, None] - x[None, :])[iu]
    dy = np.sign(y[:, None] - y[None, :])[iu]
    s = float(np.sum(dx * dy))
    # (n0 - n1) and (n0 - n2) of tau-b are the untied pair counts
    untied_x = float(np.count_nonzero(dx))
    untied_y = float(np.count_nonzero(dy))
    if untied_x == 0 or untied_y == 0:
        return 0.0
    return s / np.sqrt(untied_x * untied_y)


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return -math.fsum(p * np.log(p))


def normalized_mutual_info(labels_a, labels_b) -> float:
    """NMI with arithmetic-mean normalization.

    Two single-cluster labelings are identical, so their NMI is 1. If only
    one side has zero entropy the mutual information is 0 and so is NMI.
    """
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    if labels_a.shape != labels_b.shape or labels_a.ndim != 1:
        raise ValueError("label sequences must be 1-D and of equal length")
    _, ia = np.unique(labels_a, return_inverse=True)
    _, ib = np.unique(labels_b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1.0)
    n = table.sum()
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    # fsum is exactly rounded, so swapping the arguments cannot change the result
    mi = math.fsum(pij[nz] * np.log(pij[nz] / outer[nz]))
    nmi = mi / ((ha + hb) / 2.0)
    return min(max(nmi, 0.0), 1.0)


def roc_auc(scores, labels) -> float:
    """ROC-AUC via the Mann-Whitney statistic, ties counted one half.

    Raises ``ValueError`` if only one class is present.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: labels contain a single class")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def znormalize(x) -> np.ndarray:
    """Zero-mean unit-variance copy of ``x``; constant input maps to zeros."""
    x = np.asarray(x, dtype=float)
    std = x.std()
    if not np.isfinite(std) or std == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / std
