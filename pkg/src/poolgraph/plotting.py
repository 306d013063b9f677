"""Figures for run, sweep and ablation outputs, written as PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rc("figure", figsize=(7.0, 3.2), dpi=110)
plt.rc("axes", linewidth=0.6, grid=True)
plt.rc("grid", linewidth=0.4, alpha=0.5)
plt.rc("font", size=9)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_drift(records: list[dict], theta: float, path) -> Path:
    """Drift components per batch, threshold line, major updates marked."""
    t = np.array([r["t"] for r in records])
    fig, ax = plt.subplots()
    ax.plot(t, [r["d_cent"] for r in records], lw=0.8, label="centrality")
    ax.plot(t, [r["d_comm"] for r in records], lw=0.8, label="community")
    ax.plot(t, [r["D"] for r in records], lw=1.4, color="k", label="combined")
    ax.axhline(theta, color="tab:red", ls="--", lw=0.8, label="threshold")
    majors = [r["t"] for r in records if r["update"] == "major"]
    for m in majors:
        ax.axvline(m, color="tab:red", alpha=0.15, lw=2)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("batch")
    ax.set_ylabel("drift")
    ax.legend(loc="upper right", fontsize=7, ncol=4)
    return _save(fig, path)


def plot_pool(records: list[dict], capacity: int | None, path) -> Path:
    """Pool size, community count and representative count per batch."""
    t = [r["t"] for r in records]
    fig, ax = plt.subplots()
    ax.step(t, [r["pool_size"] for r in records], where="post", label="pool size")
    ax.step(t, [len(r["community_sizes"]) for r in records], where="post", label="communities")
    ax.step(t, [len(r["representatives"]) for r in records], where="post", label="representatives")
    if capacity:
        ax.axhline(capacity, color="gray", ls=":", lw=0.8, label="capacity")
    ax.set_xlabel("batch")
    ax.set_ylabel("count")
    ax.legend(loc="upper left", fontsize=7, ncol=4)
    return _save(fig, path)


def plot_scores(index, scores, labels, predictions, path) -> Path:
    """Final scores over time with true anomalies and flagged points."""
    index = np.asarray(index)
    scores = np.asarray(scores, dtype=float)
    fig, ax = plt.subplots(figsize=(9.0, 3.0))
    ax.plot(index, scores, lw=0.5, color="0.3")
    if labels is not None:
        hit = np.asarray(labels) == 1
        ax.scatter(index[hit], scores[hit], s=10, facecolors="none", edgecolors="tab:red",
                   lw=0.7, label="labeled anomaly")
    flagged = np.asarray(predictions) == 1
    ax.scatter(index[flagged], scores[flagged], s=4, color="tab:blue", label="flagged")
    ax.set_xlabel("time step")
    ax.set_ylabel("ensemble score")
    ax.legend(loc="upper right", fontsize=7)
    return _save(fig, path)


def plot_sweep(param: str, values, auc, adt_ms, path) -> Path:
    """AUC and ADT against one swept parameter, on twin axes."""
    values = np.asarray(values, dtype=float)
    auc = np.array([np.nan if a is None else a for a in auc], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(values, auc, "o-", color="tab:blue")
    ax.set_xlabel(param)
    ax.set_ylabel("AUC", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(values, adt_ms, "s--", color="tab:orange")
    ax2.set_ylabel("ADT (ms/step)", color="tab:orange")
    ax2.grid(False)
    return _save(fig, path)


def plot_heatmap(row_param: str, col_param: str, rows, cols, matrix, path) -> Path:
    matrix = np.asarray(matrix, dtype=float)
    fig, ax = plt.subplots(figsize=(4.6, 3.8))
    im = ax.imshow(matrix, origin="lower", cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(cols)), [f"{c:g}" for c in cols])
    ax.set_yticks(range(len(rows)), [f"{r:g}" for r in rows])
    ax.set_xlabel(col_param)
    ax.set_ylabel(row_param)
    ax.grid(False)
    mid = np.nanmean(matrix) if np.isfinite(matrix).any() else 0.0
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            if np.isfinite(matrix[i, j]):
                ax.text(j, i, f"{matrix[i, j]:.4f}", ha="center", va="center", fontsize=7,
                        color="k" if matrix[i, j] > mid else "w")
    cbar = fig.colorbar(im, ax=ax, label="AUC")
    cbar.formatter.set_useOffset(False)
    cbar.update_ticks()
    return _save(fig, path)


def plot_ablation(modes, auc, adt_ms, path) -> Path:
    x = np.arange(len(modes))
    auc = np.array([np.nan if a is None else a for a in auc], dtype=float)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax1.bar(x, auc, color="tab:blue")
    finite = auc[np.isfinite(auc)]
    if finite.size:
        ax1.set_ylim(max(0.0, finite.min() - 0.05), 1.0)
    ax1.set_ylabel("AUC")
    ax2.bar(x, adt_ms, color="tab:orange")
    ax2.set_ylabel("ADT (ms/step)")
    for ax in (ax1, ax2):
        ax.set_xticks(x, modes, rotation=30, ha="right")
    return _save(fig, path)
