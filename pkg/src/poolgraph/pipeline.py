"""Batch-by-batch orchestration: score, graph, ensemble, drift, update, alarm."""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .community import (Partition, ensemble, louvain, pseudo_ground_truth,
                        select_representatives)
from .detectors import (ArchitectureSpec, ModelPool, instantiate_and_train,
                        score_pool)
from .drift import DriftScore, centrality_ranking, graph_drift
from .graph import build_graph, positive_view, spearman_corr
from .pool import (PoolLedger, default_capacity, major_update, minor_update,
                   record_representatives)
from .stats import roc_auc
from .stream import MIN_BATCH_LENGTH, LabeledStream, RunningStandardizer, batch_iter

log = logging.getLogger(__name__)

MODES = ("full", "single_community", "centrality_only", "pseudo_only",
         "average_ensemble", "single_best")
POLICIES = ("rolling_zscore", "quantile")


class PipelineError(RuntimeError):
    def __init__(self, batch_index: int, message: str):
        super().__init__(f"batch {batch_index}: {message}")
        self.batch_index = batch_index


@dataclass(frozen=True)
class PipelineConfig:
    batch_size: int = 512
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.5
    theta_drift: float = 0.3
    resolution: float = 1.0
    capacity: int = 0  # 0 means ceil(2.5 * architecture count)
    damping: float = 0.85
    threshold_policy: str = "rolling_zscore"
    threshold_k: float = 3.0
    threshold_q: float = 0.99
    threshold_window: int = 2048
    seed: int = 0
    mode: str = "full"
    force_drift_every: int = 0  # test hook: also drift whenever t % n == 0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.theta_drift <= 1.0:
            raise ValueError("theta_drift must lie in (0, 1]")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        if self.batch_size < MIN_BATCH_LENGTH:
            raise ValueError(f"batch_size must be at least {MIN_BATCH_LENGTH}")
        if self.capacity < 0 or self.force_drift_every < 0:
            raise ValueError("capacity and force_drift_every must be nonnegative")
        if self.threshold_policy not in POLICIES:
            raise ValueError(f"threshold_policy must be one of {POLICIES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def threshold_params(self) -> dict:
        return {"k": self.threshold_k, "q": self.threshold_q, "window": self.threshold_window}

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: type(f.default) for f in fields(cls)}

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        types = cls.field_types()
        unknown = set(values) - set(types)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**{k: types[k](v) for k, v in values.items()})


def ablation_mode(config: PipelineConfig, mode: str) -> PipelineConfig:
    """Config variant for an ablation.

    ``centrality_only`` and ``pseudo_only`` pin alpha to 1 and 0. The
    structural modes change only the partition that representatives are
    chosen from: ``single_community`` and ``single_best`` use the whole
    graph, ``average_ensemble`` makes every model its own community. Drift
    monitoring always uses the Louvain partition.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    if mode == "centrality_only":
        return replace(config, mode=mode, alpha=1.0)
    if mode == "pseudo_only":
        return replace(config, mode=mode, alpha=0.0)
    return replace(config, mode=mode)


# --------------------------------------------------------------------------
# thresholding


class ScoreHistory:
    """Trailing window of final scores used by :func:`threshold`."""

    def __init__(self, window: int = 2048):
        self.values = deque(maxlen=int(window))

    def __len__(self):
        return len(self.values)

    def extend(self, scores) -> None:
        self.values.extend(float(s) for s in scores)

    def array(self) -> np.ndarray:
        return np.fromiter(self.values, dtype=float, count=len(self.values))


def threshold(scores, policy: str = "rolling_zscore", params: dict | None = None,
              history: ScoreHistory | None = None) -> np.ndarray:
    """Binary predictions against trailing-score statistics.

    ``rolling_zscore`` flags scores above mean + k * std of the history (only
    above the mean when the history is constant); ``quantile`` flags scores
    above its q-quantile. An empty history falls back to the batch itself.
    The batch is appended to ``history`` after flagging.
    """
    params = {"k": 3.0, "q": 0.99, **(params or {})}
    scores = np.asarray(scores, dtype=float)
    ref = history.array() if history is not None and len(history) else scores
    if policy == "rolling_zscore":
        mu, sigma = ref.mean(), ref.std()
        cut = mu if sigma == 0.0 else mu + params["k"] * sigma
    elif policy == "quantile":
        cut = np.quantile(ref, params["q"])
    else:
        raise ValueError(f"unknown threshold policy {policy!r}")
    preds = (scores > cut).astype(np.int8)
    if history is not None:
        history.extend(scores)
    return preds


# --------------------------------------------------------------------------
# metrics


def auc_metric(all_scores, labels) -> float | None:
    """Stream AUC, or ``None`` when the labels hold a single class."""
    try:
        return roc_auc(all_scores, labels)
    except ValueError as exc:
        if "single class" in str(exc):
            return None
        raise


def adt_metric(per_batch_elapsed, total_steps: int) -> float:
    """Average detection time per step in milliseconds (elapsed in seconds)."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    return 1000.0 * float(np.sum(per_batch_elapsed)) / total_steps


# --------------------------------------------------------------------------
# run


@dataclass
class BatchResult:
    batch_index: int
    start: int
    s_final: np.ndarray
    predictions: np.ndarray
    drift: DriftScore
    representatives: list
    combined_scores: dict
    partition_sizes: list
    community_sizes: list
    update: str
    pruned: list
    added: list
    pool_size: int
    elapsed: float
    forced_drift: bool = False
    short_term: dict = field(default_factory=dict)
    ledger: dict | None = None

    @property
    def alarm(self) -> bool:
        return bool(self.predictions.any())

    def record(self) -> dict:
        rec = {
            "t": self.batch_index,
            "start": self.start,
            "n": int(self.s_final.size),
            **self.drift.as_record(),
            "forced": self.forced_drift,
            "update": self.update,
            "pruned": self.pruned,
            "added": self.added,
            "pool_size": self.pool_size,
            "n_communities": len(self.partition_sizes),
            "partition_sizes": self.partition_sizes,
            "community_sizes": self.community_sizes,
            "representatives": self.representatives,
            "h_scores": {str(k): v for k, v in sorted(self.combined_scores.items())},
            "alarm": self.alarm,
            "n_flagged": int(self.predictions.sum()),
            "flagged": [self.start + int(i) for i in np.flatnonzero(self.predictions)],
            "elapsed_ms": 1000.0 * self.elapsed,
        }
        if self.ledger is not None:
            rec["ledger"] = self.ledger
        return rec


@dataclass
class RunReport:
    batches: list
    auc: float | None
    adt_ms: float
    drift_batches: list
    final_pool: list
    scored_steps: int
    labels: np.ndarray | None = None
    config: PipelineConfig | None = None

    @property
    def s_final(self) -> np.ndarray:
        return np.concatenate([b.s_final for b in self.batches])

    @property
    def predictions(self) -> np.ndarray:
        return np.concatenate([b.predictions for b in self.batches])

    @property
    def major_updates(self) -> list:
        return [b.batch_index for b in self.batches if b.update == "major"]

    def summary(self) -> dict:
        return {
            "auc": self.auc,
            "adt_ms": self.adt_ms,
            "drift_batches": self.drift_batches,
            "major_updates": self.major_updates,
            "scored_steps": self.scored_steps,
            "n_batches": len(self.batches),
            "alarms": sum(b.alarm for b in self.batches),
            "final_pool": self.final_pool,
            "config": asdict(self.config) if self.config is not None else None,
        }


class _PrequentialGuard:
    """Asserts that each batch is scored before any model learns from it."""

    def __init__(self):
        self.batch = None
        self.scored = False

    def begin(self, t):
        self.batch, self.scored = t, False

    def mark_scored(self, t):
        if self.batch != t or self.scored:
            raise PipelineError(t, "score_pool must run exactly once per batch")
        self.scored = True

    def check_update(self, t):
        if self.batch != t or not self.scored:
            raise PipelineError(t, "model update before the batch was scored")


def _selection_partition(mode, communities: Partition, nodes) -> Partition:
    """Partition used for representative selection under an ablation mode."""
    t, res = communities.batch_index, communities.resolution
    if mode in ("single_community", "single_best"):
        return Partition.whole(nodes, t, res)
    if mode == "average_ensemble":
        return Partition.singletons(nodes, t, res)
    return communities


def _check(cond, t, message):
    if not cond:
        raise PipelineError(t, message)


def run(stream: LabeledStream, arch_set, config: PipelineConfig | None = None) -> RunReport:
    """Process a stream batch by batch; the first batch only trains the pool."""
    cfg = config or PipelineConfig()
    arch_set = list(arch_set)
    if len(arch_set) < 2:
        raise ValueError("need at least two architecture specs")
    if len(stream) < 2 * cfg.batch_size:
        raise ValueError(f"stream of length {len(stream)} is shorter than two batches")
    batches = batch_iter(stream, cfg.batch_size)
    capacity = cfg.capacity or default_capacity(len(arch_set))
    if capacity < len(arch_set):
        raise ValueError("capacity is smaller than the architecture set")

    scaler = RunningStandardizer(stream.dimension)
    b0 = batches[0]
    scaler.update(b0.values)
    pool = ModelPool(capacity)
    x0 = scaler.transform(b0.values)
    pool.add(instantiate_and_train(arch_set, b0.with_values(x0), cfg.seed))
    lookback = max(m.detector.warmup for m in pool)
    recent = x0[-lookback:] if lookback else x0[:0]
    ledger = PoolLedger(gamma=cfg.gamma)
    ledger.register(pool.ids)

    guard = _PrequentialGuard()
    history = ScoreHistory(cfg.threshold_window)
    prev_rank = prev_part = None
    results = []
    for raw in batches[1:]:
        t = raw.batch_index
        tic = time.perf_counter()
        batch = raw.with_values(scaler.transform(raw.values))
        scaler.update(raw.values)

        guard.begin(t)
        scores = score_pool(pool, batch)
        guard.mark_scored(t)

        graph = build_graph(spearman_corr(scores))
        pos_graph = positive_view(graph)
        communities = louvain(pos_graph, resolution=cfg.resolution, seed=cfg.seed)
        partition = _selection_partition(cfg.mode, communities, graph.nodes)
        partition.validate(graph.nodes)
        pseudo = pseudo_ground_truth(scores)
        reps = select_representatives(graph, partition, scores, pseudo, cfg.alpha, cfg.damping)
        final = ensemble(reps, scores)

        rank = centrality_ranking(graph, cfg.damping)
        drift = graph_drift(prev_rank, rank, prev_part, communities, cfg.beta, cfg.theta_drift)
        _check(all(0.0 <= v <= 1.0 for v in (drift.d_cent, drift.d_comm, drift.combined)),
               t, "drift score out of range")
        forced = bool(cfg.force_drift_every and t % cfg.force_drift_every == 0)

        existing = pool.ids
        guard.check_update(t)
        snapshot = None
        if drift.drifted or forced:
            pool, ledger, outcome = major_update(pool, ledger, arch_set, batch, cfg.seed,
                                                 context=recent)
            _check(all(c == 0 for c in ledger.rep_counts.values()), t, "counters not reset")
            _check(not set(outcome.pruned) & set(outcome.added), t, "newcomer pruned")
            snapshot = ledger.snapshot()
        else:
            record_representatives(ledger, reps)
            outcome = minor_update(pool, reps, batch)
        _check(len(pool) <= capacity, t, "pool exceeds capacity")
        for m in pool:
            if m.model_id in existing:
                m.detector.observe(batch.values)
        if lookback:
            recent = np.concatenate([recent, batch.values])[-lookback:]

        preds = threshold(final.scores, cfg.threshold_policy, cfg.threshold_params, history)
        elapsed = time.perf_counter() - tic
        _check(preds.size == len(raw), t, "prediction length mismatch")

        results.append(BatchResult(
            batch_index=t, start=raw.start, s_final=final.scores, predictions=preds,
            drift=drift, representatives=reps.ids, combined_scores=reps.combined_scores,
            partition_sizes=partition.sizes, community_sizes=communities.sizes,
            update=outcome.kind, pruned=outcome.pruned,
            added=outcome.added, pool_size=len(pool), elapsed=elapsed, forced_drift=forced,
            short_term=outcome.short_term, ledger=snapshot))
        prev_rank, prev_part = rank, communities

    scored = sum(len(b.s_final) for b in results)
    labels = None
    auc = None
    if stream.labels is not None:
        stop = results[-1].start + len(results[-1].s_final)
        labels = np.asarray(stream.labels[b0.start + len(b0):stop])
        auc = auc_metric(np.concatenate([b.s_final for b in results]), labels)
    final_pool = [{"id": m.model_id, "spec": m.spec.to_line(), "birth_batch": m.birth_batch,
                   "long_term": ledger.long_term.get(m.model_id)} for m in pool]
    return RunReport(
        batches=results, auc=auc, adt_ms=adt_metric([b.elapsed for b in results], scored),
        drift_batches=[b.batch_index for b in results if b.drift.drifted],
        final_pool=final_pool, scored_steps=scored, labels=labels, config=cfg)


def individual_aucs(stream: LabeledStream, arch_set, config: PipelineConfig | None = None) -> dict:
    """Stream AUC of each architecture run alone, test-then-train on every batch."""
    cfg = config or PipelineConfig()
    batches = batch_iter(stream, cfg.batch_size)
    scaler = RunningStandardizer(stream.dimension)
    scaler.update(batches[0].values)
    b0 = batches[0].with_values(scaler.transform(batches[0].values))
    models = instantiate_and_train(list(arch_set), b0, cfg.seed)
    rows = [[] for _ in models]
    for raw in batches[1:]:
        x = scaler.transform(raw.values)
        scaler.update(raw.values)
        for row, m in zip(rows, models):
            row.append(m.detector.score(x))
            m.detector.update(x)
            m.detector.observe(x)
    labels = np.concatenate([b.labels for b in batches[1:]])
    return {spec.to_line(): auc_metric(np.concatenate(row), labels)
            for spec, row in zip(arch_set, rows)}


def parse_arch_lines(lines) -> list[ArchitectureSpec]:
    return [ArchitectureSpec.from_line(ln) for ln in lines]
