"""Contribution bookkeeping and major/minor pool updates."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

from .community import RepresentativeSet
from .detectors import ModelPool, instantiate_and_train, update_model
from .stream import Batch

log = logging.getLogger(__name__)


@dataclass
class PoolLedger:
    """Representative counts since the last drift and long-term scores.

    A long-term score of ``None`` means undefined: the model joined at the
    last drift (or at initialisation) and has no track record yet.
    """

    gamma: float = 0.5
    rep_counts: dict = field(default_factory=dict)
    long_term: dict = field(default_factory=dict)
    last_drift_batch: int = 0

    def register(self, ids) -> None:
        for m in ids:
            self.rep_counts[m] = 0
            self.long_term[m] = None

    def drop(self, ids) -> None:
        for m in ids:
            self.rep_counts.pop(m, None)
            self.long_term.pop(m, None)

    def snapshot(self) -> dict:
        return {"counts": {str(k): v for k, v in sorted(self.rep_counts.items())},
                "long_term": {str(k): v for k, v in sorted(self.long_term.items())}}


@dataclass
class UpdateOutcome:
    kind: str
    pruned: list = field(default_factory=list)
    added: list = field(default_factory=list)
    trained: list = field(default_factory=list)
    short_term: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("major", "minor"):
            raise ValueError(f"unknown update kind {self.kind!r}")


def default_capacity(arch_count: int) -> int:
    return math.ceil(2.5 * arch_count)


def record_representatives(ledger: PoolLedger, reps: RepresentativeSet) -> PoolLedger:
    ids = reps.ids
    if not ids:
        raise ValueError("empty representative set")
    unknown = [m for m in ids if m not in ledger.rep_counts]
    if unknown:
        raise KeyError(f"representatives {unknown} are not pool members")
    for m in ids:
        ledger.rep_counts[m] += 1
    return ledger


def short_term_scores(ledger: PoolLedger) -> dict:
    """Share of representative selections per model; uniform when nothing was counted."""
    total = sum(ledger.rep_counts.values())
    if total == 0:
        n = len(ledger.rep_counts)
        return {m: 1.0 / n for m in ledger.rep_counts}
    return {m: c / total for m, c in ledger.rep_counts.items()}


def update_long_term(ledger: PoolLedger, cs: dict, newcomers_last_drift=None) -> PoolLedger:
    """EMA of short-term scores; undefined entries (and ``newcomers_last_drift``)
    are initialised to their short-term score. Counters are reset."""
    missing = set(ledger.long_term) - set(cs)
    if missing:
        raise KeyError(f"short-term scores missing for {sorted(missing)}")
    fresh = set(newcomers_last_drift or ())
    g = ledger.gamma
    for m in ledger.long_term:
        prev = ledger.long_term[m]
        if prev is None or m in fresh:
            ledger.long_term[m] = cs[m]
        else:
            ledger.long_term[m] = g * cs[m] + (1.0 - g) * prev
    for m in ledger.rep_counts:
        ledger.rep_counts[m] = 0
    return ledger


def n_exceed(pool_size: int, arch_count: int, capacity: int) -> int:
    return max(0, pool_size + arch_count - capacity)


def prune(pool: ModelPool, ledger: PoolLedger, count: int):
    """Drop the ``count`` models with the lowest defined long-term score.

    Models with an undefined score are never pruned. Returns the pool and
    the pruned ids; fewer than ``count`` are pruned if not enough models
    are eligible.
    """
    eligible = sorted((cs, m) for m, cs in ledger.long_term.items() if cs is not None)
    if count > len(eligible):
        log.info("prune: %d requested, only %d eligible", count, len(eligible))
    victims = sorted(m for _, m in eligible[:max(count, 0)])
    pool.remove(victims)
    ledger.drop(victims)
    return pool, victims


def _trim_newcomers(pool: ModelPool, arch_set: list, drop: int) -> list:
    """Remove ``drop`` specs, each time from the family best represented so far."""
    keep = list(arch_set)
    counts = Counter(m.family for m in pool) + Counter(s.architecture_id for s in keep)
    for _ in range(min(drop, len(keep))):
        top = max(counts[s.architecture_id] for s in keep)
        victim = max(i for i, s in enumerate(keep) if counts[s.architecture_id] == top)
        counts[keep[victim].architecture_id] -= 1
        del keep[victim]
    return keep


def major_update(pool: ModelPool, ledger: PoolLedger, arch_set, batch: Batch, seed: int,
                 context=None):
    """Drift response: score bookkeeping, pruning, retraining, and new models.

    ``context`` (rows preceding the batch) lets newcomers warm up on short batches.
    """
    arch_set = list(arch_set)
    cs = short_term_scores(ledger)
    update_long_term(ledger, cs)
    need = n_exceed(len(pool), len(arch_set), pool.capacity)
    pool, pruned = prune(pool, ledger, need)
    if len(pruned) < need:
        arch_set = _trim_newcomers(pool, arch_set, need - len(pruned))
    survivors = pool.ids
    for m in pool:
        update_model(m, batch)
    newcomers = instantiate_and_train(arch_set, batch, seed, first_id=pool.next_id,
                                      context=context)
    pool.add(newcomers)
    ledger.register([m.model_id for m in newcomers])
    ledger.last_drift_batch = batch.batch_index
    outcome = UpdateOutcome("major", pruned=pruned, added=[m.model_id for m in newcomers],
                            trained=survivors, short_term=cs)
    return pool, ledger, outcome


def minor_update(pool: ModelPool, reps: RepresentativeSet, batch: Batch) -> UpdateOutcome:
    ids = reps.ids
    for m in ids:
        update_model(pool.get(m), batch)
    return UpdateOutcome("minor", trained=ids)
