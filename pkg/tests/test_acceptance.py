"""Acceptance criteria, one pass/fail line each in the terminal summary."""

import functools
import itertools
import json
import time

import numpy as np
import pytest

import oracles
from poolgraph.cli import write_run_outputs
from poolgraph.community import Partition, louvain, modularity, pagerank
from poolgraph.detectors import builtin_arch_set
from poolgraph.drift import CentralityRanking, centrality_drift, community_drift
from poolgraph.graph import ModelGraph
from poolgraph.pipeline import PipelineConfig, ablation_mode, individual_aucs, run
from poolgraph.stats import kendall_tau_b, normalized_mutual_info, roc_auc, spearman_matrix
from poolgraph.stream import stationary_std, synth_stream

crit = pytest.mark.criterion
SEEDS = range(10)


@functools.lru_cache(maxsize=None)
def fixture_stream(seed=0, length=20000, drift_spec=None):
    return synth_stream("sinusoid", length, 0.01, drift_spec, seed=seed)


@functools.lru_cache(maxsize=None)
def fixture_run(seed=0, mode="full", length=20000, **changes):
    cfg = ablation_mode(PipelineConfig(seed=seed, **changes), mode)
    return run(fixture_stream(seed, length), builtin_arch_set(seed), cfg)


def labelings(n, k):
    return itertools.product(range(k), repeat=n)


# -- 1 ----------------------------------------------------------------------


@crit(1, "statistic oracles within 1e-9, under 10 s")
def test_statistic_oracles():
    tic = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0

    def check(got, want):
        nonlocal worst
        worst = max(worst, abs(got - want))

    def rank_drift(a, b):
        ids = range(len(a))
        return centrality_drift(CentralityRanking(0, dict(zip(ids, a))),
                                CentralityRanking(1, dict(zip(ids, b))))

    # exhaustive: every permutation up to 7, every weak order up to 4
    for n in range(2, 8):
        ident = list(range(1, n + 1))
        for perm in itertools.permutations(ident):
            check(spearman_matrix(np.vstack([ident, perm]))[0, 1], oracles.spearman(ident, perm))
            tau = oracles.kendall_tau_b(ident, perm)
            check(kendall_tau_b(ident, perm), tau)
            check(rank_drift(ident, perm), (1.0 - tau) / 2.0)
    for n in range(2, 5):
        orders = [list(s) for s in labelings(n, 3)]
        for a in orders:
            for b in orders:
                if len(set(a)) > 1 and len(set(b)) > 1:
                    check(spearman_matrix(np.vstack([a, b]))[0, 1], oracles.spearman(a, b))
                    check(kendall_tau_b(a, b), oracles.kendall_tau_b(a, b))
                check(normalized_mutual_info(a, b), oracles.nmi(a, b))
    # every partition of 8 items against a fixed reference
    ref = [0, 0, 0, 1, 1, 2, 2, 2]
    for blocks in oracles.set_partitions(list(range(8))):
        lab = [0] * 8
        for c, block in enumerate(blocks):
            for i in block:
                lab[i] = c
        check(normalized_mutual_info(ref, lab), oracles.nmi(ref, lab))
        check(community_drift(Partition(0, [tuple(b) for b in blocks]),
                              Partition(1, [(0, 1, 2), (3, 4), (5, 6, 7)])),
              1.0 - oracles.nmi(lab, ref))
    # every labeling up to 8 against tied scores
    for n in range(2, 9):
        scores = [i // 2 for i in range(n)]
        for y in labelings(n, 2):
            if 0 < sum(y) < n:
                check(roc_auc(scores, y), oracles.auc_pairs(scores, y))
                check(roc_auc(scores[::-1], y), oracles.auc_pairs(scores[::-1], y))

    # 200 seeded random cases per statistic
    for _ in range(200):
        n = int(rng.integers(9, 60))
        a, b = rng.integers(0, 8, n).astype(float), rng.normal(size=n).round(1)
        check(spearman_matrix(np.vstack([a, b]))[0, 1], oracles.spearman(a, b))
        check(kendall_tau_b(a, b), oracles.kendall_tau_b(a, b))
        perm = rng.permutation(n) + 1
        check(rank_drift(list(range(1, n + 1)), perm),
              (1.0 - oracles.kendall_tau_b(list(range(n)), perm)) / 2.0)
        la, lb = rng.integers(0, 4, n), rng.integers(0, 5, n)
        check(normalized_mutual_info(la, lb), oracles.nmi(la, lb))
        y = rng.random(n) < 0.3
        y[:2] = [True, False]
        check(roc_auc(b, y.astype(int)), oracles.auc_pairs(b, y.astype(int)))

    elapsed = time.perf_counter() - tic
    print(f"max abs deviation {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-9
    assert elapsed < 10.0


# -- 2 ----------------------------------------------------------------------


def cliques(k, size=5, intra=0.9, inter=0.05):
    n = k * size
    w = np.zeros((n, n))
    for c in range(k):
        w[c * size:(c + 1) * size, c * size:(c + 1) * size] = intra
    for c in range(k - 1):
        a, b = c * size + size - 1, (c + 1) * size
        w[a, b] = w[b, a] = inter
    np.fill_diagonal(w, 0.0)
    return w


def random_connected(rng, n):
    w = np.zeros((n, n))
    mask = np.triu(rng.random((n, n)) < 0.5, 1)
    w[mask] = rng.random(mask.sum())
    perm = rng.permutation(n)
    for a, b in zip(perm[:-1], perm[1:]):
        i, j = min(a, b), max(a, b)
        if w[i, j] == 0.0:
            w[i, j] = rng.uniform(0.05, 1.0)
    return w + w.T


@crit(2, "planted cliques recovered, modularity near optimal, under 30 s")
def test_louvain_planted_partition():
    tic = time.perf_counter()
    for k in (2, 3):
        w = cliques(k)
        for seed in range(50):
            # relabel nodes so recovery cannot lean on id order
            ids = np.random.default_rng(seed).permutation(100)[:5 * k].tolist()
            part = louvain(ModelGraph(0, ids, w), resolution=1.0, seed=seed, shuffle=True)
            want = sorted(tuple(sorted(ids[c * 5:(c + 1) * 5])) for c in range(k))
            assert sorted(part.communities) == want, (k, seed)

    ratios = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 9))
        w = random_connected(rng, n)
        q = modularity(w, louvain(ModelGraph(0, list(range(n)), w)).labels(range(n)))
        best, _ = oracles.best_modularity(w)
        ratios.append(1.0 if q >= best - 1e-9 else q / best)
    ratios = np.array(ratios)
    elapsed = time.perf_counter() - tic
    print(f"mean ratio {ratios.mean():.4f}, min {ratios.min():.4f}, "
          f"{int((ratios < 0.95).sum())}/50 graphs below 0.95, {elapsed:.2f} s")
    assert ratios.mean() >= 0.95
    assert elapsed < 30.0


# -- 3 ----------------------------------------------------------------------


@crit(3, "PageRank sums to one, uniform on K4, path closed form")
def test_pagerank():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 15))
        w = np.triu(rng.random((n, n)) * (rng.random((n, n)) < 0.4), 1)
        pr = pagerank(ModelGraph(0, list(range(n)), w + w.T))
        assert abs(sum(pr.values()) - 1.0) <= 1e-9
    k4 = pagerank(ModelGraph(0, [0, 1, 2, 3], np.ones((4, 4)) - np.eye(4)))
    assert all(abs(v - 0.25) <= 1e-9 for v in k4.values())
    path = np.array([[0.0, 1, 0], [1, 0, 1], [0, 1, 0]])
    pr = pagerank(ModelGraph(0, [0, 1, 2], path))
    end, centre = oracles.path3_pagerank(0.85)
    assert abs(pr[0] - end) <= 1e-6 and abs(pr[2] - end) <= 1e-6 and abs(pr[1] - centre) <= 1e-6


# -- 4 ----------------------------------------------------------------------


@crit(4, "resolution limits equal single_best and average_ensemble bit for bit")
@pytest.mark.parametrize("seed", [0, 1])
def test_resolution_limit_equivalence(seed):
    stream = fixture_stream(seed, 8192)
    arch = builtin_arch_set(seed)
    assert len(arch) == 12
    lo = PipelineConfig(seed=seed, resolution=0.01)
    hi = PipelineConfig(seed=seed, resolution=100.0)
    a, b = run(stream, arch, lo).s_final, run(stream, arch, ablation_mode(lo, "single_best")).s_final
    assert a.tobytes() == b.tobytes()
    a = run(stream, arch, hi).s_final
    b = run(stream, arch, ablation_mode(hi, "average_ensemble")).s_final
    assert a.tobytes() == b.tobytes()


# -- 5 ----------------------------------------------------------------------


@crit(5, "20k stream detection quality, under 60 s")
def test_end_to_end_detection():
    tic = time.perf_counter()
    full = fixture_run(0)
    wall = time.perf_counter() - tic
    avg = fixture_run(0, "average_ensemble")
    single = individual_aucs(fixture_stream(0), builtin_arch_set(0), PipelineConfig(seed=0))
    median = float(np.median(list(single.values())))
    print(f"auc {full.auc:.4f}, median individual {median:.4f}, "
          f"average ensemble {avg.auc:.4f}, {wall:.2f} s")
    assert full.auc >= 0.90
    assert full.auc >= median
    assert full.auc >= avg.auc - 0.02
    assert wall < 60.0


# -- 6 ----------------------------------------------------------------------


@crit(6, "ADT below the average ensemble in at least 8 of 10 seeds")
def test_efficiency_direction():
    wins = []
    for seed in SEEDS:
        full, avg = fixture_run(seed), fixture_run(seed, "average_ensemble")
        wins.append(full.adt_ms < avg.adt_ms)
        print(f"seed {seed}: full {full.adt_ms:.4f} ms, average {avg.adt_ms:.4f} ms")
    assert sum(wins) >= 8


# -- 7 ----------------------------------------------------------------------


@crit(7, "major update within 3 batches of a 5 sigma shift, none at theta 0.999")
def test_drift_responsiveness():
    length, batch = 10000, 512
    shift_at = length // 2
    spec = f"mean-shift@{shift_at}:{5.0 * stationary_std('sinusoid'):.6f}"
    shift_batch = shift_at // batch
    hits, quiet = 0, 0
    for seed in SEEDS:
        stream = fixture_stream(seed, length, spec)
        rep = run(stream, builtin_arch_set(seed), PipelineConfig(seed=seed, theta_drift=0.3))
        hit = any(shift_batch <= t <= shift_batch + 3 for t in rep.major_updates)
        hits += hit
        calm = run(stream, builtin_arch_set(seed), PipelineConfig(seed=seed, theta_drift=0.999))
        quiet += not calm.major_updates
        print(f"seed {seed}: majors {rep.major_updates}, at 0.999 {calm.major_updates}")
    assert hits >= 8
    assert quiet == len(SEEDS)


# -- 8 ----------------------------------------------------------------------


def check_lifecycle(rep, capacity):
    majors = [b for b in rep.batches if b.update == "major"]
    assert majors
    for b in rep.batches:
        assert b.pool_size <= capacity
    for b in majors:
        assert abs(sum(b.short_term.values()) - 1.0) <= 1e-12
        assert not set(b.pruned) & set(b.added)
        assert all(c == 0 for c in b.ledger["counts"].values())
        # newcomers enter with no track record
        assert all(b.ledger["long_term"][str(m)] is None for m in b.added)
    return len(majors)


@crit(8, "pool lifecycle invariants under frequent drift")
@pytest.mark.parametrize("changes", [dict(theta_drift=0.01),
                                     dict(theta_drift=1.0, force_drift_every=5)])
def test_pool_lifecycle(changes):
    seed = 4
    stream = fixture_stream(seed, 10000)
    rep = run(stream, builtin_arch_set(seed), PipelineConfig(seed=seed, **changes))
    n = check_lifecycle(rep, 30)
    if "force_drift_every" in changes:
        assert rep.major_updates == list(range(5, len(rep.batches) + 1, 5))
    print(f"{changes}: {n} major updates over {len(rep.batches)} batches")


# -- 9 ----------------------------------------------------------------------


def strip_elapsed(path):
    out = []
    for line in path.read_text().splitlines():
        rec = json.loads(line)
        rec.pop("elapsed_ms")
        out.append(json.dumps(rec))
    return "\n".join(out).encode()


@crit(9, "identical seed and config give identical batch records")
def test_determinism(tmp_path):
    stream = fixture_stream(3, 8192)
    dirs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        out.mkdir()
        write_run_outputs(run(stream, builtin_arch_set(3), PipelineConfig(seed=3)), stream, out)
        dirs.append(out)
    assert strip_elapsed(dirs[0] / "batches.jsonl") == strip_elapsed(dirs[1] / "batches.jsonl")
    assert (dirs[0] / "scores.csv").read_bytes() == (dirs[1] / "scores.csv").read_bytes()


# -- 10 ---------------------------------------------------------------------


@crit(10, "ADT times scored steps equals summed batch time within 1%")
def test_adt_identity(tmp_path):
    rep = fixture_run(0)
    write_run_outputs(rep, fixture_stream(0), tmp_path)
    total_ms = sum(json.loads(ln)["elapsed_ms"]
                   for ln in (tmp_path / "batches.jsonl").read_text().splitlines())
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["scored_steps"] == 20000 - 512
    assert abs(summary["adt_ms"] * summary["scored_steps"] - total_ms) <= 0.01 * total_ms
