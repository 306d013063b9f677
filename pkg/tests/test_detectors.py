import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolgraph.detectors import (REGISTRY, ArchitectureSpec, DetectorError, ModelInstance,
                                 ModelPool, builtin_arch_set, dump_arch_set,
                                 instantiate_and_train, model_rng, parse_arch_set, score_pool)
from poolgraph.stream import Batch, synth_stream

ONE_OF_EACH = [
    ArchitectureSpec("loda", (("window", 4), ("n_projections", 40), ("n_bins", 16))),
    ArchitectureSpec("zscore", (("span", 64.0), ("order", 1))),
    ArchitectureSpec("ar", (("order", 4),)),
    ArchitectureSpec("pca", (("window", 8), ("n_components", 2))),
    ArchitectureSpec("knn", (("window", 4), ("k", 5))),
]


def sine_rows(n, seed=0, dim=1, start=0):
    rng = np.random.default_rng(seed)
    t = np.arange(start, start + n)[:, None]
    return np.sin(2 * np.pi * t / 50.0 + np.arange(dim)) + 0.2 * rng.standard_normal((n, dim))


def fitted(spec, X, seed=0, dim=1):
    return spec.build(dim, model_rng(seed, 0)).fit(X)


# -- architecture sets ------------------------------------------------------


def test_builtin_arch_set_shape_and_determinism():
    a = builtin_arch_set(7)
    assert len(a) == 12
    assert len({s.architecture_id for s in a}) == 5
    assert a == builtin_arch_set(7)
    for s in a:
        assert REGISTRY[s.architecture_id].validate(s.params) == s.params
    assert any(builtin_arch_set(k) != a for k in range(8))


def test_arch_line_round_trip():
    specs = builtin_arch_set(3)
    assert parse_arch_set(dump_arch_set(specs)) == specs
    assert parse_arch_set("# comment\n\nar order=2  # trailing\n") == [
        ArchitectureSpec("ar", (("order", 2),))]


@pytest.mark.parametrize("line", ["forest depth=3", "ar order=zero", "ar bogus=1", "ar order",
                                  "zscore order=2", "loda n_bins=1"])
def test_bad_arch_lines(line):
    with pytest.raises(DetectorError):
        parse_arch_set(line)


# -- training and scoring ---------------------------------------------------


def test_instantiate_twelve_distinct_ids():
    b0 = Batch(0, 0, sine_rows(512))
    models = instantiate_and_train(builtin_arch_set(1), b0, seed=5)
    assert [m.model_id for m in models] == list(range(12))
    later = instantiate_and_train(builtin_arch_set(1), b0, seed=5, first_id=40)
    assert [m.model_id for m in later] == list(range(40, 52))


def test_same_seed_same_state():
    b0 = Batch(0, 0, sine_rows(512))
    b1 = sine_rows(300, seed=1, start=512)
    first = instantiate_and_train(builtin_arch_set(2), b0, seed=9)
    second = instantiate_and_train(builtin_arch_set(2), b0, seed=9)
    for m1, m2 in zip(first, second):
        assert m1.detector.digest() == m2.detector.digest()
        assert np.array_equal(m1.detector.score(b1), m2.detector.score(b1))


def test_model_rng_depends_on_both_seeds():
    draws = {(s, m): model_rng(s, m).random() for s in (0, 1) for m in (0, 1)}
    assert len(set(draws.values())) == 4
    assert model_rng(3, 4).random() == model_rng(3, 4).random()


def test_short_batch_rejected_for_long_window():
    spec = ArchitectureSpec("loda", (("window", 50),))
    with pytest.raises(DetectorError, match="warm-up"):
        spec.build(1, model_rng(0, 0)).fit(np.zeros((3, 1)))
    # preceding rows supplied as context make the same batch acceptable
    det = spec.build(1, model_rng(0, 0)).fit(np.zeros((3, 1)) + 0.5, context=sine_rows(60))
    assert det.score(np.zeros((3, 1))).shape == (3,)


def test_score_pool_shape():
    b0 = Batch(0, 0, sine_rows(512))
    pool = ModelPool(30)
    pool.add(instantiate_and_train(builtin_arch_set(0), b0, seed=0))
    s = score_pool(pool, Batch(1, 512, sine_rows(512, seed=1, start=512)))
    assert s.matrix.shape == (12, 512)
    assert s.model_ids == list(range(12))


def test_zscore_definition():
    det = fitted(ArchitectureSpec("zscore", (("order", 0),)), np.array([[-1.0], [1.0]] * 20))
    assert det.mean == pytest.approx([0.0]) and det.var == pytest.approx([1.0])
    assert det.score(np.array([[4.0]]))[0] == pytest.approx(4.0)


def test_ar_constant_residual_is_zero():
    const = np.full((200, 1), 5.0)
    det = fitted(ArchitectureSpec("ar", (("order", 4),)), const)
    assert np.all(np.abs(det.score(const)) < 1e-3)


@pytest.mark.parametrize("spec", ONE_OF_EACH, ids=lambda s: s.architecture_id)
def test_update_with_empty_batch_is_noop(spec):
    det = fitted(spec, sine_rows(300))
    before = det.digest()
    det.update(np.empty((0, 1)))
    assert det.digest() == before


def test_zscore_mean_moves_toward_new_level():
    det = fitted(ArchitectureSpec("zscore", (("span", 64.0),)), sine_rows(300))
    m0 = det.mean[0]
    det.update(np.full((50, 1), 10.0))
    assert m0 < det.mean[0] < 10.0


@pytest.mark.parametrize("spec", ONE_OF_EACH, ids=lambda s: s.architecture_id)
def test_update_does_not_hurt_in_regime(spec):
    """Training on more data from the same regime should not raise held-out
    scores, averaged over 20 seeded streams."""
    pre, post = [], []
    for seed in range(20):
        x = sine_rows(1600, seed=seed)
        det = fitted(spec, x[:100], seed=seed)
        held = x[1100:]
        pre.append(det.score(held).mean())
        det.update(x[100:1100])
        post.append(det.score(held).mean())
    assert np.mean(post) <= np.mean(pre)


@pytest.mark.parametrize("spec", ONE_OF_EACH, ids=lambda s: s.architecture_id)
def test_context_makes_scores_batch_size_invariant(spec):
    x = sine_rows(700, seed=3)
    runs = []
    for size in (50, 100):
        det = fitted(spec, x[:100])
        out = []
        for k in range(100, 700, size):
            chunk = x[k:k + size]
            out.append(det.score(chunk))
            det.observe(chunk)
        runs.append(np.concatenate(out))
    assert np.allclose(runs[0], runs[1], rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(ONE_OF_EACH), st.floats(8.0, 30.0), st.floats(1.01, 4.0),
       st.integers(0, 1000))
def test_larger_spike_never_scores_lower(spec, base, factor, seed):
    x = sine_rows(400, seed=seed)
    det = fitted(spec, x[:300], seed=seed)
    batch = x[300:].copy()
    scores = []
    for mag in (base, base * factor):
        b = batch.copy()
        b[50] += mag
        scores.append(det.score(b)[50])
    assert scores[1] >= scores[0] - 1e-9


def test_multivariate_scoring():
    x = sine_rows(400, dim=3)
    for spec in ONE_OF_EACH:
        det = fitted(spec, x[:200], dim=3)
        assert det.score(x[200:]).shape == (200,)
        with pytest.raises(DetectorError):
            det.score(x[200:, :2])


# -- pool -------------------------------------------------------------------


def test_pool_capacity_and_duplicates():
    b0 = Batch(0, 0, sine_rows(200))
    models = instantiate_and_train(ONE_OF_EACH, b0, seed=0)
    pool = ModelPool(4)
    with pytest.raises(DetectorError, match="capacity"):
        pool.add(models)
    pool = ModelPool(10)
    pool.add(models[:2])
    with pytest.raises(DetectorError, match="duplicate"):
        pool.add([models[0]])
    pool.add([ModelInstance(7, models[2].spec, models[2].detector)])
    assert pool.ids == [0, 1, 7] and pool.next_id == 8
    pool.remove([1])
    assert pool.ids == [0, 7]


def test_synth_fixture_detectors_see_spikes():
    s = synth_stream(length=3000, seed=1)
    for spec in ONE_OF_EACH:
        det = fitted(spec, s.values[:1000])
        sc = det.score(s.values[1000:])
        lab = s.labels[1000:]
        assert sc[lab == 1].mean() > sc[lab == 0].mean()
