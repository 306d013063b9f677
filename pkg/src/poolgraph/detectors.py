"""Online anomaly detectors and the model pool they live in.

Every detector follows the same contract:

* ``fit(X)``     initial training on a batch (no prior context);
* ``score(X)``   one score per row of ``X``, higher is more anomalous; pure;
* ``update(X)``  incremental training on a batch, using the stored context;
* ``observe(X)`` advance the rolling context that windowed detectors need so
  that the first rows of the next batch are scored against real history.

Learned parameters and rolling context are kept apart so that a model which
is not retrained on a batch still sees the stream continuously.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .stream import Batch


class DetectorError(ValueError):
    pass


# --------------------------------------------------------------------------
# base class


class Detector:
    family = "base"
    #: hyperparameter name -> (type, default)
    schema: dict = {}

    def __init__(self, dim: int, rng: np.random.Generator, **hyperparams):
        self.dim = int(dim)
        self.rng = rng
        self.hp = self.validate(hyperparams)
        self.context = np.empty((0, self.dim))
        self.trained = False

    @classmethod
    def validate(cls, hyperparams: dict) -> dict:
        unknown = set(hyperparams) - set(cls.schema)
        if unknown:
            raise DetectorError(f"{cls.family}: unknown hyperparameters {sorted(unknown)}")
        out = {}
        for name, (typ, default) in cls.schema.items():
            value = hyperparams.get(name, default)
            try:
                out[name] = typ(value)
            except (TypeError, ValueError):
                raise DetectorError(f"{cls.family}: bad value {value!r} for {name}") from None
        cls._check(out)
        return out

    @staticmethod
    def _check(hp: dict) -> None:
        pass

    @property
    def warmup(self) -> int:
        """Rows of history the detector looks back on."""
        return 0

    # context helpers -----------------------------------------------------

    def _check_dim(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DetectorError(
                f"{self.family}: expected {self.dim}-dimensional rows, got shape {X.shape}")
        return X

    def _history(self, X: np.ndarray, lookback: int) -> np.ndarray:
        """``lookback`` rows of context (edge-padded if short) followed by X."""
        ctx = self.context[-lookback:] if lookback else self.context[:0]
        missing = lookback - ctx.shape[0]
        if missing > 0:
            first = ctx[:1] if ctx.shape[0] else X[:1]
            ctx = np.concatenate([np.repeat(first, missing, axis=0), ctx])
        return np.concatenate([ctx, X])

    def _windows(self, X: np.ndarray, window: int) -> np.ndarray:
        """Flattened trailing windows ending at each row of X, shape (n, window*dim)."""
        full = self._history(X, window - 1)
        win = sliding_window_view(full, (window, self.dim))[:, 0]
        return win.reshape(win.shape[0], window * self.dim)

    def observe(self, X) -> None:
        X = self._check_dim(X)
        keep = self.warmup
        if keep == 0:
            return
        self.context = np.concatenate([self.context, X])[-keep:].copy()

    # training ------------------------------------------------------------

    def fit(self, X, context=None) -> "Detector":
        """Initial training on ``X``; ``context`` optionally supplies the rows
        that preceded it in the stream."""
        X = self._check_dim(X)
        ctx = np.empty((0, self.dim)) if context is None else self._check_dim(context)
        if ctx.shape[0] + X.shape[0] < self.warmup + 1:
            raise DetectorError(
                f"{self.family}: {ctx.shape[0] + X.shape[0]} points available, "
                f"warm-up needs {self.warmup + 1}")
        self.context = ctx[-self.warmup:] if self.warmup else ctx[:0]
        self._fit(X)
        self.trained = True
        self.observe(X)
        return self

    def update(self, X) -> None:
        X = self._check_dim(X)
        if X.shape[0] == 0:
            return
        if not self.trained:
            raise DetectorError(f"{self.family}: update before fit")
        self._update(X)

    def score(self, X) -> np.ndarray:
        X = self._check_dim(X)
        if not self.trained:
            raise DetectorError(f"{self.family}: score before fit")
        if X.shape[0] == 0:
            return np.empty(0)
        return self._score(X)

    def params(self) -> dict[str, np.ndarray]:
        """Learned parameters, used for state digests."""
        raise NotImplementedError

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, value in sorted(self.params().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(value, dtype=float).tobytes())
        return h.hexdigest()

    def _fit(self, X):
        raise NotImplementedError

    def _update(self, X):
        raise NotImplementedError

    def _score(self, X):
        raise NotImplementedError


# --------------------------------------------------------------------------
# (a) random-projection histograms


class ProjectionHistogram(Detector):
    """LODA-style ensemble of one-dimensional histograms on sparse random
    projections of trailing windows.

    Out-of-range projections get the empty-bin probability plus a penalty
    growing with the distance past the histogram edge, which keeps scores
    monotone for far outliers.
    """

    family = "loda"
    schema = {"n_projections": (int, 50), "n_bins": (int, 20), "window": (int, 1),
              "decay": (float, 0.9)}
    _PSEUDO = 0.5

    @staticmethod
    def _check(hp):
        if hp["n_projections"] < 1 or hp["n_bins"] < 2 or hp["window"] < 1:
            raise DetectorError("loda: n_projections >= 1, n_bins >= 2, window >= 1 required")
        if not 0.0 < hp["decay"] <= 1.0:
            raise DetectorError("loda: decay must lie in (0, 1]")

    @property
    def warmup(self):
        return self.hp["window"] - 1

    def _fit(self, X):
        k, nb, w = self.hp["n_projections"], self.hp["n_bins"], self.hp["window"]
        p = w * self.dim
        proj = self.rng.standard_normal((k, p))
        n_zero = p - int(np.ceil(np.sqrt(p)))
        for i in range(k):
            if n_zero > 0:
                proj[i, self.rng.permutation(p)[:n_zero]] = 0.0
        self.projections = proj
        z = self._windows(X, w) @ proj.T
        lo, hi = z.min(axis=0), z.max(axis=0)
        span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
        self.lo = lo - 0.1 * span
        self.width = 1.2 * span / nb
        self.counts = np.zeros((k, nb))
        self._accumulate(z)

    def _bins(self, z):
        pos = (z - self.lo) / self.width
        return np.floor(pos).astype(np.int64), pos

    def _accumulate(self, z):
        nb = self.hp["n_bins"]
        idx, _ = self._bins(z)
        inside = (idx >= 0) & (idx < nb)
        rows = np.broadcast_to(np.arange(z.shape[1]), z.shape)
        np.add.at(self.counts, (rows[inside], idx[inside]), 1.0)

    def _update(self, X):
        z = self._windows(X, self.hp["window"]) @ self.projections.T
        self.counts *= self.hp["decay"]
        self._accumulate(z)

    def _score(self, X):
        nb = self.hp["n_bins"]
        z = self._windows(X, self.hp["window"]) @ self.projections.T
        idx, pos = self._bins(z)
        total = self.counts.sum(axis=1) + (nb + 1) * self._PSEUDO
        clipped = np.clip(idx, 0, nb - 1)
        cnt = self.counts[np.arange(z.shape[1]), clipped]
        inside = (idx >= 0) & (idx < nb)
        cnt = np.where(inside, cnt, 0.0)
        nll = -np.log((cnt + self._PSEUDO) / total)
        beyond = np.where(pos < 0, -pos, np.where(pos > nb, pos - nb, 0.0))
        nll = nll + np.log1p(beyond)
        return nll.mean(axis=1)

    def params(self):
        return {"projections": self.projections, "lo": self.lo, "width": self.width,
                "counts": self.counts}


# --------------------------------------------------------------------------
# (b) running z-score


class RunningZScore(Detector):
    """Exponentially weighted z-score, max over dimensions.

    ``order=1`` scores first differences instead of levels.
    """

    family = "zscore"
    schema = {"span": (float, 256.0), "order": (int, 0)}

    @staticmethod
    def _check(hp):
        if hp["span"] < 1.0 or hp["order"] not in (0, 1):
            raise DetectorError("zscore: span >= 1 and order in {0, 1} required")

    @property
    def warmup(self):
        return self.hp["order"]

    def _series(self, X):
        if self.hp["order"] == 0:
            return X
        return np.diff(self._history(X, 1), axis=0)

    def _fit(self, X):
        y = self._series(X)
        self.mean = y.mean(axis=0)
        self.var = y.var(axis=0)

    def _update(self, X):
        y = self._series(X)
        a = 2.0 / (self.hp["span"] + 1.0)
        n = y.shape[0]
        # closed form of n sequential EWMA steps
        w = a * (1.0 - a) ** np.arange(n - 1, -1, -1)
        carry = (1.0 - a) ** n
        second = self.var + self.mean ** 2
        self.mean = carry * self.mean + w @ y
        second = carry * second + w @ (y ** 2)
        self.var = np.maximum(second - self.mean ** 2, 0.0)

    def _score(self, X):
        y = self._series(X)
        std = np.sqrt(np.maximum(self.var, 1e-24))
        return np.max(np.abs(y - self.mean) / std, axis=1)

    def params(self):
        return {"mean": self.mean, "var": self.var}


# --------------------------------------------------------------------------
# (c) autoregressive forecast residual


class ARResidual(Detector):
    """Per-dimension AR(p) one-step forecaster; score is the residual norm.

    Least squares with a small ridge, fitted from decayed sufficient
    statistics so that updates are exact and incremental.
    """

    family = "ar"
    schema = {"order": (int, 8), "forget": (float, 0.5), "ridge": (float, 1e-6)}

    @staticmethod
    def _check(hp):
        if hp["order"] < 1:
            raise DetectorError("ar: order >= 1 required")
        if not 0.0 <= hp["forget"] <= 1.0 or hp["ridge"] <= 0.0:
            raise DetectorError("ar: forget in [0, 1] and ridge > 0 required")

    @property
    def warmup(self):
        return self.hp["order"]

    def _design(self, X):
        p = self.hp["order"]
        full = self._history(X, p)
        lags = sliding_window_view(full, p, axis=0)[:-1]  # (n, d, p)
        # per dimension: [1, x(t-1), ..., x(t-p)]
        design = np.concatenate([np.ones(lags.shape[:2] + (1,)), lags[..., ::-1]], axis=2)
        return design.transpose(1, 0, 2), X.T  # (d, n, p+1), (d, n)

    def _accumulate(self, X, keep):
        A, y = self._design(X)
        self.xtx = keep * self.xtx + np.einsum("dni,dnj->dij", A, A)
        self.xty = keep * self.xty + np.einsum("dni,dn->di", A, y)
        eye = np.eye(self.xtx.shape[1]) * self.hp["ridge"]
        self.coef = np.linalg.solve(self.xtx + eye, self.xty[..., None])[..., 0]

    def _fit(self, X):
        q = self.hp["order"] + 1
        self.xtx = np.zeros((self.dim, q, q))
        self.xty = np.zeros((self.dim, q))
        self._accumulate(X, 0.0)

    def _update(self, X):
        self._accumulate(X, self.hp["forget"])

    def _score(self, X):
        A, y = self._design(X)
        pred = np.einsum("dni,di->dn", A, self.coef)
        return np.sqrt(((y - pred) ** 2).sum(axis=0))

    def params(self):
        return {"xtx": self.xtx, "xty": self.xty, "coef": self.coef}


# --------------------------------------------------------------------------
# (d) incremental PCA reconstruction error


class PCAReconstruction(Detector):
    """Squared reconstruction error of trailing windows against the leading
    principal subspace of an exponentially weighted covariance."""

    family = "pca"
    schema = {"window": (int, 8), "n_components": (int, 2), "forget": (float, 0.5)}

    @staticmethod
    def _check(hp):
        if hp["window"] < 1 or hp["n_components"] < 1:
            raise DetectorError("pca: window >= 1 and n_components >= 1 required")
        if not 0.0 <= hp["forget"] <= 1.0:
            raise DetectorError("pca: forget in [0, 1] required")

    def __init__(self, dim, rng, **hyperparams):
        super().__init__(dim, rng, **hyperparams)
        if self.hp["n_components"] >= self.hp["window"] * self.dim:
            raise DetectorError("pca: n_components must be below window * dim")

    @property
    def warmup(self):
        return self.hp["window"] - 1

    def _accumulate(self, X, keep):
        Z = self._windows(X, self.hp["window"])
        self.weight = keep * self.weight + Z.shape[0]
        self.sum = keep * self.sum + Z.sum(axis=0)
        self.outer = keep * self.outer + Z.T @ Z
        self.mean = self.sum / self.weight
        cov = self.outer / self.weight - np.outer(self.mean, self.mean)
        _, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
        self.components = vecs[:, ::-1][:, : self.hp["n_components"]]

    def _fit(self, X):
        p = self.hp["window"] * self.dim
        self.weight = 0.0
        self.sum = np.zeros(p)
        self.outer = np.zeros((p, p))
        self._accumulate(X, 0.0)

    def _update(self, X):
        self._accumulate(X, self.hp["forget"])

    def _score(self, X):
        Z = self._windows(X, self.hp["window"]) - self.mean
        resid = Z - (Z @ self.components) @ self.components.T
        return np.einsum("ij,ij->i", resid, resid)

    def params(self):
        return {"weight": np.array([self.weight]), "sum": self.sum, "outer": self.outer}


# --------------------------------------------------------------------------
# (e) sliding-window kNN distance


class WindowKNN(Detector):
    """Mean Euclidean distance from a trailing window to its k nearest
    neighbours in a bounded FIFO reservoir of past windows."""

    family = "knn"
    schema = {"window": (int, 4), "k": (int, 5), "capacity": (int, 2048)}

    @staticmethod
    def _check(hp):
        if hp["window"] < 1 or hp["k"] < 1 or hp["capacity"] < hp["k"]:
            raise DetectorError("knn: window >= 1, k >= 1 and capacity >= k required")

    @property
    def warmup(self):
        return self.hp["window"] - 1

    def _store(self, Z):
        self.reservoir = np.concatenate([self.reservoir, Z])[-self.hp["capacity"]:].copy()
        self.sqnorm = np.einsum("ij,ij->i", self.reservoir, self.reservoir)

    def _fit(self, X):
        Z = self._windows(X, self.hp["window"])
        if Z.shape[0] <= self.hp["k"]:
            raise DetectorError("knn: fewer training windows than k + 1")
        self.reservoir = np.empty((0, Z.shape[1]))
        self._store(Z)

    def _update(self, X):
        self._store(self._windows(X, self.hp["window"]))

    def _score(self, X):
        Z = self._windows(X, self.hp["window"])
        k = min(self.hp["k"], self.reservoir.shape[0])
        d2 = np.einsum("ij,ij->i", Z, Z)[:, None] + self.sqnorm[None, :] - 2.0 * Z @ self.reservoir.T
        near = np.partition(np.maximum(d2, 0.0), k - 1, axis=1)[:, :k]
        return np.sqrt(near).mean(axis=1)

    def params(self):
        return {"reservoir": self.reservoir}


REGISTRY: dict[str, type[Detector]] = {
    cls.family: cls
    for cls in (ProjectionHistogram, RunningZScore, ARResidual, PCAReconstruction, WindowKNN)
}


# --------------------------------------------------------------------------
# specs, instances, pools


@dataclass(frozen=True)
class ArchitectureSpec:
    """An architecture id plus a hyperparameter configuration."""

    architecture_id: str
    hyperparams: tuple = ()

    def __post_init__(self):
        if self.architecture_id not in REGISTRY:
            raise DetectorError(f"unknown architecture {self.architecture_id!r}")
        hp = REGISTRY[self.architecture_id].validate(dict(self.hyperparams))
        object.__setattr__(self, "hyperparams", tuple(sorted(hp.items())))

    @property
    def params(self) -> dict:
        return dict(self.hyperparams)

    def to_line(self) -> str:
        return " ".join([self.architecture_id] + [f"{k}={v}" for k, v in self.hyperparams])

    @classmethod
    def from_line(cls, line: str) -> "ArchitectureSpec":
        family, *items = line.split()
        hp = {}
        for item in items:
            key, sep, value = item.partition("=")
            if not sep:
                raise DetectorError(f"bad hyperparameter token {item!r}")
            hp[key] = value
        return cls(family, tuple(hp.items()))

    def build(self, dim: int, rng: np.random.Generator) -> Detector:
        return REGISTRY[self.architecture_id](dim, rng, **self.params)


def dump_arch_set(specs: Iterable[ArchitectureSpec]) -> str:
    return "".join(s.to_line() + "\n" for s in specs)


def parse_arch_set(text: str) -> list[ArchitectureSpec]:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    return [ArchitectureSpec.from_line(ln) for ln in lines if ln]


#: candidate hyperparameters per family; builtin_arch_set draws from these
_GRIDS = {
    "loda": [dict(window=w, n_projections=np_, n_bins=nb)
             for w in (1, 4, 8, 16) for np_ in (50, 100) for nb in (16, 32)],
    "zscore": [dict(span=s, order=o) for s in (64.0, 256.0, 1024.0) for o in (0, 1)],
    "ar": [dict(order=p) for p in (2, 4, 8, 16, 32)],
    "pca": [dict(window=w, n_components=c) for w in (8, 16) for c in (2, 3)],
    "knn": [dict(window=w, k=k) for w in (4, 8, 16) for k in (5, 10)],
}
_PER_FAMILY = {"loda": 3, "zscore": 2, "ar": 3, "pca": 2, "knn": 2}


def builtin_arch_set(seed: int = 0) -> list[ArchitectureSpec]:
    """Twelve specs over the five built-in families.

    Hyperparameter variants are drawn without replacement from fixed
    per-family grids, so different seeds give different (but always valid)
    configurations.
    """
    rng = np.random.default_rng([seed, 0xA5E7])
    specs = []
    for family, count in _PER_FAMILY.items():
        grid = _GRIDS[family]
        for i in sorted(rng.choice(len(grid), size=count, replace=False)):
            specs.append(ArchitectureSpec(family, tuple(grid[i].items())))
    return specs


def model_rng(run_seed: int, model_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(run_seed), int(model_id)]))


@dataclass
class ModelInstance:
    model_id: int
    spec: ArchitectureSpec
    detector: Detector
    birth_batch: int = 0

    @property
    def family(self) -> str:
        return self.spec.architecture_id


@dataclass
class ModelPool:
    capacity: int
    models: list = field(default_factory=list)
    next_id: int = 0

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    @property
    def ids(self) -> list[int]:
        return [m.model_id for m in self.models]

    def get(self, model_id: int) -> ModelInstance:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise KeyError(model_id)

    def add(self, models: Iterable[ModelInstance]) -> None:
        for m in models:
            if m.model_id in self.ids:
                raise DetectorError(f"duplicate model id {m.model_id}")
            self.models.append(m)
            self.next_id = max(self.next_id, m.model_id + 1)
        if len(self.models) > self.capacity:
            raise DetectorError(f"pool size {len(self.models)} exceeds capacity {self.capacity}")
        self.models.sort(key=lambda m: m.model_id)

    def remove(self, ids: Iterable[int]) -> None:
        drop = set(ids)
        self.models = [m for m in self.models if m.model_id not in drop]


@dataclass
class ScoreSet:
    batch_index: int
    model_ids: list
    matrix: np.ndarray  # (M, n), row order follows model_ids

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.model_ids):
            raise ValueError("one score row per model id required")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("score set contains non-finite scores")

    def __len__(self):
        return len(self.model_ids)

    @property
    def n_steps(self) -> int:
        return self.matrix.shape[1]

    def vector(self, model_id: int) -> np.ndarray:
        return self.matrix[self.model_ids.index(model_id)]

    @property
    def vectors(self) -> dict:
        return {mid: self.matrix[i] for i, mid in enumerate(self.model_ids)}


def instantiate_and_train(arch_set, batch: Batch, seed: int, first_id: int = 0,
                          birth_batch: int | None = None,
                          context: np.ndarray | None = None) -> list[ModelInstance]:
    """Build one model per spec, ids counting up from ``first_id``, trained on ``batch``.

    ``context`` holds stream rows preceding the batch, if any.
    """
    if birth_batch is None:
        birth_batch = batch.batch_index
    models = []
    for offset, spec in enumerate(arch_set):
        mid = first_id + offset
        det = spec.build(batch.dimension, model_rng(seed, mid))
        det.fit(batch.values, context)
        models.append(ModelInstance(mid, spec, det, birth_batch))
    return models


def score_pool(pool: ModelPool, batch: Batch) -> ScoreSet:
    rows = [m.detector.score(batch.values) for m in pool.models]
    return ScoreSet(batch.batch_index, pool.ids, np.vstack(rows))


def update_model(model: ModelInstance, batch: Batch) -> ModelInstance:
    model.detector.update(batch.values)
    return model
