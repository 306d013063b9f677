"""Labeled multivariate streams, batching, and synthetic generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

#: Final partial batches shorter than this are dropped.
MIN_BATCH_LENGTH = 10

GENERATORS = ("sinusoid", "gaussian")


class StreamError(ValueError):
    """Malformed stream input."""


@dataclass(frozen=True)
class TimePoint:
    index: int
    values: np.ndarray
    label: int | None = None


@dataclass(frozen=True)
class Batch:
    """A contiguous slice of a stream.

    ``values`` has shape (n, d). ``start`` is the stream index of the first row.
    """

    batch_index: int
    start: int
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.values.ndim != 2:
            raise StreamError("batch values must be 2-D")
        if len(self) == 0:
            raise StreamError("a batch must contain at least one point")
        if self.labels is not None and self.labels.shape != (len(self),):
            raise StreamError("labels length must match batch length")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self))

    def points(self) -> Iterator[TimePoint]:
        for k, row in enumerate(self.values):
            label = None if self.labels is None else int(self.labels[k])
            yield TimePoint(self.start + k, row, label)

    def with_values(self, values: np.ndarray) -> "Batch":
        return Batch(self.batch_index, self.start, values, self.labels)


@dataclass(frozen=True)
class LabeledStream:
    """An immutable labeled stream of ``L`` points in ``d`` dimensions."""

    values: np.ndarray
    labels: np.ndarray | None = None
    name: str = "stream"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise StreamError("stream values must be 1-D or 2-D")
        if not np.all(np.isfinite(values)):
            raise StreamError("stream contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise StreamError("labels must be present for every point")
            if not np.all((labels == 0) | (labels == 1)):
                raise StreamError("labels must be 0 or 1")
            labels = labels.astype(np.int8)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def points(self) -> Iterator[TimePoint]:
        for k, row in enumerate(self.values):
            label = None if self.labels is None else int(self.labels[k])
            yield TimePoint(k, row, label)


def load_stream(path, value_columns: Sequence[str] | None = None,
                label_column: str | None = "label") -> LabeledStream:
    """Read a header-first CSV file into a :class:`LabeledStream`.

    Without ``value_columns``, every column other than ``label_column`` is a
    value column. A file without ``label_column`` yields an unlabeled stream.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such stream file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise StreamError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise StreamError(f"{path}: no data rows")

    has_label = label_column is not None and label_column in header
    if value_columns is None:
        value_columns = [h for h in header if h != label_column]
    missing = [c for c in value_columns if c not in header]
    if missing:
        raise StreamError(f"{path}: unknown columns {missing}")
    if not value_columns:
        raise StreamError(f"{path}: no value columns")
    vidx = [header.index(c) for c in value_columns]
    lidx = header.index(label_column) if has_label else None

    values = np.empty((len(rows), len(vidx)))
    labels = np.empty(len(rows), dtype=np.int8) if has_label else None
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise StreamError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        for j, k in enumerate(vidx):
            try:
                values[i, j] = float(row[k])
            except ValueError:
                raise StreamError(f"{path}: row {i + 2}: non-numeric value {row[k]!r}") from None
        if lidx is not None:
            cell = row[lidx].strip()
            if cell not in ("0", "1", "0.0", "1.0"):
                raise StreamError(f"{path}: row {i + 2}: label {cell!r} not in {{0,1}}")
            labels[i] = int(float(cell))
    if not np.all(np.isfinite(values)):
        raise StreamError(f"{path}: non-finite values")
    return LabeledStream(values, labels, name=path.stem)


def save_stream(stream: LabeledStream, path, precision: int = 17) -> None:
    """Write a stream as CSV with columns v0..v{d-1} and optionally label."""
    path = Path(path)
    header = [f"v{j}" for j in range(stream.dimension)]
    if stream.labels is not None:
        header.append("label")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(stream.values):
            cells = [format(float(v), f".{precision}g") for v in row]
            if stream.labels is not None:
                cells.append(str(int(stream.labels[i])))
            w.writerow(cells)


def batch_iter(stream: LabeledStream, batch_size: int) -> list[Batch]:
    """Split a stream into consecutive batches of ``batch_size``.

    A trailing partial batch shorter than :data:`MIN_BATCH_LENGTH` is
    dropped. A stream shorter than one batch gives a single batch, provided
    it reaches the minimum length.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    n = len(stream)
    batches = []
    for t, start in enumerate(range(0, n, batch_size)):
        stop = min(start + batch_size, n)
        if stop - start < min(batch_size, MIN_BATCH_LENGTH):
            if t == 0:
                raise StreamError(
                    f"stream of length {n} is shorter than the minimum batch length {MIN_BATCH_LENGTH}")
            break
        labels = None if stream.labels is None else stream.labels[start:stop]
        batches.append(Batch(t, start, stream.values[start:stop], labels))
    return batches


def synth_stream(kind: str = "sinusoid", length: int = 20000, anomaly_rate: float = 0.01,
                 drift_spec: str | None = None, seed: int = 0, dim: int = 1,
                 period: float = 50.0, noise: float = 0.2,
                 spike: tuple[float, float] = (1.5, 3.0)) -> LabeledStream:
    """Generate a labeled synthetic stream.

    Parameters
    ----------
    kind : {"sinusoid", "gaussian"}
        ``sinusoid`` is a unit-amplitude sine per dimension (phases staggered)
        plus Gaussian noise; ``gaussian`` is i.i.d. standard normal noise
        scaled by ``noise``.
    anomaly_rate : float
        Fraction of points replaced by point spikes, labeled 1. Spikes add
        ``+-U(spike)`` to every dimension.
    drift_spec : str, optional
        ``"mean-shift@IDX"`` or ``"mean-shift@IDX:SHIFT"``; adds ``SHIFT``
        (default 5.0) to every value from index ``IDX`` on.
    """
    if kind not in GENERATORS:
        raise ValueError(f"unknown generator {kind!r}; choose from {GENERATORS}")
    if not 0.0 <= anomaly_rate < 0.5:
        raise ValueError("anomaly_rate must lie in [0, 0.5)")
    if length <= 0 or dim <= 0:
        raise ValueError("length and dim must be positive")
    rng = np.random.default_rng(seed)
    tau = np.arange(length)[:, None]
    if kind == "sinusoid":
        phase = 2.0 * np.pi * np.arange(dim)[None, :] / max(dim, 1) / 4.0
        values = np.sin(2.0 * np.pi * tau / period + phase)
        values = values + noise * rng.standard_normal((length, dim))
    else:
        values = noise * rng.standard_normal((length, dim))

    labels = np.zeros(length, dtype=np.int8)
    n_anom = int(round(anomaly_rate * length))
    if n_anom:
        idx = np.sort(rng.choice(length, size=n_anom, replace=False))
        mags = rng.uniform(spike[0], spike[1], size=(n_anom, 1))
        signs = rng.choice([-1.0, 1.0], size=(n_anom, 1))
        values[idx] += signs * mags
        labels[idx] = 1

    if drift_spec:
        at, shift = parse_drift_spec(drift_spec)
        values[at:] += shift
    return LabeledStream(values, labels, name=f"{kind}-{seed}")


def parse_drift_spec(text: str) -> tuple[int, float]:
    """Parse ``mean-shift@IDX[:SHIFT]`` into ``(IDX, SHIFT)``."""
    kind, _, rest = text.partition("@")
    if kind != "mean-shift" or not rest:
        raise ValueError(f"unsupported drift spec {text!r}; expected mean-shift@IDX[:SHIFT]")
    at, _, shift = rest.partition(":")
    return int(at), float(shift) if shift else 5.0


def parse_generator_spec(text: str) -> LabeledStream:
    """Build a stream from a CLI string ``kind:param=value,...``.

    Recognised params: length, rate, seed, dim, period, noise, drift
    (a drift spec such as ``mean-shift@500:5``).
    """
    kind, _, rest = text.partition(":")
    kwargs: dict = {}
    casts = {"length": ("length", int), "rate": ("anomaly_rate", float),
             "seed": ("seed", int), "dim": ("dim", int), "period": ("period", float),
             "noise": ("noise", float), "drift": ("drift_spec", str)}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep or key not in casts:
            raise ValueError(f"bad generator parameter {item!r}")
        name, cast = casts[key]
        kwargs[name] = cast(value)
    return synth_stream(kind.strip(), **kwargs)


class RunningStandardizer:
    """Per-dimension running mean/variance (Welford, batched)."""

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    @property
    def std(self) -> np.ndarray:
        if self.n < 2:
            return np.ones_like(self.mean)
        std = np.sqrt(self.m2 / (self.n - 1))
        return np.where(std > 1e-12, std, 1.0)

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        nb = x.shape[0]
        if nb == 0:
            return
        bmean = x.mean(axis=0)
        bm2 = ((x - bmean) ** 2).sum(axis=0)
        total = self.n + nb
        delta = bmean - self.mean
        self.mean = self.mean + delta * nb / total
        self.m2 = self.m2 + bm2 + delta ** 2 * self.n * nb / total
        self.n = total

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std


def stationary_std(kind: str, noise: float = 0.2) -> float:
    """Marginal standard deviation of an anomaly-free generator stream."""
    if kind == "sinusoid":
        return math.sqrt(0.5 + noise ** 2)
    return noise
