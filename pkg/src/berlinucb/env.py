"""Seedable stream environments for the episodic-reward protocol.

Every environment emits ``total_steps`` samples in batches of ``batch_size``.
Per-batch parameters (cluster weights, negation probability, label
permutation, domain) are redrawn exactly when ``step % batch_size == 0``.

Randomness comes from the named streams in :mod:`berlinucb.rng`:
per-sample draws use ``sample-order``, per-batch draws ``batch-parameters``
and reveal bits ``reveal``. The reveal stream is consumed once per step and
nothing else touches it, so reveal bits do not depend on the scenario.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .bandit import NEW_ARM
from .data import Dataset, stretch_concat
from .errors import EndOfStream, InvalidArgumentError

DEFAULT_BATCH_SIZE = 100
DEFAULT_TOTAL_STEPS = 5000


@dataclass(frozen=True)
class StreamSample:
    context: np.ndarray
    true_label: int
    batch_index: int
    step: int


@dataclass(frozen=True)
class RevealSchedule:
    """Reveal probability per batch: one fixed value, or a list cycled over batches."""

    probabilities: tuple[float, ...]
    per_batch: bool = False

    def __post_init__(self):
        if not self.probabilities:
            raise InvalidArgumentError("reveal schedule needs at least one probability")
        for p in self.probabilities:
            if not 0.0 <= p <= 1.0:
                raise InvalidArgumentError(f"reveal probability {p} outside [0, 1]")

    @classmethod
    def fixed(cls, p: float) -> "RevealSchedule":
        return cls((float(p),), per_batch=False)

    @classmethod
    def cycle(cls, values) -> "RevealSchedule":
        return cls(tuple(float(v) for v in values), per_batch=True)

    def probability(self, batch_index: int) -> float:
        return self.probabilities[batch_index % len(self.probabilities)]

    @property
    def mean(self) -> float:
        return float(np.mean(self.probabilities))

    def to_dict(self) -> dict:
        if self.per_batch:
            return {"kind": "per_batch", "values": list(self.probabilities)}
        return {"kind": "fixed", "p": self.probabilities[0]}


@dataclass(frozen=True)
class SyntheticEnvConfig:
    """Gaussian blobs: class ``k`` emits ``means[k] + noise * N(0, I)``."""

    means: np.ndarray
    noise: float = 1.0

    @property
    def class_count(self) -> int:
        return self.means.shape[0]

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @classmethod
    def separated(cls, n_classes: int, dimension: int, separation: float, noise: float = 1.0) -> "SyntheticEnvConfig":
        """Means on scaled coordinate axes, pairwise ``separation * noise`` apart."""
        if n_classes > dimension:
            raise InvalidArgumentError("need dimension >= n_classes for axis-aligned means")
        means = np.zeros((n_classes, dimension))
        means[np.arange(n_classes), np.arange(n_classes)] = separation * noise / np.sqrt(2.0)
        return cls(means, noise)


class Environment:
    """Base class: step bookkeeping, reveal draws and reward lookup."""

    scenario = "base"

    def __init__(self, *, n_classes: int, dimension: int, total_steps: int = DEFAULT_TOTAL_STEPS,
                 batch_size: int = DEFAULT_BATCH_SIZE, reveal: RevealSchedule | None = None, seed: int = 0):
        if batch_size < 1 or total_steps < 0:
            raise InvalidArgumentError("batch_size must be >= 1 and total_steps >= 0")
        self.n_classes = int(n_classes)
        self.dimension = int(dimension)
        self.total_steps = int(total_steps)
        self.batch_size = int(batch_size)
        self.schedule = reveal if reveal is not None else RevealSchedule.fixed(1.0)
        self.seed = int(seed)
        self.sample_rng = rngmod.stream(seed, rngmod.SAMPLE_ORDER)
        self.reveal_rng = rngmod.stream(seed, rngmod.REVEAL)
        self.batch_rng = rngmod.stream(seed, rngmod.BATCH_PARAMS)
        self.step = 0
        self.batch_starts: list[int] = []

    def __iter__(self):
        return self

    def __next__(self) -> StreamSample:
        return self.next_sample()

    def next_sample(self) -> StreamSample:
        if self.step >= self.total_steps:
            raise EndOfStream(f"environment exhausted after {self.total_steps} steps")
        step = self.step
        batch = step // self.batch_size
        if step % self.batch_size == 0:
            self.batch_starts.append(step)
            self._begin_batch(batch)
        x, label = self._draw(step)
        self.step += 1
        return StreamSample(x, int(label), batch, step)

    def reveal(self, step: int) -> bool:
        u = self.reveal_rng.random()
        return bool(u < self.schedule.probability(step // self.batch_size))

    def reward(self, sample: StreamSample, chosen: int, mapping: dict[int, int] | None = None) -> int:
        """1 iff ``chosen`` is the arm for the sample's label.

        ``mapping`` is ``None`` for fixed arms (arm id == label). In the
        extendable regime it maps labels to spawned arms, and an unmapped
        label is rewarded only on the NEW arm.
        """
        if mapping is None:
            return int(chosen == sample.true_label)
        arm = mapping.get(sample.true_label)
        if arm is None:
            return int(chosen == NEW_ARM)
        return int(chosen == arm)

    def _begin_batch(self, batch_index: int) -> None:
        pass

    def _draw(self, step: int) -> tuple[np.ndarray, int]:
        raise NotImplementedError


class SequentialEnv(Environment):
    """Stationary stream: dataset rows in order, wrapping at the end."""

    scenario = "stationary"

    def __init__(self, dataset: Dataset, **kwargs):
        if len(dataset) == 0:
            raise InvalidArgumentError("dataset is empty")
        super().__init__(n_classes=dataset.class_count, dimension=dataset.dimension, **kwargs)
        self.dataset = dataset

    def _draw(self, step):
        i = step % len(self.dataset)
        return self.dataset.features[i], self.dataset.labels[i]


def lloyd_kmeans(points: np.ndarray, k: int, rng: np.random.Generator, iterations: int = 20) -> np.ndarray:
    """Offline Lloyd k-means with farthest-point seeding; returns assignments.

    A cluster left empty after an assignment pass is re-seeded at the point
    farthest from its current centroid.
    """
    n = points.shape[0]
    k = min(k, n)
    sq = np.einsum("nd,nd->n", points, points)

    def sqdist(centres):
        c2 = np.einsum("kd,kd->k", centres, centres)
        return np.maximum(sq[:, None] - 2.0 * points @ centres.T + c2[None, :], 0.0)

    centres = np.empty((k, points.shape[1]))
    centres[0] = points[rng.integers(n)]
    nearest = sqdist(centres[:1])[:, 0]
    for j in range(1, k):
        centres[j] = points[int(np.argmax(nearest))]
        nearest = np.minimum(nearest, sqdist(centres[j : j + 1])[:, 0])
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iterations):
        dist = sqdist(centres)
        assign = np.argmin(dist, axis=1)
        counts = np.bincount(assign, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(dist[np.arange(n), assign]))
            centres[j] = points[far]
            assign[far] = j
            dist[far] = 0.0
        for j in range(k):
            members = assign == j
            if members.any():
                centres[j] = points[members].mean(axis=0)
    return np.argmin(sqdist(centres), axis=1) if k > 1 else np.zeros(n, dtype=np.int64)


class ClusterDriftEnv(Environment):
    """Context drift: each batch reweights offline k-means clusters.

    Batch weights are drawn from ``Dirichlet(concentration * k * pi)`` where
    ``pi`` holds the global cluster proportions; that is the symmetric
    Dirichlet for balanced clusters, and large concentrations recover the
    global mix. Inside a cluster, members are visited in dataset order with
    wrap-around, so ``k = 1`` reproduces the stationary stream exactly.
    """

    scenario = "cluster_drift"

    def __init__(self, dataset: Dataset, k: int | None = None, concentration: float = 0.5,
                 lloyd_iterations: int = 20, **kwargs):
        if len(dataset) == 0:
            raise InvalidArgumentError("dataset is empty")
        super().__init__(n_classes=dataset.class_count, dimension=dataset.dimension, **kwargs)
        k = dataset.class_count if k is None else int(k)
        if k < 1:
            raise InvalidArgumentError("k must be >= 1")
        if not concentration > 0:
            raise InvalidArgumentError("concentration must be > 0")
        self.dataset = dataset
        self.concentration = float(concentration)
        if k == 1:
            self.assignments = np.zeros(len(dataset), dtype=np.int64)
        else:
            self.assignments = lloyd_kmeans(dataset.features, k, self.batch_rng, lloyd_iterations)
        self.k = int(self.assignments.max()) + 1
        self.members = [np.flatnonzero(self.assignments == j) for j in range(self.k)]
        sizes = np.array([m.size for m in self.members], dtype=np.float64)
        self.global_proportions = sizes / sizes.sum()
        self._cursor = np.zeros(self.k, dtype=np.int64)
        self.weights = self.global_proportions.copy()
        self.weight_history: list[np.ndarray] = []
        self.cluster_log: list[int] = []

    def _begin_batch(self, batch_index):
        alpha = self.concentration * self.k * self.global_proportions
        self.weights = self.batch_rng.dirichlet(alpha) if self.k > 1 else np.ones(1)
        self.weight_history.append(self.weights)

    def _draw(self, step):
        cum = np.cumsum(self.weights)
        c = int(np.searchsorted(cum, self.sample_rng.random() * cum[-1], side="right"))
        c = min(c, self.k - 1)
        while self.members[c].size == 0:
            c = (c + 1) % self.k
        members = self.members[c]
        i = members[self._cursor[c] % members.size]
        self._cursor[c] += 1
        self.cluster_log.append(c)
        return self.dataset.features[i], self.dataset.labels[i]


class NegativeImageEnv(SequentialEnv):
    """Sequential stream where each sample is negated (``1 - x``) with a per-batch probability."""

    scenario = "negative_images"

    def __init__(self, dataset: Dataset, p_range: tuple[float, float] = (0.0, 1.0), **kwargs):
        lo, hi = float(p_range[0]), float(p_range[1])
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvalidArgumentError(f"invalid negation probability range {p_range}")
        f = dataset.features
        if f.size and (f.min() < 0.0 or f.max() > 1.0):
            raise InvalidArgumentError("negative images need features scaled to [0, 1]")
        super().__init__(dataset, **kwargs)
        self.p_range = (lo, hi)
        self.p = 0.0
        self.p_history: list[float] = []

    def _begin_batch(self, batch_index):
        lo, hi = self.p_range
        self.p = lo if lo == hi else float(self.batch_rng.uniform(lo, hi))
        self.p_history.append(self.p)

    def _draw(self, step):
        x, y = super()._draw(step)
        if self.sample_rng.random() < self.p:
            x = 1.0 - x
        return x, y


class ShuffledLabelEnv(SequentialEnv):
    """Reward drift: a fresh label permutation each batch; contexts are untouched."""

    scenario = "shuffled_labels"

    def __init__(self, dataset: Dataset, force_identity: bool = False, **kwargs):
        if dataset.class_count < 2:
            raise InvalidArgumentError("shuffled labels need at least two classes")
        super().__init__(dataset, **kwargs)
        self.force_identity = force_identity
        self.permutation = np.arange(dataset.class_count)
        self.permutation_history: list[np.ndarray] = []

    def _begin_batch(self, batch_index):
        if self.force_identity:
            self.permutation = np.arange(self.n_classes)
        else:
            self.permutation = self.batch_rng.permutation(self.n_classes)
        self.permutation_history.append(self.permutation)

    def _draw(self, step):
        x, y = super()._draw(step)
        return x, self.permutation[y]


class MultitaskEnv(Environment):
    """Two domains embedded side by side; each batch comes wholly from one.

    The domain of each batch is a fair coin from the batch stream. Each
    domain keeps its own sequential cursor. Without ``dataset_b`` the stream
    is single-domain and identical to the stationary one.
    """

    scenario = "multitask"

    def __init__(self, dataset_a: Dataset, dataset_b: Dataset | None = None, **kwargs):
        if dataset_b is None:
            domains = [dataset_a]
        else:
            domains = list(stretch_concat(dataset_a, dataset_b))
        if any(len(d) == 0 for d in domains):
            raise InvalidArgumentError("multitask domains must be nonempty")
        super().__init__(n_classes=domains[0].class_count, dimension=domains[0].dimension, **kwargs)
        self.domains = domains
        self._cursor = [0] * len(domains)
        self.domain = 0
        self.domain_history: list[int] = []

    def _begin_batch(self, batch_index):
        self.domain = 0 if len(self.domains) == 1 else int(self.batch_rng.random() < 0.5)
        self.domain_history.append(self.domain)

    def _draw(self, step):
        ds = self.domains[self.domain]
        i = self._cursor[self.domain] % len(ds)
        self._cursor[self.domain] += 1
        return ds.features[i], ds.labels[i]


class SegmentStreamEnv(Environment):
    """Continuous labelled stream built from per-class frame pools.

    The stream is a sequence of ``n_segments`` segments, each a uniformly
    chosen class held for a uniform length in ``segment_length_range``
    (inclusive). Frames come from the class's pool in file order, wrapping
    around. ``frame_log`` records ``(class, pool_position)`` per step.
    """

    scenario = "stream"

    def __init__(self, dataset: Dataset, segment_length_range: tuple[int, int] = (50, 150),
                 n_segments: int = 100, **kwargs):
        lo, hi = int(segment_length_range[0]), int(segment_length_range[1])
        if not 1 <= lo <= hi:
            raise InvalidArgumentError(f"invalid segment length range {segment_length_range}")
        if n_segments < 1:
            raise InvalidArgumentError("n_segments must be >= 1")
        pools = [np.flatnonzero(dataset.labels == c) for c in range(dataset.class_count)]
        empty = [c for c, p in enumerate(pools) if p.size == 0]
        if empty:
            raise InvalidArgumentError(f"classes {empty} have no frames")
        seg_rng = rngmod.stream(kwargs.get("seed", 0), rngmod.SAMPLE_ORDER)
        classes = seg_rng.integers(dataset.class_count, size=n_segments)
        lengths = seg_rng.integers(lo, hi + 1, size=n_segments)
        kwargs["total_steps"] = int(lengths.sum())
        super().__init__(n_classes=dataset.class_count, dimension=dataset.dimension, **kwargs)
        self.sample_rng = seg_rng
        self.dataset = dataset
        self.pools = pools
        self.segments = list(zip(classes.tolist(), lengths.tolist()))
        self._labels = np.repeat(classes, lengths)
        self._cursor = np.zeros(dataset.class_count, dtype=np.int64)
        self.frame_log: list[tuple[int, int]] = []

    def _draw(self, step):
        c = int(self._labels[step])
        pos = int(self._cursor[c] % self.pools[c].size)
        self._cursor[c] += 1
        self.frame_log.append((c, pos))
        i = self.pools[c][pos]
        return self.dataset.features[i], c


class SyntheticEnv(Environment):
    """Gaussian blobs with classes cycled round-robin."""

    scenario = "synthetic"

    def __init__(self, config: SyntheticEnvConfig, **kwargs):
        super().__init__(n_classes=config.class_count, dimension=config.dimension, **kwargs)
        self.config = config

    def _draw(self, step):
        k = step % self.n_classes
        x = self.config.means[k] + self.config.noise * self.sample_rng.standard_normal(self.dimension)
        return x, k


def build_stationary(dataset: Dataset, **kwargs) -> SequentialEnv:
    return SequentialEnv(dataset, **kwargs)


def build_cluster_drift(dataset: Dataset, k: int | None = None, concentration: float = 0.5, **kwargs) -> ClusterDriftEnv:
    return ClusterDriftEnv(dataset, k=k, concentration=concentration, **kwargs)


def build_negative_images(dataset: Dataset, p_range=(0.0, 1.0), **kwargs) -> NegativeImageEnv:
    return NegativeImageEnv(dataset, p_range=tuple(p_range), **kwargs)


def build_shuffled_labels(dataset: Dataset, force_identity: bool = False, **kwargs) -> ShuffledLabelEnv:
    return ShuffledLabelEnv(dataset, force_identity=force_identity, **kwargs)


def build_multitask(dataset_a: Dataset, dataset_b: Dataset | None = None, **kwargs) -> MultitaskEnv:
    return MultitaskEnv(dataset_a, dataset_b, **kwargs)


def build_stream_generator(dataset: Dataset, segment_length_range=(50, 150), n_segments: int = 100,
                           **kwargs) -> SegmentStreamEnv:
    return SegmentStreamEnv(dataset, segment_length_range=tuple(segment_length_range),
                            n_segments=n_segments, **kwargs)


def build_synthetic(config: SyntheticEnvConfig, **kwargs) -> SyntheticEnv:
    return SyntheticEnv(config, **kwargs)
