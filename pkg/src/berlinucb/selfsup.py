"""Online clustering modules that turn hidden rounds into pseudo-rewards.

Each module absorbs ``(context, arm)`` pairs from positively rewarded rounds
and predicts an arm for an unlabelled context. ``predict`` returns ``None``
(``ABSTAIN``) when it has nothing to go on. All ties resolve to the lowest
arm index, and no module uses randomness.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from . import kernels
from .errors import InvalidArgumentError
from .linalg import as_vector

ABSTAIN = None
NO_SIGNAL = None

KNN_DEFAULT_K = 5
KNN_DEFAULT_CAPACITY = 2000
GMM_VARIANCE_FLOOR = 1e-6


def pseudo_reward(chosen: int, prediction: int | None) -> int | None:
    """Iverson bracket ``[chosen == prediction]``; ``None`` when the module abstained."""
    if prediction is None:
        return NO_SIGNAL
    return int(chosen == prediction)


def _check_arm(arm) -> int:
    a = int(arm)
    if a < 0 or a != arm:
        raise InvalidArgumentError(f"invalid arm identifier {arm!r}")
    return a


class SelfSupervision(ABC):
    kind: str = ""

    def __init__(self, dimension: int):
        if dimension < 1:
            raise InvalidArgumentError("dimension must be >= 1")
        self.dimension = int(dimension)

    @abstractmethod
    def add_labelled(self, x, arm: int) -> None: ...

    @abstractmethod
    def predict(self, x) -> int | None: ...

    @property
    @abstractmethod
    def size(self) -> int:
        """Number of labelled points absorbed (KNN: currently stored)."""

    @abstractmethod
    def to_dict(self) -> dict: ...

    def _vector(self, x) -> np.ndarray:
        return as_vector(x, self.dimension)


class _PerArmStats(SelfSupervision):
    """Growable per-arm storage shared by the centroid and Gaussian modules."""

    def __init__(self, dimension: int):
        super().__init__(dimension)
        self.counts = np.zeros(0, dtype=np.int64)

    def _ensure_arm(self, arm: int) -> None:
        n = self.counts.shape[0]
        if arm < n:
            return
        extra = arm + 1 - n
        self.counts = np.concatenate([self.counts, np.zeros(extra, dtype=np.int64)])
        self._grow(extra)

    @abstractmethod
    def _grow(self, extra: int) -> None: ...

    @property
    def size(self) -> int:
        return int(self.counts.sum())


class KMeansModule(_PerArmStats):
    """One centroid per arm: the running mean of that arm's labelled contexts.

    Sums are kept alongside the centroids so each centroid is recomputed as
    ``sum / count`` and never accumulates incremental-mean drift.
    """

    kind = "kmeans"

    def __init__(self, dimension: int):
        super().__init__(dimension)
        self.sums = np.zeros((0, self.dimension))
        self.centroids = np.zeros((0, self.dimension))

    def _grow(self, extra: int) -> None:
        self.sums = np.vstack([self.sums, np.zeros((extra, self.dimension))])
        self.centroids = np.vstack([self.centroids, np.zeros((extra, self.dimension))])

    def add_labelled(self, x, arm: int) -> None:
        v = self._vector(x)
        a = _check_arm(arm)
        self._ensure_arm(a)
        self.counts[a] += 1
        self.sums[a] += v
        self.centroids[a] = self.sums[a] / self.counts[a]

    def predict(self, x) -> int | None:
        v = self._vector(x)
        active = np.flatnonzero(self.counts > 0)
        if active.size == 0:
            return ABSTAIN
        dist = kernels.sq_distances(np.ascontiguousarray(self.centroids[active]), v)
        return int(active[int(np.argmin(dist))])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension,
                "counts": self.counts.tolist(), "sums": self.sums.ravel().tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "KMeansModule":
        m = cls(doc["dimension"])
        counts = np.asarray(doc["counts"], dtype=np.int64)
        if counts.size:
            m._ensure_arm(counts.size - 1)
            m.counts[:] = counts
            m.sums[:] = np.asarray(doc["sums"], dtype=np.float64).reshape(counts.size, m.dimension)
            nz = counts > 0
            m.centroids[nz] = m.sums[nz] / counts[nz, None]
        return m


class KNNModule(SelfSupervision):
    """Majority vote among the ``k`` nearest stored labelled contexts.

    Memory holds at most ``capacity`` points and evicts the oldest first.
    Equal distances are ordered by insertion (older first), so the
    neighbourhood is always well defined.
    """

    kind = "knn"

    def __init__(self, dimension: int, k: int = KNN_DEFAULT_K, capacity: int = KNN_DEFAULT_CAPACITY):
        super().__init__(dimension)
        if k < 1 or capacity < 1:
            raise InvalidArgumentError("k and capacity must be >= 1")
        self.k = int(k)
        self.capacity = int(capacity)
        self._points = np.zeros((self.capacity, self.dimension))
        self._arms = np.zeros(self.capacity, dtype=np.int64)
        self._seq = np.zeros(self.capacity, dtype=np.int64)
        self._n = 0
        self._inserted = 0

    @property
    def size(self) -> int:
        return self._n

    def add_labelled(self, x, arm: int) -> None:
        v = self._vector(x)
        a = _check_arm(arm)
        slot = self._inserted % self.capacity
        self._points[slot] = v
        self._arms[slot] = a
        self._seq[slot] = self._inserted
        self._inserted += 1
        self._n = min(self._n + 1, self.capacity)

    def memory(self) -> tuple[np.ndarray, np.ndarray]:
        """Stored ``(points, arms)`` in insertion order, oldest first."""
        order = np.argsort(self._seq[: self._n], kind="stable")
        return self._points[order].copy(), self._arms[order].copy()

    def neighbours(self, x) -> np.ndarray:
        """Slot indices of the ``k`` nearest stored points, nearest first."""
        v = self._vector(x)
        n = self._n
        dist = kernels.sq_distances(self._points[:n], v)
        order = np.lexsort((self._seq[:n], dist))
        return order[: min(self.k, n)]

    def predict(self, x) -> int | None:
        if self._n == 0:
            return ABSTAIN
        votes = np.bincount(self._arms[self.neighbours(x)])
        return int(np.argmax(votes))

    def to_dict(self) -> dict:
        points, arms = self.memory()
        return {"kind": self.kind, "dimension": self.dimension, "k": self.k,
                "capacity": self.capacity, "inserted": self._inserted,
                "points": points.ravel().tolist(), "arms": arms.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "KNNModule":
        m = cls(doc["dimension"], k=doc["k"], capacity=doc["capacity"])
        arms = np.asarray(doc["arms"], dtype=np.int64)
        points = np.asarray(doc["points"], dtype=np.float64).reshape(arms.size, m.dimension)
        m._inserted = int(doc["inserted"])
        m._n = arms.size
        # slot = sequence number mod capacity, so eviction order survives the round trip
        for i, seq in enumerate(range(m._inserted - m._n, m._inserted)):
            slot = seq % m.capacity
            m._points[slot] = points[i]
            m._arms[slot] = arms[i]
            m._seq[slot] = seq
        return m


class GaussianModule(_PerArmStats):
    """One diagonal Gaussian per arm with Welford running moments.

    Variances are the population variance floored at ``variance_floor``; a
    single point therefore gets the floor. Class priors are ``count / total``.
    """

    kind = "gmm"

    def __init__(self, dimension: int, variance_floor: float = GMM_VARIANCE_FLOOR):
        super().__init__(dimension)
        self.variance_floor = float(variance_floor)
        self.means = np.zeros((0, self.dimension))
        self.m2 = np.zeros((0, self.dimension))

    def _grow(self, extra: int) -> None:
        self.means = np.vstack([self.means, np.zeros((extra, self.dimension))])
        self.m2 = np.vstack([self.m2, np.zeros((extra, self.dimension))])

    def add_labelled(self, x, arm: int) -> None:
        v = self._vector(x)
        a = _check_arm(arm)
        self._ensure_arm(a)
        self.counts[a] += 1
        delta = v - self.means[a]
        self.means[a] += delta / self.counts[a]
        self.m2[a] += delta * (v - self.means[a])

    @property
    def variances(self) -> np.ndarray:
        n = np.maximum(self.counts, 1)[:, None]
        return np.maximum(self.m2 / n, self.variance_floor)

    @property
    def priors(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros(self.counts.shape[0])
        return self.counts / total

    def predict(self, x) -> int | None:
        v = self._vector(x)
        active = np.flatnonzero(self.counts > 0)
        if active.size == 0:
            return ABSTAIN
        loglik = kernels.diag_gauss_loglik(
            np.ascontiguousarray(self.means[active]),
            np.ascontiguousarray(self.variances[active]), v)
        score = np.log(self.priors[active]) + loglik
        return int(active[int(np.argmax(score))])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension,
                "variance_floor": self.variance_floor, "counts": self.counts.tolist(),
                "means": self.means.ravel().tolist(), "m2": self.m2.ravel().tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianModule":
        m = cls(doc["dimension"], variance_floor=doc["variance_floor"])
        counts = np.asarray(doc["counts"], dtype=np.int64)
        if counts.size:
            m._ensure_arm(counts.size - 1)
            m.counts[:] = counts
            m.means[:] = np.asarray(doc["means"], dtype=np.float64).reshape(counts.size, m.dimension)
            m.m2[:] = np.asarray(doc["m2"], dtype=np.float64).reshape(counts.size, m.dimension)
        return m


MODULES = {cls.kind: cls for cls in (KMeansModule, KNNModule, GaussianModule)}


def make_module(kind: str, dimension: int, **kwargs) -> SelfSupervision:
    try:
        cls = MODULES[kind]
    except KeyError:
        raise InvalidArgumentError(f"unknown self-supervision kind {kind!r}; expected one of {sorted(MODULES)}") from None
    return cls(dimension, **kwargs)


def module_from_dict(doc: dict) -> SelfSupervision:
    return MODULES[doc["kind"]].from_dict(doc)
