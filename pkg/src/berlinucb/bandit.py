"""LinUCB and BerlinUCB agents over disjoint per-arm ridge state.

Three update rules share one agent class:

``linucb``
    A hidden reward is treated as a revealed zero.
``berlin_plain``
    A hidden round grows the covariance only.
``berlin_selfsup``
    A hidden round asks a clustering module for a label and adds the
    pseudo-reward to ``b`` of the chosen arm; ``A`` is left alone.

Under these literal rules ``linucb`` and ``berlin_plain`` apply identical
arithmetic on hidden rounds. ``skip_all_updates_when_hidden`` switches every
mode to "do nothing when hidden" for ablations.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, InvalidStateError, NumericalDegeneracyError
from .linalg import SM_DENOM_TOL, QUAD_NEG_TOL, as_vector, cholesky_inverse, quad_form, solve_theta
from .selfsup import KNN_DEFAULT_CAPACITY, KNN_DEFAULT_K, SelfSupervision, make_module, module_from_dict, pseudo_reward

MODES = ("linucb", "berlin_plain", "berlin_selfsup")
SELFSUP_KINDS = ("kmeans", "knn", "gmm")
TIE_TOL = 1e-12
NEW_ARM = 0
STATE_VERSION = 1

AGENT_NAMES = {
    "linucb": ("linucb", None),
    "berlin": ("berlin_plain", None),
    "b-kmeans": ("berlin_selfsup", "kmeans"),
    "b-knn": ("berlin_selfsup", "knn"),
    "b-gmm": ("berlin_selfsup", "gmm"),
}


@dataclass(frozen=True)
class Feedback:
    """What the background disclosed this round: a reward in {0, 1}, or nothing."""

    reward: int | None = None

    def __post_init__(self):
        if self.reward is not None and self.reward not in (0, 1):
            raise InvalidArgumentError(f"revealed reward must be 0 or 1, got {self.reward!r}")

    @property
    def revealed(self) -> bool:
        return self.reward is not None

    @classmethod
    def of(cls, reward: int) -> "Feedback":
        return cls(int(reward))


HIDDEN = Feedback(None)


@dataclass
class AgentConfig:
    dimension: int
    mode: str = "linucb"
    exploration: float = 1.0
    selfsup_kind: str | None = None
    skip_all_updates_when_hidden: bool = False
    knn_k: int = KNN_DEFAULT_K
    knn_capacity: int = KNN_DEFAULT_CAPACITY

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"unknown agent mode {self.mode!r}")
        if not self.exploration > 0:
            raise InvalidArgumentError("exploration must be > 0")
        if self.dimension < 1:
            raise InvalidArgumentError("dimension must be >= 1")
        if self.mode == "berlin_selfsup":
            if self.selfsup_kind not in SELFSUP_KINDS:
                raise InvalidArgumentError(f"berlin_selfsup needs selfsup_kind in {SELFSUP_KINDS}")
        elif self.selfsup_kind is not None:
            raise InvalidArgumentError(f"selfsup_kind is only valid for berlin_selfsup, not {self.mode}")

    @classmethod
    def from_name(cls, name: str, dimension: int, **kwargs) -> "AgentConfig":
        """Build a config from a short agent name such as ``"b-knn"``."""
        try:
            mode, kind = AGENT_NAMES[name.lower()]
        except KeyError:
            raise InvalidArgumentError(f"unknown agent {name!r}; expected one of {sorted(AGENT_NAMES)}") from None
        return cls(dimension=dimension, mode=mode, selfsup_kind=kind, **kwargs)

    @property
    def name(self) -> str:
        for key, value in AGENT_NAMES.items():
            if value == (self.mode, self.selfsup_kind):
                return key
        raise AssertionError("unreachable")


@dataclass
class ArmState:
    """Ridge statistics of one arm. Arrays may be views into agent storage."""

    A: np.ndarray
    A_inv: np.ndarray
    b: np.ndarray
    covariance_updates: int = 0
    reward_updates: int = 0

    @classmethod
    def fresh(cls, d: int) -> "ArmState":
        return cls(np.eye(d), np.eye(d), np.zeros(d))


@dataclass
class Decision:
    chosen_arm: int
    scores: np.ndarray = field(repr=False)
    tie_broken: bool = False


def score_arm(arm: ArmState, x, c: float) -> float:
    """UCB score ``theta^T x + c * sqrt(x^T A^-1 x)`` with ``theta = A^-1 b``."""
    v = as_vector(x, arm.b.shape[0])
    theta = solve_theta(arm.A_inv, arm.b)
    return float(theta @ v + c * np.sqrt(quad_form(arm.A_inv, v)))


class Agent:
    """A contextual bandit agent holding stacked per-arm ridge state.

    Parameters
    ----------
    config : AgentConfig
        Update rule, dimension and exploration constant.
    n_arms : int
        Initial number of arms (1 for the extendable regime).
    rng : numpy.random.Generator, optional
        Dedicated tie-break stream; only consumed when scores tie.
    """

    def __init__(self, config: AgentConfig, n_arms: int, rng: np.random.Generator | None = None):
        if n_arms < 1:
            raise InvalidArgumentError("an agent needs at least one arm")
        self.config = config
        d = config.dimension
        self.A = np.tile(np.eye(d), (n_arms, 1, 1))
        self.A_inv = self.A.copy()
        self.b = np.zeros((n_arms, d))
        self.covariance_updates = np.zeros(n_arms, dtype=np.int64)
        self.reward_updates = np.zeros(n_arms, dtype=np.int64)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.selfsup: SelfSupervision | None = None
        if config.mode == "berlin_selfsup":
            extra = {"k": config.knn_k, "capacity": config.knn_capacity} if config.selfsup_kind == "knn" else {}
            self.selfsup = make_module(config.selfsup_kind, d, **extra)
        self.abstentions = 0

    @property
    def n_arms(self) -> int:
        return self.b.shape[0]

    @property
    def dimension(self) -> int:
        return self.config.dimension

    def arm(self, a: int) -> ArmState:
        self._check_arm(a)
        return ArmState(self.A[a], self.A_inv[a], self.b[a],
                        int(self.covariance_updates[a]), int(self.reward_updates[a]))

    def _check_arm(self, a: int) -> None:
        if not 0 <= a < self.n_arms:
            raise InvalidArgumentError(f"arm {a} does not exist (have {self.n_arms})")

    # -- selection ---------------------------------------------------------

    def scores(self, x) -> np.ndarray:
        v = as_vector(x, self.dimension)
        means, variances = kernels.ucb_terms(self.A_inv, self.b, v)
        if np.any(variances < 0.0):
            if variances.min() < -QUAD_NEG_TOL:
                raise NumericalDegeneracyError(f"quadratic form is negative: {variances.min()!r}")
            variances = np.maximum(variances, 0.0)
        return means + self.config.exploration * np.sqrt(variances)

    def select(self, x) -> Decision:
        if self.n_arms == 0:
            raise InvalidStateError("no arms to select from")
        s = self.scores(x)
        best = s.max()
        candidates = np.flatnonzero(s >= best - TIE_TOL)
        if candidates.size == 1:
            return Decision(int(candidates[0]), s, False)
        pick = int(candidates[self.rng.integers(candidates.size)])
        return Decision(pick, s, True)

    # -- updates -----------------------------------------------------------

    def _covariance_update(self, a: int, x: np.ndarray) -> None:
        denom = kernels.sherman_morrison_update(self.A_inv[a], x, SM_DENOM_TOL)
        if not denom > SM_DENOM_TOL:
            raise NumericalDegeneracyError(f"Sherman-Morrison denominator {denom!r} on arm {a}")
        kernels.rank1_update(self.A[a], x)
        self.covariance_updates[a] += 1

    def _reward_update(self, a: int, x: np.ndarray, r: int) -> None:
        if r:
            self.b[a] += x
        self.reward_updates[a] += 1

    def observe_linucb(self, x, chosen: int, fb: Feedback) -> None:
        v = as_vector(x, self.dimension)
        self._check_arm(chosen)
        if not fb.revealed and self.config.skip_all_updates_when_hidden:
            return
        r = fb.reward if fb.revealed else 0
        self._covariance_update(chosen, v)
        self._reward_update(chosen, v, r)

    def observe_berlin(self, x, chosen: int, fb: Feedback, memory_arm: int | None = None) -> int | None:
        """Apply one BerlinUCB update; return the pseudo-reward used, if any.

        ``memory_arm`` overrides the label stored in the clustering memory on
        a positive round (the extendable regime stores the spawned arm).
        """
        v = as_vector(x, self.dimension)
        self._check_arm(chosen)
        if fb.revealed:
            self._covariance_update(chosen, v)
            self._reward_update(chosen, v, fb.reward)
            if fb.reward == 1 and self.selfsup is not None:
                self.selfsup.add_labelled(v, chosen if memory_arm is None else memory_arm)
            return None
        if self.config.skip_all_updates_when_hidden:
            return None
        if self.selfsup is None:
            self._covariance_update(chosen, v)
            return None
        r_pseudo = pseudo_reward(chosen, self.selfsup.predict(v))
        if r_pseudo is None:
            self.abstentions += 1
            return None
        self._reward_update(chosen, v, r_pseudo)
        return r_pseudo

    def observe(self, x, chosen: int, fb: Feedback, memory_arm: int | None = None) -> None:
        if self.config.mode == "linucb":
            self.observe_linucb(x, chosen, fb)
        else:
            self.observe_berlin(x, chosen, fb, memory_arm=memory_arm)

    def add_arm(self) -> int:
        d = self.dimension
        self.A = np.concatenate([self.A, np.eye(d)[None]])
        self.A_inv = np.concatenate([self.A_inv, np.eye(d)[None]])
        self.b = np.concatenate([self.b, np.zeros((1, d))])
        self.covariance_updates = np.append(self.covariance_updates, 0)
        self.reward_updates = np.append(self.reward_updates, 0)
        return self.n_arms - 1

    # -- checkpoint --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": STATE_VERSION,
            "config": asdict(self.config),
            "dimension": self.dimension,
            "arm_count": self.n_arms,
            "arms": [
                {"A": self.A[a].ravel().tolist(), "b": self.b[a].tolist(),
                 "covariance_updates": int(self.covariance_updates[a]),
                 "reward_updates": int(self.reward_updates[a])}
                for a in range(self.n_arms)
            ],
            "selfsup": None if self.selfsup is None else self.selfsup.to_dict(),
            "tiebreak_rng": self.rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Agent":
        if doc.get("version") != STATE_VERSION:
            raise InvalidArgumentError(f"unsupported agent state version {doc.get('version')!r}")
        config = AgentConfig(**doc["config"])
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = doc["tiebreak_rng"]
        agent = cls(config, doc["arm_count"], rng=rng)
        d = config.dimension
        for a, arm in enumerate(doc["arms"]):
            agent.A[a] = np.asarray(arm["A"], dtype=np.float64).reshape(d, d)
            agent.A_inv[a] = cholesky_inverse(agent.A[a])
            agent.b[a] = np.asarray(arm["b"], dtype=np.float64)
            agent.covariance_updates[a] = arm["covariance_updates"]
            agent.reward_updates[a] = arm["reward_updates"]
        if doc.get("selfsup") is not None:
            agent.selfsup = module_from_dict(doc["selfsup"])
        return agent

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Agent":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def extendable_step(agent: Agent, x, label: int, chosen: int, fb: Feedback,
                    mapping: dict[int, int]) -> int | None:
    """Observe one round in the extendable-arm regime.

    Arm ``NEW_ARM`` (index 0) stands for "this class has no arm yet". When it
    is chosen and the environment confirms it with a revealed reward of 1, a
    fresh arm is appended, ``mapping[label]`` points at it, and the rewarded
    update is applied to the NEW arm. Returns the spawned arm id, if any.
    """
    if chosen == NEW_ARM and fb.revealed and fb.reward == 1:
        new = agent.add_arm()
        mapping[label] = new
        agent.observe(x, NEW_ARM, fb, memory_arm=new)
        return new
    agent.observe(x, chosen, fb)
    return None
