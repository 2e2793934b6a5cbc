"""Tabular Q-learning controller for fluid dosing.

States are bins of the blood-volume error: 1-10 when BV is below target,
11-18 when BV is at or above target. Actions index the dose list
``ACTIONS`` (mL/kg/h).

Naming follows the update rule used here: ``gamma`` is the learning rate and
``mu`` the discount factor.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingFault

ACTIONS: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
N_STATES = 18
N_ACTIONS = len(ACTIONS)

# Lower bin edges of |error| in liters.
NEGATIVE_EDGES = (0.0, 0.01, 0.03, 0.06, 0.150, 0.400, 0.700, 1.100, 1.500, 2.000)
POSITIVE_EDGES = (0.0, 0.01, 0.03, 0.06, 0.150, 0.400, 0.700, 1.100)

#: States where |error| < 10 mL; reaching one ends a training episode.
GOAL_STATES = frozenset({1, 11})


@dataclass(frozen=True)
class LearningParams:
    gamma: float = 0.69
    epsilon: float = 0.5
    mu0: float = 0.2
    mu_half_every: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}", key="gamma")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}", key="epsilon")
        if not 0.0 < self.mu0 < 1.0:
            raise ConfigError(f"mu0 must be in (0, 1), got {self.mu0}", key="mu0")
        if self.mu_half_every < 1:
            raise ConfigError(f"mu_half_every must be >= 1, got {self.mu_half_every}", key="mu_half_every")


@dataclass
class QTable:
    """Action values and per-cell update counts, indexed ``[state - 1, action]``."""

    values: np.ndarray = field(default_factory=lambda: np.zeros((N_STATES, N_ACTIONS)))
    visit_counts: np.ndarray = field(
        default_factory=lambda: np.zeros((N_STATES, N_ACTIONS), dtype=np.int64)
    )

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.visit_counts = np.asarray(self.visit_counts, dtype=np.int64)
        if self.values.shape != (N_STATES, N_ACTIONS) or self.visit_counts.shape != (N_STATES, N_ACTIONS):
            raise ValueError(f"Q-table must be {N_STATES}x{N_ACTIONS}")
        if not np.all(np.isfinite(self.values)):
            raise TrainingFault("Q-table contains non-finite values")

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.visit_counts.copy())

    def row(self, s: int) -> np.ndarray:
        return self.values[s - 1]

    def unvisited_states(self) -> list[int]:
        totals = self.visit_counts.sum(axis=1)
        return [i + 1 for i in np.flatnonzero(totals == 0)]

    def greedy_policy(self) -> list[int]:
        """Greedy action index for every state, in state order."""
        return [greedy_action(self, s) for s in range(1, N_STATES + 1)]


def discretize(bv_measured: float, bv_target: float) -> int:
    """Map a BV reading to its state id (1..18)."""
    d = (bv_measured - bv_target) / 1000.0
    e = abs(d)
    if d < 0:
        return bisect.bisect_right(NEGATIVE_EDGES, e)
    return 10 + bisect.bisect_right(POSITIVE_EDGES, e)


def reward(e_k: float, e_k1: float) -> float:
    """Relative error reduction; zero when the error did not shrink."""
    if e_k1 < e_k:
        return (e_k - e_k1) / e_k
    return 0.0


def greedy_action(q: QTable, s: int) -> int:
    # np.argmax returns the first maximum, i.e. the lowest dose on ties
    return int(np.argmax(q.values[s - 1]))


def select_action(q: QTable, s: int, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice. The exploration branch consumes two draws."""
    if rng.random() < epsilon:
        return min(int(rng.random() * N_ACTIONS), N_ACTIONS - 1)
    return greedy_action(q, s)


def q_update(q: QTable, s: int, a: int, r: float, s_next: int, gamma: float, mu: float) -> QTable:
    """In-place one-step Q-learning update of cell ``(s, a)``; returns ``q``."""
    i = s - 1
    old = q.values[i, a]
    target = r + mu * q.values[s_next - 1].max()
    new = (1.0 - gamma) * old + gamma * target
    if not math.isfinite(new):
        raise TrainingFault(f"non-finite Q-value at state {s}, action {a}")
    q.values[i, a] = new
    q.visit_counts[i, a] += 1
    return q


def mu_at(episode: int, params: LearningParams) -> float:
    """Discount factor in force during ``episode`` (halved every ``mu_half_every``)."""
    if episode < 0:
        raise ValueError("episode must be >= 0")
    return params.mu0 * 2.0 ** (-(episode // params.mu_half_every))
