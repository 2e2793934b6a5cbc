"""Closed-loop episode runner, Q-learning training loop and evaluation.

Random streams
--------------
Every stream is derived from an integer run seed ``S``:

* training (initial BV draws and exploration): ``default_rng([S, 0])``
* evaluation measurement noise:                 ``default_rng([S, 1])``

RL and PID evaluations of the same scenario therefore see the same noise
realization. Multi-run sweeps use run seed ``master + run_index``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import rl_agent
from .errors import ConfigError, SimulationFault
from .hemodynamics import (
    DEFAULT_DT,
    NoiseKind,
    NoiseModel,
    PatientParams,
    PeriodPropagator,
    measure,
)
from .metrics import MetricsReport, compute_metrics
from .pid import PidGains, PidState, pid_step
from .rl_agent import GOAL_STATES, LearningParams, QTable

TRAIN_STREAM = 0
EVAL_STREAM = 1


def make_rng(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), purpose])


def dose_to_rate(dose: float, weight: float) -> float:
    """mL/kg/h -> mL/min."""
    return dose * weight / 60.0


def _is_multiple(a: float, b: float) -> bool:
    n = round(a / b)
    return n >= 1 and math.isclose(n * b, a, rel_tol=1e-9, abs_tol=1e-12)


@dataclass(frozen=True)
class ScenarioConfig:
    """One closed-loop experiment.

    The patient is at rest at ``bv_initial`` when the run starts; the model
    baseline volume is taken from it, so ``patient.v_b0`` is overridden.
    ``hemorrhage`` holds ``(start_min, end_min, rate_ml_min)`` segments.
    """

    bv_initial: float = 3940.0
    bv_target: float = 5000.0
    duration: float = 100.0
    control_period: float = 1.0
    patient: PatientParams = field(default_factory=PatientParams)
    noise: NoiseModel = field(default_factory=NoiseModel)
    hemorrhage: tuple[tuple[float, float, float], ...] = ()
    seed: int = 0
    dt: float = DEFAULT_DT
    name: str = "nominal"

    def __post_init__(self):
        object.__setattr__(self, "hemorrhage", tuple(tuple(map(float, seg)) for seg in self.hemorrhage))
        for key in ("bv_initial", "bv_target", "duration", "control_period", "dt"):
            value = getattr(self, key)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{key} must be finite and > 0, got {value!r}", key=key)
        if not _is_multiple(self.duration, self.control_period):
            raise ConfigError(
                f"duration ({self.duration}) must be an integer multiple of control_period ({self.control_period})",
                key="duration",
            )
        if not _is_multiple(self.control_period, self.dt):
            raise ConfigError(
                f"control_period ({self.control_period}) must be an integer multiple of dt ({self.dt})",
                key="control_period",
            )
        segments = sorted(self.hemorrhage)
        for start, end, rate in segments:
            if not (0 <= start < end <= self.duration) or rate < 0:
                raise ConfigError(f"invalid hemorrhage segment {(start, end, rate)}", key="hemorrhage")
        for (_, end_a, _), (start_b, _, _) in zip(segments, segments[1:]):
            if start_b < end_a:
                raise ConfigError("hemorrhage segments overlap", key="hemorrhage")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", key="seed")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.control_period))

    @property
    def substeps(self) -> int:
        return int(round(self.control_period / self.dt))

    def loss_rate(self, t: float) -> float:
        for start, end, rate in self.hemorrhage:
            if start <= t < end:
                return rate
        return 0.0


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 30_000
    learning: LearningParams = field(default_factory=LearningParams)
    init_bv_range: tuple[float, float] = (2800.0, 6200.0)
    max_steps_per_episode: int = 100

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError(f"episodes must be >= 0, got {self.episodes}", key="episodes")
        lo, hi = self.init_bv_range
        if not (0 < lo < hi):
            raise ConfigError(f"init_bv_range must satisfy 0 < lo < hi, got {self.init_bv_range}", key="init_bv_range")
        if self.max_steps_per_episode < 1:
            raise ConfigError("max_steps_per_episode must be >= 1", key="max_steps_per_episode")

    def check_coverage(self, bv_target: float) -> None:
        """The initial-BV range must reach the outermost error bins on both sides."""
        lo, hi = self.init_bv_range
        if not (bv_target - lo > 1000 * rl_agent.NEGATIVE_EDGES[-1] and hi - bv_target > 1000 * rl_agent.POSITIVE_EDGES[-1]):
            raise ConfigError(
                f"init_bv_range {self.init_bv_range} does not span every state around target {bv_target}",
                key="init_bv_range",
            )


class StepRecord(NamedTuple):
    t: float
    bv_true: float
    bv_measured: float
    state_id: int
    action_index: int  # -1 for controllers without a discrete action set
    dose: float
    u: float
    reward: float


@dataclass
class EpisodeLog:
    records: list[StepRecord] = field(default_factory=list)
    terminal: bool = False
    episode_index: int = 0
    controller: str = ""
    scenario: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        i = StepRecord._fields.index(name)
        return np.array([r[i] for r in self.records], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def bv_true(self) -> np.ndarray:
        return self.column("bv_true")

    @property
    def doses(self) -> np.ndarray:
        return self.column("dose")


# --- controllers -----------------------------------------------------------


class Controller:
    """Closed-loop dosing policy. ``act`` returns ``(action_index, dose_ml_kg_h)``."""

    name = "controller"

    def reset(self) -> None:
        pass

    def act(self, bv_measured: float, state_id: int, setpoint: float, dt: float) -> tuple[int, float]:
        raise NotImplementedError


class RLController(Controller):
    """Greedy policy of a Q-table. Training-time exploration lives in :func:`run_episode`."""

    name = "RL"

    def __init__(self, q: QTable):
        self.q = q

    def act(self, bv_measured, state_id, setpoint, dt):
        a = rl_agent.greedy_action(self.q, state_id)
        return a, rl_agent.ACTIONS[a]


class PIDController(Controller):
    name = "PID"

    def __init__(self, gains: PidGains, anti_windup: bool = True):
        self.gains = gains
        self.anti_windup = anti_windup
        self.state = PidState()

    def reset(self):
        self.state = PidState()

    def act(self, bv_measured, state_id, setpoint, dt):
        dose, self.state = pid_step(self.gains, self.state, setpoint, bv_measured, dt, anti_windup=self.anti_windup)
        return -1, dose


class ConstantDose(Controller):
    def __init__(self, dose: float = 0.0, name: str = "constant"):
        self.dose = dose
        self.name = name

    def act(self, bv_measured, state_id, setpoint, dt):
        return -1, self.dose


# --- episodes --------------------------------------------------------------


def run_episode(
    scenario: ScenarioConfig,
    controller: Controller,
    rng: np.random.Generator,
    mode: str = "eval",
    learning: LearningParams | None = None,
    episode_index: int = 0,
    max_steps: int | None = None,
) -> EpisodeLog:
    """Run one closed-loop episode.

    In ``"train"`` mode the controller must be an :class:`RLController`; actions
    are epsilon-greedy and its Q-table is updated in place after every step.
    A training episode ends once the agent has acted from a goal state
    (|error| < 10 mL) or after ``max_steps``. Evaluation runs the full horizon.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    if training:
        if not isinstance(controller, RLController) or learning is None:
            raise ValueError("train mode needs an RLController and LearningParams")
        q = controller.q
        mu = rl_agent.mu_at(episode_index, learning)
        gamma, epsilon = learning.gamma, learning.epsilon

    patient = replace(scenario.patient, v_b0=scenario.bv_initial)
    prop = PeriodPropagator(patient, scenario.dt, scenario.substeps)
    v_b0, c1, c2 = patient.v_b0, patient.c1, patient.c2
    target, period, weight = scenario.bv_target, scenario.control_period, patient.weight
    noise = scenario.noise
    noisy = noise.kind is not NoiseKind.NONE and noise.amplitude > 0
    steady_loss = not scenario.hemorrhage
    n_steps = scenario.n_steps if max_steps is None else min(max_steps, scenario.n_steps)

    log = EpisodeLog(episode_index=episode_index, controller=controller.name, scenario=scenario.name)
    records = log.records
    controller.reset()

    z1 = z2 = 0.0
    bv = v_b0
    bv_meas = measure(bv, noise, rng) if noisy else bv
    for k in range(n_steps):
        t = k * period
        s = rl_agent.discretize(bv_meas, target)
        if training:
            a = rl_agent.select_action(q, s, epsilon, rng)
            dose = rl_agent.ACTIONS[a]
        else:
            a, dose = controller.act(bv_meas, s, target, period)
        u = dose_to_rate(dose, weight)

        if steady_loss:
            z1, z2 = prop.advance_period(z1, z2, u)
        else:
            for j in range(prop.n_sub):
                w = u - scenario.loss_rate(t + j * scenario.dt)
                z1, z2 = prop.advance_substep(z1, z2, w)

        bv_next = v_b0 * (1.0 + c1 * z1 + c2 * z2)
        if not (math.isfinite(bv_next) and bv_next > 0):
            raise SimulationFault(f"blood volume left the physical range at t={t + period}: {bv_next}")
        bv_meas_next = measure(bv_next, noise, rng) if noisy else bv_next
        r = rl_agent.reward(abs(bv_meas - target) / 1000.0, abs(bv_meas_next - target) / 1000.0)
        if training:
            s_next = rl_agent.discretize(bv_meas_next, target)
            rl_agent.q_update(q, s, a, r, s_next, gamma, mu)

        records.append(StepRecord(t, bv, bv_meas, s, a, dose, u, r))
        bv, bv_meas = bv_next, bv_meas_next
        if training and s in GOAL_STATES:
            log.terminal = True
            break
    return log


def train(
    config: TrainingConfig,
    scenario_template: ScenarioConfig,
    q: QTable | None = None,
    on_episode: Callable[[int, QTable, EpisodeLog], None] | None = None,
) -> QTable:
    """Q-learning over ``config.episodes`` noise-free episodes from random initial BVs."""
    config.check_coverage(scenario_template.bv_target)
    rng = make_rng(scenario_template.seed, TRAIN_STREAM)
    q = QTable() if q is None else q
    agent = RLController(q)
    lo, hi = config.init_bv_range
    base = replace(scenario_template, noise=NoiseModel(), name="train")
    for ep in range(config.episodes):
        bv0 = lo + (hi - lo) * rng.random()
        log = run_episode(
            replace(base, bv_initial=bv0),
            agent,
            rng,
            mode="train",
            learning=config.learning,
            episode_index=ep,
            max_steps=config.max_steps_per_episode,
        )
        if on_episode is not None:
            on_episode(ep, q, log)
    unvisited = q.unvisited_states()
    if config.episodes > 0 and unvisited:
        warnings.warn(f"states never updated during training: {unvisited}", RuntimeWarning, stacklevel=2)
    return q


def evaluate(controller: Controller, scenario: ScenarioConfig) -> tuple[EpisodeLog, MetricsReport]:
    """Full-horizon run without exploration; metrics use the true BV at every control step."""
    rng = make_rng(scenario.seed, EVAL_STREAM)
    log = run_episode(scenario, controller, rng, mode="eval")
    report = compute_metrics(log.bv_true, scenario.bv_target, scenario=scenario.name)
    return log, report


def evaluate_many(jobs: Sequence[tuple[Controller, ScenarioConfig]], workers: int = 1):
    """Evaluate independent (controller, scenario) pairs, optionally in worker processes.

    Results are returned in job order; each job owns its own random stream, so
    the outcome does not depend on ``workers``.
    """
    if workers <= 1 or len(jobs) <= 1:
        return [evaluate(c, s) for c, s in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_job, jobs))


def _evaluate_job(job):
    return evaluate(*job)
