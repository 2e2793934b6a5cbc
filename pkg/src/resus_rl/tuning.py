"""Deterministic grid-search tuning of the PID baseline."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .errors import ConfigError
from .harness import PIDController, ScenarioConfig, evaluate
from .hemodynamics import NoiseModel
from .pid import PidGains

KP_GRID = (1.0, 3.0, 10.0, 30.0, 100.0)
KI_GRID = (0.01, 0.03, 0.1, 0.3, 1.0)
KD_GRID = (0.0, 1.0, 3.0, 10.0)


def default_grid(tau: float = 1.0) -> list[PidGains]:
    return [
        PidGains(kp, ki, kd, derivative_filter_tau=tau)
        for kp, ki, kd in itertools.product(KP_GRID, KI_GRID, KD_GRID)
    ]


@dataclass(frozen=True)
class CandidateResult:
    gains: PidGains
    rmse: float  # L
    overshoot: float  # mL above target, >= 0

    def as_dict(self) -> dict:
        return {**self.gains.as_dict(), "rmse": self.rmse, "overshoot_ml": self.overshoot}


@dataclass(frozen=True)
class TuningResult:
    best: PidGains
    candidates: tuple[CandidateResult, ...]

    def as_dict(self) -> dict:
        return {
            "selected": self.best.as_dict(),
            "criterion": "min RMSE on the noise-free scenario; ties -> lower overshoot, then lower ki",
            "candidates": [c.as_dict() for c in self.candidates],
        }


def score_candidate(gains: PidGains, scenario: ScenarioConfig) -> CandidateResult:
    log, report = evaluate(PIDController(gains), scenario)
    overshoot = max(0.0, float(log.bv_true.max()) - scenario.bv_target)
    return CandidateResult(gains, report.rmse, overshoot)


def _score(args):
    return score_candidate(*args)


def tune_grid(scenario: ScenarioConfig, grid=None, workers: int = 1) -> TuningResult:
    """Pick the gain candidate with the lowest RMSE on the noise-free version of ``scenario``."""
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ConfigError("PID tuning grid is empty", key="grid")
    nominal = replace(scenario, noise=NoiseModel(), name=f"{scenario.name}-tuning")
    jobs = [(g, nominal) for g in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_score, jobs))
    else:
        results = [_score(j) for j in jobs]
    best = min(results, key=lambda c: (c.rmse, c.overshoot, c.gains.ki))
    return TuningResult(best.gains, tuple(results))
