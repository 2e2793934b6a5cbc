"""Saturated PID dosing baseline with clamping anti-windup.

Error is ``setpoint - measurement`` in liters, so a hypovolemic patient yields a
positive error and a positive dose. The derivative acts on the (filtered)
measurement to avoid setpoint kick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, ControllerFault

DOSE_MIN = 0.0
DOSE_MAX = 25.0


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    derivative_filter_tau: float = 1.0

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "derivative_filter_tau"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"pid.{name} must be finite and >= 0, got {value!r}", key=name)

    def as_dict(self) -> dict:
        return {
            "kp": self.kp,
            "ki": self.ki,
            "kd": self.kd,
            "derivative_filter_tau": self.derivative_filter_tau,
        }


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0  # L*min
    last_measurement: float | None = None  # mL
    filtered_derivative: float = 0.0  # L/min of measurement


def pid_step(
    gains: PidGains,
    state: PidState,
    setpoint: float,
    measurement: float,
    dt: float,
    anti_windup: bool = True,
) -> tuple[float, PidState]:
    """One control update. Returns the dose (mL/kg/h, clamped to [0, 25]) and the new state.

    ``anti_windup=False`` exists only to build the unprotected comparison run.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    e = (setpoint - measurement) / 1000.0

    if state.last_measurement is None:
        d_f = 0.0
    else:
        raw = (measurement - state.last_measurement) / 1000.0 / dt
        tau = gains.derivative_filter_tau
        d_f = state.filtered_derivative + dt / (tau + dt) * (raw - state.filtered_derivative)

    integral = state.integral + e * dt
    unclamped = gains.kp * e + gains.ki * integral - gains.kd * d_f
    if anti_windup and (
        (unclamped > DOSE_MAX and e > 0) or (unclamped < DOSE_MIN and e < 0)
    ):
        integral = state.integral
        unclamped = gains.kp * e + gains.ki * integral - gains.kd * d_f

    if not math.isfinite(unclamped):
        raise ControllerFault(f"non-finite PID output for measurement {measurement}")
    dose = min(max(unclamped, DOSE_MIN), DOSE_MAX)
    return dose, PidState(integral, measurement, d_f)
