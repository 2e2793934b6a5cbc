"""Virtual patient: lumped-parameter blood-volume response to fluid infusion.

The normalized blood-volume change ``x = (BV - V_B0) / V_B0`` obeys

    x'' + k x' = (u' - v') / V_B0 + k (u - v) / (V_B0 (1 + alpha))

which is realized without input derivatives as

    z1' = z2
    z2' = -k z2 + (u - v)
    x   = c1 z1 + c2 z2,   c1 = k / (V_B0 (1 + alpha)),   c2 = 1 / V_B0

Rates are in mL/min, volumes in mL, time in minutes.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SimulationFault

#: Internal integration step of the patient model (min).
DEFAULT_DT = 0.1


@dataclass(frozen=True)
class PatientParams:
    """Physiological constants of the blood-volume model.

    ``alpha`` and ``k`` are stand-in values; the scenario they come from does
    not publish them. ``weight`` converts mL/kg/h doses to mL/min.
    """

    v_b0: float = 3940.0
    alpha: float = 0.5
    k: float = 0.1
    weight: float = 70.0

    def __post_init__(self):
        for name in ("v_b0", "alpha", "k", "weight"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"patient.{name} must be finite and > 0, got {value!r}", key=name)

    @property
    def c1(self) -> float:
        return self.k / (self.v_b0 * (1.0 + self.alpha))

    @property
    def c2(self) -> float:
        return 1.0 / self.v_b0


@dataclass(frozen=True)
class HemoState:
    z1: float = 0.0
    z2: float = 0.0
    t: float = 0.0


@dataclass(frozen=True)
class FlowInputs:
    """Infusion rate ``u`` and hemorrhage rate ``v``, both mL/min."""

    u: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        if self.u < 0 or self.v < 0:
            raise ValueError(f"flow rates must be non-negative, got u={self.u}, v={self.v}")


class NoiseKind(str, enum.Enum):
    NONE = "none"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class NoiseModel:
    """Additive measurement noise on the blood-volume reading."""

    amplitude: float = 0.0
    kind: NoiseKind = NoiseKind.NONE

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ConfigError(f"noise.amplitude must be >= 0, got {self.amplitude!r}", key="amplitude")


def derivatives(params: PatientParams, state: HemoState, inputs: FlowInputs) -> tuple[float, float]:
    w = inputs.u - inputs.v
    return state.z2, -params.k * state.z2 + w


def step_rk4(params: PatientParams, state: HemoState, inputs: FlowInputs, dt: float) -> HemoState:
    """Advance the patient by ``dt`` minutes with classical RK4, inputs held constant."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    k = params.k
    w = inputs.u - inputs.v
    z1, z2 = state.z1, state.z2

    # dz1 = z2, dz2 = -k z2 + w; written out to avoid rebuilding HemoState per stage
    a1, b1 = z2, -k * z2 + w
    z2b = z2 + 0.5 * dt * b1
    a2, b2 = z2b, -k * z2b + w
    z2c = z2 + 0.5 * dt * b2
    a3, b3 = z2c, -k * z2c + w
    z2d = z2 + dt * b3
    a4, b4 = z2d, -k * z2d + w

    n1 = z1 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    n2 = z2 + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
    if not (math.isfinite(n1) and math.isfinite(n2)):
        raise SimulationFault(f"non-finite patient state at t={state.t + dt}: z1={n1}, z2={n2}")
    return HemoState(n1, n2, state.t + dt)


def blood_volume(params: PatientParams, state: HemoState) -> float:
    """Absolute blood volume (mL)."""
    return params.v_b0 * (1.0 + params.c1 * state.z1 + params.c2 * state.z2)


def measure(bv_true: float, noise: NoiseModel, rng: np.random.Generator) -> float:
    """Noisy BV reading; draws exactly one uniform sample when noise is enabled."""
    if noise.kind is NoiseKind.NONE:
        return bv_true
    return bv_true + (2.0 * rng.random() - 1.0) * noise.amplitude


@functools.lru_cache(maxsize=64)
def _composed_rk4(k: float, dt: float, n: int) -> tuple[float, ...]:
    params = PatientParams(k=k)

    def run(state: HemoState, w: float) -> HemoState:
        # w split as u/v keeps FlowInputs non-negative
        inputs = FlowInputs(u=max(w, 0.0), v=max(-w, 0.0))
        for _ in range(n):
            state = step_rk4(params, state, inputs, dt)
        return state

    e1 = run(HemoState(1.0, 0.0), 0.0)
    e2 = run(HemoState(0.0, 1.0), 0.0)
    g = run(HemoState(0.0, 0.0), 1.0)
    return (e1.z1, e2.z1, e1.z2, e2.z2, g.z1, g.z2)


class PeriodPropagator:
    """Affine map equal to ``n_sub`` consecutive RK4 steps of size ``dt``.

    RK4 applied to a linear time-invariant system is itself affine in the state
    and the held input, so one control period can be collapsed to

        z_next = Phi @ z + Gamma * w

    The coefficients are obtained by running :func:`step_rk4` on basis states,
    so this is the same integrator, not an analytic discretization.
    """

    def __init__(self, params: PatientParams, dt: float = DEFAULT_DT, n_sub: int = 10):
        if n_sub < 1:
            raise ValueError("n_sub must be >= 1")
        self.params = params
        self.dt = dt
        self.n_sub = n_sub
        # z-dynamics depend on k only; v_b0 and alpha enter through the output map
        self.step_map = _composed_rk4(params.k, dt, 1)
        self.period_map = _composed_rk4(params.k, dt, n_sub)

    @staticmethod
    def _apply(m, z1: float, z2: float, w: float) -> tuple[float, float]:
        p11, p12, p21, p22, g1, g2 = m
        return p11 * z1 + p12 * z2 + g1 * w, p21 * z1 + p22 * z2 + g2 * w

    def advance_period(self, z1: float, z2: float, w: float) -> tuple[float, float]:
        return self._apply(self.period_map, z1, z2, w)

    def advance_substep(self, z1: float, z2: float, w: float) -> tuple[float, float]:
        return self._apply(self.step_map, z1, z2, w)
