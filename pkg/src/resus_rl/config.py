"""TOML experiment configuration.

Every key is optional; an empty file yields the nominal experiment
(3,940 mL -> 5,000 mL over 100 min, 30,000 training episodes). Example::

    [scenario]
    bv_initial = 3940.0
    bv_target = 5000.0
    duration = 100.0
    control_period = 1.0
    seed = 42
    hemorrhage = [[10.0, 20.0, 5.0]]   # (start min, end min, mL/min)

    [patient]
    alpha = 0.5
    k = 0.1
    weight = 70.0

    [noise]
    enabled = false
    kind = "uniform"
    amplitude = 250.0

    [training]
    episodes = 30000
    init_bv_range = [2800.0, 6200.0]
    max_steps_per_episode = 100

    [learning]
    gamma = 0.69
    epsilon = 0.5
    mu0 = 0.2
    mu_half_every = 1000

    [pid]            # fixed gains; omit the section to grid-tune
    kp = 100.0
    ki = 1.0
    kd = 0.0
    derivative_filter_tau = 1.0

    [tuning]         # override the tuning grid
    kp = [1.0, 3.0]
    ki = [0.1]
    kd = [0.0]

    [run]
    workers = 1
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .harness import ScenarioConfig, TrainingConfig
from .hemodynamics import NoiseKind, NoiseModel, PatientParams
from .pid import PidGains
from .rl_agent import LearningParams
from .tuning import KD_GRID, KI_GRID, KP_GRID

DEFAULT_NOISE_AMPLITUDE = 250.0


def _number(section, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}", key=key)
    return float(value)


def _integer(section, key, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}", key=key)
    return value


def _boolean(section, key, value):
    if not isinstance(value, bool):
        raise ConfigError(f"{section}.{key} must be true or false, got {value!r}", key=key)
    return value


def _string(section, key, value):
    if not isinstance(value, str):
        raise ConfigError(f"{section}.{key} must be a string, got {value!r}", key=key)
    return value


def _number_list(length=None):
    def convert(section, key, value):
        if not isinstance(value, list) or (length is not None and len(value) != length):
            want = f"a list of {length} numbers" if length else "a list of numbers"
            raise ConfigError(f"{section}.{key} must be {want}, got {value!r}", key=key)
        return [_number(section, key, v) for v in value]

    return convert


def _segments(section, key, value):
    if not isinstance(value, list):
        raise ConfigError(f"{section}.{key} must be a list of [start, end, rate] triples", key=key)
    return tuple(tuple(_number_list(3)(section, key, seg)) for seg in value)


SCHEMA = {
    "scenario": {
        "bv_initial": _number,
        "bv_target": _number,
        "duration": _number,
        "control_period": _number,
        "dt": _number,
        "seed": _integer,
        "name": _string,
        "hemorrhage": _segments,
    },
    "patient": {"alpha": _number, "k": _number, "weight": _number},
    "noise": {"enabled": _boolean, "kind": _string, "amplitude": _number},
    "training": {
        "episodes": _integer,
        "init_bv_range": _number_list(2),
        "max_steps_per_episode": _integer,
    },
    "learning": {"gamma": _number, "epsilon": _number, "mu0": _number, "mu_half_every": _integer},
    "pid": {"kp": _number, "ki": _number, "kd": _number, "derivative_filter_tau": _number},
    "tuning": {"kp": _number_list(), "ki": _number_list(), "kd": _number_list(), "derivative_filter_tau": _number},
    "run": {"workers": _integer},
}


@dataclass
class Experiment:
    """Validated contents of a configuration file."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    pid_gains: PidGains | None = None
    noise_enabled: bool = False
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(DEFAULT_NOISE_AMPLITUDE, NoiseKind.UNIFORM))
    pid_grid: list[PidGains] | None = None
    workers: int = 1
    raw: dict = field(default_factory=dict)

    def scenario_with_noise(self, enabled: bool) -> ScenarioConfig:
        """The scenario with the configured noise model switched on or off."""
        if enabled:
            return replace(self.scenario, noise=self.noise, name=f"{self.scenario.name}-noise")
        return replace(self.scenario, noise=NoiseModel(), name=f"{self.scenario.name}-nonoise")

    def snapshot(self) -> dict:
        """Fully resolved configuration, for manifests and reports."""
        s, tr = self.scenario, self.training
        return {
            "scenario": {
                "bv_initial": s.bv_initial,
                "bv_target": s.bv_target,
                "duration": s.duration,
                "control_period": s.control_period,
                "dt": s.dt,
                "seed": s.seed,
                "name": s.name,
                "hemorrhage": [list(seg) for seg in s.hemorrhage],
            },
            "patient": {"alpha": s.patient.alpha, "k": s.patient.k, "weight": s.patient.weight},
            "noise": {"enabled": self.noise_enabled, "kind": self.noise.kind.value, "amplitude": self.noise.amplitude},
            "training": {
                "episodes": tr.episodes,
                "init_bv_range": list(tr.init_bv_range),
                "max_steps_per_episode": tr.max_steps_per_episode,
            },
            "learning": {
                "gamma": tr.learning.gamma,
                "epsilon": tr.learning.epsilon,
                "mu0": tr.learning.mu0,
                "mu_half_every": tr.learning.mu_half_every,
            },
            "pid": None if self.pid_gains is None else self.pid_gains.as_dict(),
            "run": {"workers": self.workers},
        }


def _validate(doc: dict) -> dict:
    out = {}
    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", key=section)
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table", key=section)
        keys = SCHEMA[section]
        out[section] = {}
        for key, value in body.items():
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}", key=key)
            out[section][key] = keys[key](section, key, value)
    return out


def build_experiment(doc: dict) -> Experiment:
    """Turn a parsed TOML document into validated configuration objects."""
    cfg = _validate(doc)
    get = lambda section: cfg.get(section, {})  # noqa: E731

    sc = get("scenario")
    if "seed" in sc and not 0 <= sc["seed"] < 2**64:
        raise ConfigError("scenario.seed must be a 64-bit unsigned integer", key="seed")
    patient = PatientParams(v_b0=sc.get("bv_initial", 3940.0), **get("patient"))

    noise_cfg = dict(get("noise"))
    enabled = noise_cfg.pop("enabled", False)
    try:
        kind = NoiseKind(noise_cfg.get("kind", NoiseKind.UNIFORM.value))
    except ValueError:
        raise ConfigError(f"noise.kind must be 'none' or 'uniform', got {noise_cfg['kind']!r}", key="kind") from None
    noise = NoiseModel(noise_cfg.get("amplitude", DEFAULT_NOISE_AMPLITUDE), kind)

    scenario = ScenarioConfig(
        patient=patient,
        noise=noise if enabled else NoiseModel(),
        **sc,
    )

    tr = dict(get("training"))
    if "init_bv_range" in tr:
        tr["init_bv_range"] = tuple(tr["init_bv_range"])
    training = TrainingConfig(learning=LearningParams(**get("learning")), **tr)
    training.check_coverage(scenario.bv_target)

    pid_gains = PidGains(**get("pid")) if "pid" in cfg else None

    pid_grid = None
    if "tuning" in cfg:
        t = get("tuning")
        tau = t.get("derivative_filter_tau", 1.0)
        pid_grid = [
            PidGains(kp, ki, kd, derivative_filter_tau=tau)
            for kp in t.get("kp", KP_GRID)
            for ki in t.get("ki", KI_GRID)
            for kd in t.get("kd", KD_GRID)
        ]
        if not pid_grid:
            raise ConfigError("tuning grid is empty", key="tuning")

    workers = get("run").get("workers", 1)
    if workers < 1:
        raise ConfigError("run.workers must be >= 1", key="workers")

    return Experiment(
        scenario=scenario,
        training=training,
        pid_gains=pid_gains,
        noise_enabled=enabled,
        noise=noise,
        pid_grid=pid_grid,
        workers=workers,
        raw=doc,
    )


def parse_config(path) -> Experiment:
    """Load and validate a TOML config. ``None`` means all defaults."""
    if path is None:
        return build_experiment({})
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", key="config")
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", key="config") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", key="config") from exc
    return build_experiment(doc)

