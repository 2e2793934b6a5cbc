import pytest

from resus_rl.config import parse_config
from resus_rl.errors import ConfigError


def write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


def test_empty_file_gives_defaults(tmp_path):
    exp = parse_config(write(tmp_path, ""))
    sc, tr = exp.scenario, exp.training
    assert (sc.bv_initial, sc.bv_target, sc.duration, sc.control_period) == (3940.0, 5000.0, 100.0, 1.0)
    assert (tr.learning.epsilon, tr.learning.gamma, tr.learning.mu0, tr.learning.mu_half_every) == (0.5, 0.69, 0.2, 1000)
    assert tr.episodes == 30_000
    assert exp.noise.amplitude == 250.0 and exp.noise.kind.value == "uniform"
    assert not exp.noise_enabled and sc.noise.kind.value == "none"
    assert exp.pid_gains is None and exp.pid_grid is None


def test_none_path_gives_defaults():
    assert parse_config(None).training.episodes == 30_000


@pytest.mark.parametrize(
    "text, key",
    [
        ("[training]\nepisodes = -1\n", "episodes"),
        ("[scenario]\nduration = 100.0\ncontrol_period = 3.0\n", "duration"),
        ("[scenario]\nbogus = 1\n", "bogus"),
        ("[nope]\nx = 1\n", "nope"),
        ("[learning]\ngamma = 1.5\n", "gamma"),
        ("[noise]\nkind = \"gaussian\"\n", "kind"),
        ("[training]\nepisodes = 1.5\n", "episodes"),
        ("[patient]\nk = 0\n", "k"),
        ("[pid]\nkp = -3\n", "kp"),
    ],
)
def test_validation_errors_name_the_key(tmp_path, text, key):
    with pytest.raises(ConfigError, match=key) as info:
        parse_config(write(tmp_path, text))
    assert info.value.key == key


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "absent.toml")


def test_parse_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config(write(tmp_path, "[scenario\n"))


def test_full_config(tmp_path):
    exp = parse_config(
        write(
            tmp_path,
            """
[scenario]
seed = 7
hemorrhage = [[10.0, 20.0, 5.0]]
[patient]
alpha = 0.8
[noise]
enabled = true
amplitude = 100.0
[pid]
kp = 100.0
ki = 1.0
[tuning]
kp = [1.0, 3.0]
ki = [0.1]
kd = [0.0, 1.0]
[run]
workers = 2
""",
        )
    )
    assert exp.scenario.seed == 7
    assert exp.scenario.hemorrhage == ((10.0, 20.0, 5.0),)
    assert exp.scenario.patient.alpha == 0.8
    assert exp.scenario.noise.amplitude == 100.0 and exp.noise_enabled
    assert exp.pid_gains.kp == 100.0
    assert len(exp.pid_grid) == 4
    assert exp.workers == 2
    assert exp.snapshot()["noise"]["enabled"] is True


def test_noise_toggle():
    exp = parse_config(None)
    assert exp.scenario_with_noise(True).noise.amplitude == 250.0
    assert exp.scenario_with_noise(False).noise.kind.value == "none"
    assert exp.scenario_with_noise(True).name != exp.scenario_with_noise(False).name
