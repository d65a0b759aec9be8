import pytest

from me_neuron.config import ConfigError, default_config, load_config


def test_defaults_load(cfg):
    assert cfg.device.damping_alpha == 0.9
    assert cfg.sim.dt == 1e-13
    assert cfg.analysis.theta_on == 0.6
    assert cfg.sweep.window == ((-0.2, 0.2), (-0.2, 0.2))


def test_file_and_override_precedence(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[sim]\nseed = 5\nt_max = 2e-6\n[device]\ntmr_ratio = 1.5\n")
    cfg = load_config(path, {"sim.seed": "9"})
    assert cfg.sim.seed == 9
    assert cfg.sim.t_max == 2e-6
    assert cfg.device.tmr_ratio == 1.5


def test_roundtrip_through_ini(tmp_path):
    cfg = load_config(overrides={"device.demag_factors": "0.8, 0.15, 0.05", "sim.seed": "3"})
    path = tmp_path / "r.ini"
    path.write_text(cfg.to_ini())
    again = load_config(path)
    assert again.device == cfg.device
    assert again.sim == cfg.sim
    assert again.sweep == cfg.sweep


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[sim]\nbogus = 1\n",
    "[sim]\ndt = -1\n",
    "[device]\ndemag_factors = 0.5, 0.5\n",
    "not an ini file",
])
def test_bad_files(tmp_path, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.ini")


def test_unknown_override():
    with pytest.raises(ConfigError):
        load_config(overrides={"sim.nope": "1"})


def test_default_config_is_fresh():
    assert default_config().device == default_config().device
