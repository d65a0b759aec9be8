"""INI configuration: packaged defaults, user overrides, strict key checking."""

import configparser
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .integrator import SimConfig
from .magnet import DeviceParams


class ConfigError(ValueError):
    """Malformed, missing or unknown configuration input."""


@dataclass(frozen=True)
class AnalysisConfig:
    theta_on: float = 0.6
    min_dwells: int = 200
    independence_threshold: float = 5.0
    min_r2: float = 0.8
    dt_markov: float = 1e-12

    def __post_init__(self):
        if not 0 < self.theta_on < 1:
            raise ValueError("theta_on must lie in (0, 1)")
        if self.min_dwells < 1:
            raise ValueError("min_dwells must be >= 1")
        if not self.dt_markov > 0:
            raise ValueError("dt_markov must be > 0")


@dataclass(frozen=True)
class SweepConfig:
    v_me_min: float = -0.2
    v_me_max: float = 0.2
    n_v_me: int = 9
    v_i_min: float = -0.2
    v_i_max: float = 0.2
    n_v_i: int = 9
    max_sim_time: float = 2e-5
    tau_window_min: float = 2e-10
    tau_window_max: float = 2e-8
    threads: int = 0

    def __post_init__(self):
        if self.n_v_me < 1 or self.n_v_i < 1:
            raise ValueError("grid sizes must be >= 1")
        if self.v_me_max < self.v_me_min or self.v_i_max < self.v_i_min:
            raise ValueError("sweep window bounds are reversed")
        if not self.max_sim_time > 0:
            raise ValueError("max_sim_time must be > 0")
        if not 0 < self.tau_window_min < self.tau_window_max:
            raise ValueError("need 0 < tau_window_min < tau_window_max")
        if self.threads < 0:
            raise ValueError("threads must be >= 0")

    @property
    def window(self):
        """((v_me_min, v_me_max), (v_i_min, v_i_max))."""
        return (self.v_me_min, self.v_me_max), (self.v_i_min, self.v_i_max)


@dataclass(frozen=True)
class RunConfig:
    device: DeviceParams
    sim: SimConfig
    analysis: AnalysisConfig
    sweep: SweepConfig
    raw: dict

    def to_ini(self):
        """Resolved configuration as INI text, every key materialized."""
        cp = configparser.ConfigParser(interpolation=None)
        for section, values in self.raw.items():
            cp[section] = values
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


_SECTIONS = {
    "device": DeviceParams,
    "sim": SimConfig,
    "analysis": AnalysisConfig,
    "sweep": SweepConfig,
}


def _parser():
    return configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)


def default_ini_text():
    return resources.files(__package__).joinpath("defaults.ini").read_text()


_TUPLE_KEYS = {"demag_factors", "polarizer_axis", "initial_m"}
_INT_KEYS = {"seed", "record_stride", "min_dwells", "n_v_me", "n_v_i", "threads"}


def _convert(key, text):
    text = text.strip()
    if key in _TUPLE_KEYS:
        return tuple(float(x) for x in text.split(","))
    if key == "stop_after_transitions":
        return int(text) if text else None
    if key in _INT_KEYS:
        return int(text)
    return float(text)


def load_config(path=None, overrides=None):
    """Defaults merged with an optional INI file and then `overrides`.

    `overrides` maps ``"section.key"`` to a string value, the way CLI flags
    arrive. Unknown sections or keys raise ConfigError.
    """
    cp = _parser()
    cp.read_string(default_ini_text(), source="defaults.ini")
    known = {s: set(cp[s]) for s in cp.sections()}

    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        user = _parser()
        try:
            user.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in user.sections():
            if section not in known:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, value in user[section].items():
                if key not in known[section]:
                    raise ConfigError(f"{path}: unknown key [{section}] {key}")
                cp[section][key] = value

    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in known or key not in known[section]:
            raise ConfigError(f"unknown override {dotted}")
        cp[section][key] = str(value)

    raw = {s: dict(cp[s]) for s in cp.sections()}
    built = {}
    for section, cls in _SECTIONS.items():
        try:
            kwargs = {k: _convert(k, v) for k, v in raw[section].items()}
            built[section] = cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
    return RunConfig(raw=raw, **built)


def default_config():
    return load_config()
