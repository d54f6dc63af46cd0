"""INI run configuration mapped onto :class:`~opensslac.trainer.TrainConfig`.

Example::

    [run]
    domain = dummy
    k = 3
    seed = 0

    [optimisation]
    max_steps = 3000

Keys in ``[run]`` are required; every other key falls back to its default.
Tuples are written comma-separated; ``foreign`` as ``name=path, name=path``.
"""
from __future__ import annotations

import configparser
from dataclasses import fields
from pathlib import Path

from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


SECTIONS = {
    "run": ("domain", "k", "seed"),
    "optimisation": ("batch_size", "z_length", "z_distribution", "learning_rate", "beta1", "beta2",
                     "max_steps", "min_steps_before_stopping", "patience", "eval_every", "generator_objective"),
    "losses": ("w_labelled_ce", "w_fake_ce", "w_gan_unlabelled", "w_gan_labelled", "w_gan_fake"),
    "architecture": ("gen_base_filters", "gen_filters", "gen_bn_momentum", "disc_filters", "disc_dropout",
                     "disc_noise_std", "disc_leaky", "mlp_hidden", "mlp_depth", "mlp_dropout", "mlp_noise_std"),
    "data": ("mnist_dir", "foreign", "labelled_per_class", "unlabelled_per_class", "unlabelled_total",
             "val_fraction", "dummy_samples_per_blob"),
}
REQUIRED = SECTIONS["run"]

_DEFAULTS = TrainConfig()
_SECTION_OF = {key: sec for sec, keys in SECTIONS.items() for key in keys}
assert set(_SECTION_OF) == {f.name for f in fields(TrainConfig)}, "config sections out of sync with TrainConfig"


def _parse_value(key, text):
    default = getattr(_DEFAULTS, key)
    try:
        if key == "foreign":
            return tuple(p.strip() for p in text.split(",") if p.strip())
        if isinstance(default, tuple):
            return tuple(int(p) for p in text.split(",") if p.strip())
        if isinstance(default, bool):
            return text.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r} ({exc})") from None
    return text.strip()


def parse_config(text, source="<string>") -> TrainConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if _SECTION_OF.get(key) != section:
                where = f" (belongs in [{_SECTION_OF[key]}])" if key in _SECTION_OF else ""
                raise ConfigError(f"unknown key {key!r} in [{section}]{where}")
            values[key] = _parse_value(key, raw)
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s) in [run]: {', '.join(missing)}")
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), source=str(path))


def dump_config(config: TrainConfig) -> str:
    """INI text that :func:`parse_config` maps back to ``config``."""
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            v = getattr(config, key)
            lines.append(f"{key} = {', '.join(map(str, v)) if isinstance(v, tuple) else v}")
        lines.append("")
    return "\n".join(lines)
