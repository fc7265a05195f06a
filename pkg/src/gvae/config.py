"""Run configuration: plain-text "key = value" files with section headers.

Every key has a documented default; unknown sections or keys are
rejected with a list of all offending entries.  The GVAE_CONFIG
environment variable supplies the config path when none is given, and
command-line --set overrides beat the file.
"""

import configparser
import hashlib
import json
import os

__all__ = ["RunConfig", "ConfigError", "load_config", "DEFAULTS"]

# (default, parser) per section.key
DEFAULTS = {
    "stft": {
        "n_fft": (1024, int),
        "hop": (256, int),
    },
    "model": {
        "variant": ("M1", str),  # M1 | M2-VAD | M2-IBM
        "latent_dim": (16, int),
        "hidden_units": (128, int),
    },
    "train": {
        "lr": (1e-3, float),
        "batch_size": (128, int),
        "patience": (20, int),
        "max_epochs": (200, int),
        "seed": (0, int),
    },
    "mcem": {
        "n_iters": (200, int),
        "n_samples": (10, int),
        "burn_in": (5, int),
        "proposal_std": (0.1, float),
        "nmf_rank": (10, int),
        "seed": (0, int),
    },
    "paths": {
        "manifest": ("", str),
        "corpus_dir": ("", str),
        "checkpoint_dir": ("", str),
        "output_dir": ("", str),
    },
    "classifier": {
        "backend": ("", str),  # dnn-vad | dnn-ibm | spp-ibm | oracle
        "checkpoint": ("", str),
    },
}


class ConfigError(ValueError):
    pass


class RunConfig:
    def __init__(self, values):
        self._values = values

    def get(self, section, key):
        return self._values[section][key]

    def sections(self):
        return self._values

    def hash(self) -> str:
        canon = json.dumps(self._values, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def __getitem__(self, section):
        return self._values[section]


def _defaults_dict():
    return {s: {k: v for k, (v, _) in keys.items()} for s, keys in DEFAULTS.items()}


def _apply(values, section, key, raw, problems):
    if section not in DEFAULTS:
        problems.append("unknown section [%s]" % section)
        return
    if key not in DEFAULTS[section]:
        problems.append("unknown key %s.%s" % (section, key))
        return
    _, parser = DEFAULTS[section][key]
    try:
        values[section][key] = parser(raw)
    except (TypeError, ValueError):
        problems.append("bad value for %s.%s: %r" % (section, key, raw))


def load_config(path=None, overrides=()) -> RunConfig:
    """Build a RunConfig from defaults, an optional file and overrides.

    overrides are "section.key=value" strings.  Raises ConfigError
    listing every offending key at once.
    """
    values = _defaults_dict()
    problems = []

    if path is None:
        path = os.environ.get("GVAE_CONFIG") or None
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError("config file not found: %s" % path)
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError("cannot parse %s: %s" % (path, exc)) from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(values, section, key, raw, problems)

    for item in overrides:
        target, _, raw = item.partition("=")
        section, _, key = target.partition(".")
        if not raw and "=" not in item:
            problems.append("override %r is not section.key=value" % item)
            continue
        _apply(values, section, key, raw, problems)

    if problems:
        raise ConfigError("; ".join(problems))
    return RunConfig(values)
