"""Python bindings for the ookfso C++ core."""

import json as _json

from . import _ookfso
from ._ookfso import (
    Error,
    compose as _compose,
    f1,
    fit_scintillation,
    generate_bits,
    gradcheck,
    load_dataset,
    predict,
    sample_thermal,
    sample_turbulence,
    score,
)

__all__ = [
    "Error",
    "compose",
    "default_config",
    "f1",
    "fit_scintillation",
    "generate",
    "generate_bits",
    "gradcheck",
    "load_dataset",
    "predict",
    "sample_thermal",
    "sample_turbulence",
    "score",
    "sweep_snr",
    "sweep_window",
    "train",
    "validate_config",
]


def _dump(config):
    return "" if config is None else _json.dumps(config)


def default_config():
    return _json.loads(_ookfso.default_config())


def validate_config(config):
    """Return the fully populated config, raising Error when it is invalid."""
    return _json.loads(_ookfso.validate_config(_dump(config)))


def compose(channel=None, bits=None, noise_only_bits=0):
    """Samples and truth bits of one waveform; channel is a dict of overrides."""
    return _compose(_json.dumps(channel or {}), bits, noise_only_bits)


def generate(config=None):
    return _ookfso.generate(_dump(config))


def train(config, stage, data, val=""):
    return _ookfso.train(_dump(config), stage, data, val)


def sweep_window(config=None):
    return _json.loads(_ookfso.sweep_window(_dump(config)))


def sweep_snr(config=None):
    return _ookfso.sweep_snr(_dump(config))
