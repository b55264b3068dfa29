"""Python front end to the postcon simulation core.

Configs and manifests cross the boundary as JSON, so dicts here mirror the
files the command-line tool reads and writes.
"""

import json
from pathlib import Path

from . import _postcon
from ._postcon import (
    ConfigError,
    check_hanson_wright,
    check_hoeffding,
    epsilon_schedule,
    equipartition_trace,
    hellinger_tv,
    kl_rate,
    link,
    pointwise_kl,
    posterior_h_draws,
    preset_names,
    sieve_complement_mass,
    wilson_interval,
)

__version__ = _postcon.code_version

STUDIES = ("kl-rate", "equipartition", "sieve-mass", "posterior", "predictive", "bounds")


def preset(name):
    return json.loads(_postcon.preset_config(name))


def normalize_config(config):
    """Fill defaults and validate; raises ConfigError naming the bad field."""
    return json.loads(_postcon.normalize_config(json.dumps(config)))


def run(config, study):
    """Run one study and return the merged manifest as a dict."""
    if study not in STUDIES:
        raise ValueError(f"unknown study {study!r}; expected one of {', '.join(STUDIES)}")
    return json.loads(_postcon.run_experiment(json.dumps(config), study))


def report(out_dir):
    return _postcon.emit_report(str(Path(out_dir)))


__all__ = [
    "ConfigError",
    "STUDIES",
    "check_hanson_wright",
    "check_hoeffding",
    "epsilon_schedule",
    "equipartition_trace",
    "hellinger_tv",
    "kl_rate",
    "link",
    "normalize_config",
    "pointwise_kl",
    "posterior_h_draws",
    "preset",
    "preset_names",
    "report",
    "run",
    "sieve_complement_mass",
    "wilson_interval",
]
