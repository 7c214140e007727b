"""Generalized raking estimators for Cox regression in two-phase designs."""

import json

from ._grcox import (
    CalibrationFailure,
    Error,
    InputError,
    __version__,
    censoring_bound,
    draw_design,
    estimate,
    fit_cox,
    generate_cohort,
    known_methods,
    misclassification,
    raking_weights,
)
from . import _grcox


def _as_text(config):
    return config if isinstance(config, str) else json.dumps(config)


def parse_config(config, profile=None):
    """Validated config (dict or JSON text) with defaults filled in."""
    return json.loads(_grcox.parse_config(_as_text(config), profile))


def simulate(config, threads=1, profile=None):
    """Runs every cell of a config and returns a list of per-cell result dicts."""
    return _grcox.simulate(_as_text(config), threads, profile)


__all__ = [
    "CalibrationFailure",
    "Error",
    "InputError",
    "__version__",
    "censoring_bound",
    "draw_design",
    "estimate",
    "fit_cox",
    "generate_cohort",
    "known_methods",
    "misclassification",
    "parse_config",
    "raking_weights",
    "simulate",
]
