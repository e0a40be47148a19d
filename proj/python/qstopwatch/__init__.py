"""Detection-time statistics under repeated projective measurement."""

import json
from pathlib import Path

from ._core import (
    AnnihilatedState,
    ConfigError,
    ContaminationError,
    DimensionError,
    DomainError,
    Error,
    GridError,
    IoError,
    ValidationError,
    branch_weights,
    detection_distribution,
    distribution_from_hazard,
    hazard_series,
    run_chain,
    scenario_matrices,
    zeno_sweep,
)
from . import _core


def _text(config):
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, Path):
        return config.read_text()
    return config


def simulate(config):
    """Run a configuration (dict, JSON text or Path); returns (report, csv_text)."""
    report, csv = _core.run_config(_text(config))
    return json.loads(report), csv


def sweep_dt(config, dts):
    report, csv = _core.sweep_dt(_text(config), list(dts))
    return json.loads(report), csv


def scenario(config):
    return scenario_matrices(_text(config))


__all__ = [
    "AnnihilatedState",
    "ConfigError",
    "ContaminationError",
    "DimensionError",
    "DomainError",
    "Error",
    "GridError",
    "IoError",
    "ValidationError",
    "branch_weights",
    "detection_distribution",
    "distribution_from_hazard",
    "hazard_series",
    "run_chain",
    "scenario",
    "simulate",
    "sweep_dt",
    "zeno_sweep",
]
