"""Structured and monolithic neural models under interventional shift."""

from ._core import (
    RESULTS_HEADER,
    IoError,
    ParameterError,
    Scm,
    StructuralError,
    default_config,
    generate_graph,
    is_acyclic,
    resolve_config,
    run_adaptation_sweep,
    run_generalization_sweep,
    shd,
    version,
)
from .results import parse_results

__version__ = version()

__all__ = [
    "RESULTS_HEADER",
    "IoError",
    "ParameterError",
    "Scm",
    "StructuralError",
    "default_config",
    "generate_graph",
    "is_acyclic",
    "parse_results",
    "resolve_config",
    "run_adaptation_sweep",
    "run_generalization_sweep",
    "shd",
    "version",
]
