"""Python access to the rmfgl simulation core.

Configs are plain dicts with the same keys as the simtool JSON files.
"""

import json as _json

from . import _core
from ._core import (
    RmfglError,
    chen_stein_terms,
    empirical_tv,
    poisson_pmf,
    single_neuron_pmf,
    stein_solve,
)

__version__ = _core.__version__


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def validate_config(config):
    """Normalized copy of `config`; raises RmfglError (with `.code`) if invalid."""
    return _json.loads(_core.validate_config(_text(config)))


def simulate_gl(config, path_id=0):
    return _core.simulate_gl(_text(config), path_id)


def simulate_rmf(config, M, path_id=0, embedded=False):
    return _core.simulate_rmf(_text(config), M, path_id, embedded)


def picard_means(config, paths, threads=1):
    return _core.picard_means(_text(config), paths, threads)


def run_experiment(config, subcommand, out, seed=None, threads=1, force=False):
    """Runs one simtool subcommand in-process. Returns (all_pass, summary dict)."""
    ok, summary = _core.run_experiment(_text(config), subcommand, str(out), seed, threads, force)
    return ok, _json.loads(summary)


def emit_summary(out):
    return _json.loads(_core.emit_summary(str(out)))


__all__ = [
    "RmfglError",
    "chen_stein_terms",
    "emit_summary",
    "empirical_tv",
    "picard_means",
    "poisson_pmf",
    "run_experiment",
    "simulate_gl",
    "simulate_rmf",
    "single_neuron_pmf",
    "stein_solve",
    "validate_config",
]
