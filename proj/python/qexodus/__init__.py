"""Markov chains and diffusions conditioned to avoid a moving boundary."""

import json

from ._core import (
    Chain,
    Error,
    __version__,
    beta_infinity,
    brownian_passage_density,
    brownian_survival,
    quasi_ergodic,
    scale_function_linear,
    simulate_survival,
    validate_config,
)
from . import _core


def load_chain(doc):
    """Chain from a dict or a JSON string."""
    return Chain.from_json(doc if isinstance(doc, str) else json.dumps(doc))


def certify(chain, t0_max=3, horizon=400):
    return json.loads(_core.certify(chain, t0_max, horizon))


def qsd_fixed(chain):
    return json.loads(_core.qsd_fixed(chain))


def quasi_limiting(chain, mu, t_max=200, tol=1e-9):
    return json.loads(_core.quasi_limiting(chain, mu, t_max, tol))


def run_config(config, base_dir=".", threads=1):
    """Runs a config (dict or JSON text) and returns the report as a dict."""
    text = config if isinstance(config, str) else json.dumps(config)
    return json.loads(_core.run_config(text, base_dir, threads))


__all__ = [
    "Chain",
    "Error",
    "__version__",
    "beta_infinity",
    "brownian_passage_density",
    "brownian_survival",
    "certify",
    "load_chain",
    "qsd_fixed",
    "quasi_ergodic",
    "quasi_limiting",
    "run_config",
    "scale_function_linear",
    "simulate_survival",
    "validate_config",
]
