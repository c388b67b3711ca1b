"""Singular tree calculus, power counting, a torus solver and Monte Carlo
scaling studies for semilinear heat equations with Gaussian free field data."""

import json

from ._wildlab import (
    ConfigError,
    DomainError,
    HorizonTooLarge,
    enumerate_trees,
    fit_loglog,
    kappa_guard,
    noise_bound,
    run_cli,
    sample_gff,
    sha256_file,
    tree_stats,
)
from . import _wildlab

__all__ = [
    "ConfigError",
    "DomainError",
    "HorizonTooLarge",
    "certify",
    "enumerate_trees",
    "fit_loglog",
    "kappa_guard",
    "noise_bound",
    "params_check",
    "run_cli",
    "sample_gff",
    "sha256_file",
    "study",
    "tree_stats",
]


def params_check(d, kappa, n=2):
    """Report of the exponent conditions for the default parameter choice."""
    return json.loads(_wildlab._params_check(d, kappa, n))


def certify(tree, d=3.0, kappa=0.0, kind="plain", theta="0", n=2):
    """One entry per pairing of the two-point forest of ``tree``."""
    return json.loads(_wildlab._certify(tree, d, kappa, kind, str(theta), n))


def study(kind, **config):
    """Run a study; keyword arguments override the study's default config."""
    return json.loads(_wildlab._study(kind, json.dumps(config)))
