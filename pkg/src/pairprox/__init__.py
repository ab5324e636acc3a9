"""Solvers for structured inclusion problems 0 in F(x) where F need not be
monotone, built on warped and transformed resolvents of an operator pair."""

from . import applications, cli, errors, linalg, operators, resolvents, rng, solvers

__all__ = [
    "applications",
    "cli",
    "errors",
    "linalg",
    "operators",
    "resolvents",
    "rng",
    "solvers",
]

__version__ = "0.1.0"
