"""Spherical CNNs for two-hemisphere cortical measure classification.

Submodules are loaded lazily (PEP 562) so that the command line can cap
BLAS thread pools via environment variables before numpy initializes.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("autodiff", "cli", "cohort", "config", "cortex", "errors",
               "evaluate", "grid", "layers", "spectral", "train", "verify",
               "wigner")


def __getattr__(name: str):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
