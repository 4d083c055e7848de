"""Solver backend selection.

The fixed-point kernel exists twice: a numba-compiled version and a
pure-numpy reference.  `KRONEST_BACKEND` picks one:

    auto   use numba when importable, else numpy (default)
    numba  require the numba kernel
    numpy  force the pure-numpy path

Both implementations share one contract and are cross-checked in the test
suite; `benchmarks/bench_backends.py` compares their throughput.
"""

from __future__ import annotations

import os

from .errors import ConfigError

ENV_VAR = "KRONEST_BACKEND"
_VALID = ("auto", "numba", "numpy")


def resolve_backend(choice=None):
    """Return 'numba' or 'numpy' for a requested backend name."""
    if choice is None:
        choice = os.environ.get(ENV_VAR, "auto")
    choice = choice.strip().lower()
    if choice not in _VALID:
        raise ConfigError(f"{ENV_VAR} must be one of {_VALID}, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise ConfigError("numba backend requested but numba is not installed") from None
        return "numpy"
    return "numba"


BACKEND = resolve_backend()

if BACKEND == "numba":
    from . import _kernels_numba as kernels
else:
    from . import _kernels_numpy as kernels

__all__ = ["BACKEND", "ENV_VAR", "kernels", "resolve_backend"]
