"""Hot loops with a numba and a pure-numpy implementation.

The backend is chosen once from ``RDBN_BACKEND`` (``numba``, the default,
or ``numpy``) and can be switched at runtime with :func:`set_backend`.
Both implementations consume the random generator in the same order.
"""
import importlib
import os
import warnings

_NAMES = ("crt_counts", "multinomial_rows", "split_ragged", "dirichlet_rows",
          "ztp_draws", "psi_accumulate", "sample_x_step")

_current = None
_module = None


def _load(name):
    if name == "numba":
        return importlib.import_module("rdbn.kernels._nb")
    if name == "numpy":
        return importlib.import_module("rdbn.kernels._np")
    raise ValueError(f"unknown kernel backend {name!r}; expected 'numba' or 'numpy'")


def set_backend(name):
    """Select the kernel backend; returns the previously active name."""
    global _current, _module
    previous = _current
    try:
        mod = _load(name)
    except ImportError:
        if name != "numba":
            raise
        warnings.warn("numba unavailable, falling back to the numpy kernels")
        name, mod = "numpy", _load("numpy")
    _current, _module = name, mod
    return previous


def backend():
    return _current


def get(name):
    """Return kernel ``name`` from the active backend."""
    return getattr(_module, name)


def __getattr__(attr):
    if attr in _NAMES:
        return getattr(_module, attr)
    raise AttributeError(attr)


set_backend(os.environ.get("RDBN_BACKEND", "numba").strip().lower() or "numba")
