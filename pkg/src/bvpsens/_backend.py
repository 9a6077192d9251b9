"""Selects the integration kernel: compiled extension if built, else pure Python."""

from . import _kernels_py

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = "compiled" if _compiled is not None else "python"


def available():
    return sorted(_BACKENDS)


def current():
    return _active


def set_backend(name):
    """Switch the kernel used by subsequent integrations; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available()}")
    prev, _active = _active, name
    return prev


def integrate_tape(*args):
    return _BACKENDS[_active].integrate_tape(*args)
