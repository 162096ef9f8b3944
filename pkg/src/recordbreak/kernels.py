"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when importable; otherwise, or when
``RECORDBREAK_PURE_PYTHON`` is set to a non-empty value, the numpy versions in
``_pycore`` are used. ``BACKEND`` names the active one.
"""
import os

from . import _pycore

P_FLOOR = _pycore.P_FLOOR
P_CEIL = _pycore.P_CEIL

_KERNELS = ("record_marks", "truncnorm_latent", "simulate_days", "sv_coreg_sweep")


def _load_compiled():
    if os.environ.get("RECORDBREAK_PURE_PYTHON"):
        return None
    try:
        from . import _core
    except ImportError:
        return None
    return _core


_compiled = _load_compiled()
BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pycore

record_marks = _impl.record_marks
truncnorm_latent = _impl.truncnorm_latent
simulate_days = _impl.simulate_days
sv_coreg_sweep = _impl.sv_coreg_sweep


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"compiled"``."""
    if name == "python":
        return _pycore
    if name == "compiled":
        if _compiled is None:
            from . import _core  # raises ImportError if not built
            return _core
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def compiled_available():
    try:
        get_backend("compiled")
    except ImportError:
        return False
    return True
