"""Kernel backend selection.

The compiled extension is preferred; set ``GLOBAL_AWARE_PURE_PYTHON=1`` to
force the NumPy fallback. Call sites must go through this module's
attributes (``kernels.min_sum``) so :func:`use_backend` takes effect.
"""
import os

from . import _fallback

try:
    from . import _speedups
except ImportError:  # extension not built
    _speedups = None

_NAMES = ("min_sum", "lcs_length", "rank_candidates")

BACKEND = None


def available_backends():
    return ["compiled", "python"] if _speedups is not None else ["python"]


def use_backend(name):
    """Switch kernel implementation to ``"compiled"`` or ``"python"``."""
    global BACKEND
    if name == "compiled":
        if _speedups is None:
            raise RuntimeError("compiled kernels are not built")
        module = _speedups
    elif name == "python":
        module = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    for fn in _NAMES:
        globals()[fn] = getattr(module, fn)
    BACKEND = name


if _speedups is not None and not os.environ.get("GLOBAL_AWARE_PURE_PYTHON"):
    use_backend("compiled")
else:
    use_backend("python")
