"""Hot-loop kernels with a numba backend and a pure-numpy fallback.

Set ``PMSPLAN_DISABLE_NUMBA=1`` to force the numpy backend; it is also used
automatically when numba cannot be imported.
"""

import os

from . import _numpy

_compiled = None
if os.environ.get("PMSPLAN_DISABLE_NUMBA", "").strip().lower() in ("", "0", "false", "no"):
    try:
        from . import _numba as _compiled
    except ImportError:  # pragma: no cover - depends on the environment
        _compiled = None

ADAPT_BATCH = _numpy.ADAPT_BATCH
BACKEND = "numba" if _compiled is not None else "numpy"


def get_backend(name: str | None = None):
    """Kernel module for ``name`` ("numba"/"numpy"); default is the active backend."""
    name = BACKEND if name is None else name
    if name == "numpy":
        return _numpy
    if name == "numba":
        if _compiled is None:
            import importlib

            return importlib.import_module(f"{__name__}._numba")  # ImportError if unavailable
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


_active = get_backend()
mh_segment = _active.mh_segment
column_losses = _active.column_losses
log_target = _active.log_target

__all__ = ["ADAPT_BATCH", "BACKEND", "get_backend", "mh_segment", "column_losses", "log_target"]
