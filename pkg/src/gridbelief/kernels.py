"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise the numpy
implementation in ``_pycore`` is loaded. Set ``GRIDBELIEF_PURE_PYTHON=1`` to
force the fallback.
"""

import os

from gridbelief import _pycore

TABLE, GAMMA, RATE = _pycore.TABLE, _pycore.GAMMA, _pycore.RATE
HIT, SHORT_RANGE, MAX_RANGE = _pycore.HIT, _pycore.SHORT_RANGE, _pycore.MAX_RANGE


def _load():
    if os.environ.get("GRIDBELIEF_PURE_PYTHON"):
        return _pycore
    try:
        from gridbelief import _core
    except ImportError:
        return _pycore
    return _core


backend = _load()
BACKEND = backend.BACKEND
HAVE_COMPILED = BACKEND != "python"

trace = backend.trace
scan_loglik = backend.scan_loglik
beam_loglik = backend.beam_loglik
accumulate = backend.accumulate


def available_backends():
    """Name -> module for every importable backend."""
    found = {"python": _pycore}
    try:
        from gridbelief import _core
    except ImportError:
        pass
    else:
        found["cython"] = _core
    return found
