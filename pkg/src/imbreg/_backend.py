"""Select the compiled kernels when available, else the pure-Python ones.

Set ``IMBREG_PURE_PYTHON=1`` to force the fallback.
"""

import os

from imbreg import _purepy
from imbreg._purepy import RootSolverError

if os.environ.get("IMBREG_PURE_PYTHON", "") not in ("", "0"):
    _kernels = None
else:
    try:
        from imbreg import _kernels
    except ImportError:  # extension not built
        _kernels = None

if _kernels is not None:
    BACKEND = "cython"
    tlogistic_eval = _kernels.tlogistic_eval
else:
    BACKEND = "python"
    tlogistic_eval = _purepy.tlogistic_eval

__all__ = ["BACKEND", "RootSolverError", "tlogistic_eval"]
