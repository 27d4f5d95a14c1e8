"""Kernel backend selection.

The compiled extension is used when importable; set ``TBSPLIT_PURE_PYTHON=1``
to force the pure-Python kernels.
"""

import os

from . import _pykernels

FCFS, LCFS, RANDOM = _pykernels.FCFS, _pykernels.LCFS, _pykernels.RANDOM

if os.environ.get("TBSPLIT_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

lindley_backlog = _impl.lindley_backlog
bucket_departures = _impl.bucket_departures
compensated_cumsum = _impl.compensated_cumsum
