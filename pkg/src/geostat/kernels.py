"""Pair-counting backend, compiled when available.

Set ``GEOSTAT_PURE_PYTHON=1`` to force the numpy/scipy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("GEOSTAT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

pair_hist_self = _impl.pair_hist_self
pair_hist_cross = _impl.pair_hist_cross
close_pairs = _impl.close_pairs
label_hist = _impl.label_hist

__all__ = ["BACKEND", "pair_hist_self", "pair_hist_cross", "close_pairs", "label_hist"]
