"""Kernel backend selection.

The compiled extension is used when it imports; set ``PANBAYES_PURE_PYTHON=1``
to force the pure-Python twins.
"""

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("PANBAYES_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

sample_without_replacement = _impl.sample_without_replacement
hit_positions = _impl.hit_positions
scatter_last = _impl.scatter_last

__all__ = ["BACKEND", "sample_without_replacement", "hit_positions", "scatter_last"]
