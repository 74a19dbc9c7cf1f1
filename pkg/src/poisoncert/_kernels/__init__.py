"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``POISONCERT_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names
the implementation in use ("cython" or "python").
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("POISONCERT_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

circle_sweep_block = _active.circle_sweep_block
pocket_epochs = _active.pocket_epochs
knn_add_scan = _active.knn_add_scan
knn_remove_scan = _active.knn_remove_scan

__all__ = ["BACKEND", "circle_sweep_block", "pocket_epochs", "knn_add_scan",
           "knn_remove_scan", "python_backend", "compiled_backend"]
