"""Kernel backend selection.

Imports the compiled extension when it was built, otherwise the numpy
fallback. Set ``LATENTCOX_PURE_PYTHON=1`` to force the fallback (used by
the backend-equivalence tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("LATENTCOX_PURE_PYTHON"):
    kernels = _kernels_py
    COMPILED = False
else:
    try:
        from . import _kernels  # type: ignore[attr-defined]

        kernels = _kernels
        COMPILED = True
    except ImportError:
        kernels = _kernels_py
        COMPILED = False
