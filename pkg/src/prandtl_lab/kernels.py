"""Kernel backend selection.

The hot inner-loop kernels exist twice: a Cython extension
(``prandtl_lab._kernels``) and a NumPy fallback (``_kernels_np``).  The
extension is preferred when importable; set ``PRANDTL_LAB_FORCE_NUMPY=1``
to force the fallback (used by the tests and the benchmark).
"""

import os

from . import _kernels_np

if os.environ.get("PRANDTL_LAB_FORCE_NUMPY", "0") == "1":
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_np
        BACKEND = "numpy"

tridiag_factor = _impl.tridiag_factor
tridiag_solve_factored = _impl.tridiag_solve_factored
power_rows = _impl.power_rows
cumtrapz_rows = _impl.cumtrapz_rows

__all__ = [
    "BACKEND",
    "tridiag_factor",
    "tridiag_solve_factored",
    "power_rows",
    "cumtrapz_rows",
]
