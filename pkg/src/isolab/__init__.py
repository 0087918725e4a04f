"""Discrete verification of the sharp isoperimetric and Sobolev inequalities."""

import os as _os

__version__ = "0.1.0"

# ISOLAB_THREADS pins the BLAS/OpenMP pool; it only takes effect when this
# package is imported before numpy.
_threads = _os.environ.get("ISOLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
