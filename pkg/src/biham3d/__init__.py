"""Local construction and global obstructions for bi-Hamiltonian vector fields in 3D.

Given a nonvanishing vector field ``v``, the package builds a pair of
compatible Poisson vector fields ``J1, J2``, a conformal factor ``phi`` and
Hamiltonians ``H1, H2`` with ``v = J1 x grad H2 = J2 x grad H1`` on a stream
tube, checks every identity numerically, and probes the two global
obstructions (Chern number of the normal bundle, integral of the 3-form Xi).
"""

import os as _os
from importlib.metadata import PackageNotFoundError, version as _version

# BIHAM3D_THREADS caps the BLAS thread pools; it must be applied before numpy loads.
_threads = _os.environ.get("BIHAM3D_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .calc3 import DiffConfig
from .errors import Biham3dError
from .fields import AnalyticVectorField, make_field, registry

__all__ = ["AnalyticVectorField", "Biham3dError", "DiffConfig", "__version__", "make_field", "registry"]
