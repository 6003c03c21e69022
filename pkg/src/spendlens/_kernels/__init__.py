"""Hot loops, compiled when possible.

The Cython module is used when it was built and ``SPENDLENS_NO_EXT`` is
unset; otherwise the numpy reference implementation is loaded.
``BACKEND`` names the one in use.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("SPENDLENS_NO_EXT"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

best_pair_continuous = _impl.best_pair_continuous
best_pair_discontinuous = _impl.best_pair_discontinuous
yule_counts = _impl.yule_counts

__all__ = ["BACKEND", "best_pair_continuous", "best_pair_discontinuous", "yule_counts",
           "python_backend", "compiled_backend"]
