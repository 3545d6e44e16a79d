"""Backend selection for the chi-square mixture distribution function.

``qf`` is bound at import time to the compiled extension when it is
available and to the numpy implementation otherwise. Set the environment
variable ``KNNTEST_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _qf_py

try:
    if os.environ.get("KNNTEST_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _qfc
except ImportError:
    _qfc = None

BACKEND = "cython" if _qfc is not None else "python"
qf = _qfc.qf if _qfc is not None else _qf_py.qf
qf_python = _qf_py.qf
qf_compiled = None if _qfc is None else _qfc.qf

__all__ = ["BACKEND", "qf", "qf_python", "qf_compiled"]
