"""Select the kernel implementation at import time.

The compiled ``_ckernels`` extension is preferred. Set
``STEREO_RISK_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os
from types import ModuleType

from . import _pykernels


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()

if _compiled is not None and os.environ.get("STEREO_RISK_PURE_PYTHON", "") not in ("1", "true"):
    kernels: ModuleType = _compiled
    BACKEND = "cython"
else:
    kernels = _pykernels
    BACKEND = "python"


def available_backends():
    """Names of the backends that can be loaded in this environment."""
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_kernels(name=None) -> ModuleType:
    """Return the kernel module for ``name`` (``None`` means the active one)."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
