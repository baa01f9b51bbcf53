"""Pick the batch root kernels at import time.

The compiled ``vipar._kernels`` extension is used when it imports cleanly.
Setting ``VIPAR_PURE_PYTHON=1`` forces the numpy fallback.
"""

import importlib
import os

_FORCE_PURE = os.environ.get("VIPAR_PURE_PYTHON", "").strip() not in ("", "0")


def load(name=None):
    """Return the kernel module for ``name`` (``"cython"`` or ``"python"``).

    With ``name=None`` the compiled kernels are preferred.
    """
    if name == "python":
        return importlib.import_module("vipar._fallback")
    if name == "cython":
        return importlib.import_module("vipar._kernels")
    if name is not None:
        raise ValueError(f"unknown backend {name!r}")
    if not _FORCE_PURE:
        try:
            return importlib.import_module("vipar._kernels")
        except ImportError:
            pass
    return importlib.import_module("vipar._fallback")


def available():
    names = ["python"]
    try:
        importlib.import_module("vipar._kernels")
    except ImportError:
        return names
    return ["cython"] + names


kernels = load()
BACKEND = "cython" if kernels.__name__.endswith("_kernels") else "python"
