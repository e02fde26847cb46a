"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy fallback in ``_pykernels``. Setting ``BBCIRL_PURE_PYTHON=1`` forces the
fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels
compiled_backend = None

if os.environ.get("BBCIRL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend or python_backend
BACKEND_NAME = "compiled" if backend is compiled_backend else "python"


def get_backend(name: str | None = None):
    """``"compiled"``, ``"python"`` or None for the import-time default."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not available; build with `pip install -e .`")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
