"""Backend selection for the iteration loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise,
or when ``POVMTOMO_BACKEND=python`` is set, the numpy loops in
``_kernels_py`` run instead.  Both expose the same functions.
"""
import importlib
import os

from . import _kernels_py

_MODULES = {"python": "povmtomo._kernels_py", "compiled": "povmtomo._ckernels"}


def load(name: str):
    """Import a backend by name (``"python"`` or ``"compiled"``)."""
    return importlib.import_module(_MODULES[name])


def available() -> list:
    out = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        out.append(name)
    return out


def _select():
    wanted = os.environ.get("POVMTOMO_BACKEND", "").strip().lower()
    if wanted == "python":
        return "python", _kernels_py
    try:
        return "compiled", load("compiled")
    except ImportError:
        if wanted == "compiled":
            raise
        return "python", _kernels_py


BACKEND, impl = _select()
