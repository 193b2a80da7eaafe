"""Selection between the compiled fit kernel and the pure-python fallback.

The compiled extension is preferred when importable; REMEASURE_BACKEND
overrides the choice ("compiled" fails loudly if the extension is missing,
"python" forces the fallback).
"""

from __future__ import annotations

import os

try:
    from . import _fitcore

    HAVE_COMPILED = True
except ImportError:
    _fitcore = None
    HAVE_COMPILED = False


def resolve_backend() -> str:
    choice = os.environ.get("REMEASURE_BACKEND", "auto").lower()
    if choice in ("compiled", "c", "ext"):
        if not HAVE_COMPILED:
            raise RuntimeError("REMEASURE_BACKEND requests the compiled kernel but the extension is not built")
        return "compiled"
    if choice in ("python", "py"):
        return "python"
    return "compiled" if HAVE_COMPILED else "python"


def compiled_fit_loop():
    if not HAVE_COMPILED:
        raise RuntimeError("compiled kernel unavailable")
    return _fitcore.fit_loop
