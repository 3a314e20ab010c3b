"""Exchange-graph kernel with a compiled core and a pure-Python fallback.

The compiled backend is used automatically when its extension module built;
HIERFAIR_BACKEND=py (or =c) forces a choice.  Both backends implement the
same Engine contract and are required by the test suite to produce
bit-identical results.
"""

from __future__ import annotations

import os

from .common import NonRedundancyError, iter_bits, lowest_bit, mask_of
from . import pybackend

_FORCED = os.environ.get("HIERFAIR_BACKEND", "auto").lower()
if _FORCED not in {"auto", "c", "py"}:
    raise RuntimeError(
        f"HIERFAIR_BACKEND must be auto, c or py, got {_FORCED!r}"
    )

_cbackend = None
if _FORCED in {"auto", "c"}:
    try:
        from . import _speedups as _cbackend
    except ImportError:
        if _FORCED == "c":
            raise RuntimeError(
                "HIERFAIR_BACKEND=c but the compiled kernel is not built"
            )

if _cbackend is not None:
    Engine = _cbackend.Engine
    descriptor_rank = _cbackend.descriptor_rank
    BACKEND = "c"
else:
    Engine = pybackend.Engine
    descriptor_rank = pybackend.descriptor_rank
    BACKEND = "py"


def available_backends() -> tuple[str, ...]:
    return ("c", "py") if _cbackend is not None else ("py",)


def engine_class(backend: str | None = None):
    """Engine implementation for an explicit backend name (None = selected)."""
    if backend in (None, "auto"):
        return Engine
    if backend == "py":
        return pybackend.Engine
    if backend == "c":
        if _cbackend is None:
            raise RuntimeError("compiled kernel not available")
        return _cbackend.Engine
    raise ValueError(f"unknown backend {backend!r}")


__all__ = [
    "BACKEND",
    "Engine",
    "NonRedundancyError",
    "available_backends",
    "descriptor_rank",
    "engine_class",
    "iter_bits",
    "lowest_bit",
    "mask_of",
]
