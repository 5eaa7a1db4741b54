"""Kernel backend selection.

The compiled extension is used when importable; otherwise the numpy
implementation. ``use_backend`` switches explicitly (benchmarks, tests).
"""
from __future__ import annotations

import logging
from types import ModuleType

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None
    log.debug("compiled kernels unavailable; using numpy fallback")

kernels: ModuleType = _ckernels if _ckernels is not None else _pykernels


def available() -> list[str]:
    return ["compiled", "python"] if _ckernels is not None else ["python"]


def name() -> str:
    return "compiled" if kernels is _ckernels else "python"


def get(which: str | None = None) -> ModuleType:
    """Kernel module by name; ``None`` returns the active one."""
    if which is None:
        return kernels
    if which == "python":
        return _pykernels
    if which == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown backend {which!r}")


def use_backend(which: str) -> None:
    global kernels
    kernels = get(which)
