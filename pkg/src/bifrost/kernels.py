"""Kernel backend selection.

The compiled extension is used when it imports; ``BIFROST_PURE=1`` forces the
pure-Python implementations (the test-suite runs kernel tests against both).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _purekernels

pure: ModuleType = _purekernels
compiled: ModuleType | None

try:
    from . import _kernels as compiled  # type: ignore[no-redef]
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("BIFROST_PURE", "") != "1":
    impl: ModuleType = compiled
    BACKEND = "cython"
else:
    impl = _purekernels
    BACKEND = "python"


def backends() -> dict[str, ModuleType]:
    """All importable kernel implementations, keyed by name."""
    found = {"python": _purekernels}
    if compiled is not None:
        found["cython"] = compiled
    return found
