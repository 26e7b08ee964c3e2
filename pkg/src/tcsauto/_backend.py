"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``TCSAUTO_PURE_PYTHON=1`` is set, the pure-Python fallback is used.
"""

from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("TCSAUTO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

cosine_distances = _impl.cosine_distances
word_edit_distance = _impl.word_edit_distance


def available_backends() -> dict:
    """Map backend name to its kernel module, for tests and benchmarks."""
    backends = {"python": _fallback}
    try:
        from . import _kernels

        backends["cython"] = _kernels
    except ImportError:
        pass
    return backends
