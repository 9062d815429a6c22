"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback. Setting ``ANNUITIZE_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("ANNUITIZE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

continuation_sum = _impl.continuation_sum
psor = _impl.psor


def backends() -> dict:
    """Available implementations keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out
