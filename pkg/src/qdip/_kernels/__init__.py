"""Kernel backend selection.

``QDIP_BACKEND`` picks the implementation: ``auto`` (default) prefers the
compiled extension and falls back to NumPy, ``cython`` requires the
extension, ``python`` forces the fallback. Both backends implement the same
three entry points with identical semantics; bit-level results may differ
between backends, so reproducibility guarantees hold per backend.
"""

import os

from . import pure

_requested = os.environ.get("QDIP_BACKEND", "auto")

if _requested == "python":
    _impl = pure
elif _requested in ("auto", "cython"):
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "QDIP_BACKEND=cython but the compiled extension is not available; "
                "reinstall with a C toolchain or use QDIP_BACKEND=python")
        _impl = pure
else:
    raise ImportError(f"unknown QDIP_BACKEND value {_requested!r}")

BACKEND_NAME = _impl.BACKEND_NAME
propagate = _impl.propagate
propagate_sens = _impl.propagate_sens
overlap_grad = _impl.overlap_grad
