"""Kernel backend selection.

Imports the compiled Cython kernels when available, otherwise the NumPy
reference implementations.  ``STVTR_BACKEND=python`` forces the fallback;
``STVTR_BACKEND=ext`` makes a missing extension a hard error instead of a
silent fallback.
"""

from __future__ import annotations

import os

from . import kernels_py

_requested = os.environ.get("STVTR_BACKEND", "auto").lower()

if _requested == "python":
    _impl = kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "ext":
            raise
        _impl = kernels_py

softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
rope_fwd = _impl.rope_fwd
rope_bwd = _impl.rope_bwd
l2norm_fwd = _impl.l2norm_fwd
l2norm_bwd = _impl.l2norm_bwd
adamw_step = _impl.adamw_step


def backend_name() -> str:
    """Name of the active kernel backend: ``"ext"`` or ``"python"``."""
    return _impl.BACKEND_NAME
