"""Hot numerical kernels with a compiled backend and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built at install time.
Setting ``POPCNN_PURE_PYTHON=1`` forces the numpy fallback. ``BACKEND`` names
the implementation in use.
"""

import os

from . import _pykernels

python_backend = _pykernels

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("POPCNN_PURE_PYTHON", "") in ("", "0"):
    _active = compiled_backend
    BACKEND = "cython"
else:
    _active = _pykernels
    BACKEND = "python"

conv2d_forward = _active.conv2d_forward
conv2d_backward = _active.conv2d_backward
threshold_crossings = _active.threshold_crossings

__all__ = [
    "BACKEND",
    "compiled_backend",
    "python_backend",
    "conv2d_forward",
    "conv2d_backward",
    "threshold_crossings",
]
