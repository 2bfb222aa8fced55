"""Kernel backend selection.

The compiled extension is preferred when present; the pure numpy
fallback is selected otherwise or when REMGEN_PURE_PYTHON=1 is set.
Both backends are bit-identical, so the choice affects speed only.
"""

import os

from . import _purepy

if os.environ.get("REMGEN_PURE_PYTHON") == "1":
    _impl = _purepy
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _purepy

BACKEND = _impl.BACKEND
im2col = _impl.im2col
col2im_add = _impl.col2im_add
maxpool2x2 = _impl.maxpool2x2
maxpool2x2_backward = _impl.maxpool2x2_backward
affine_pool2x2 = _impl.affine_pool2x2
bn_backward_apply = _impl.bn_backward_apply
points_in_polygon = _impl.points_in_polygon
bilinear_batch = _impl.bilinear_batch


def get_backend(name):
    """Return a specific backend module ("compiled" or "purepy")."""
    if name == "purepy":
        return _purepy
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown kernel backend: {name!r}")
