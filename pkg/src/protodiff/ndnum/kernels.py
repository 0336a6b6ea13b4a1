"""Convolution kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementation.
Set PROTODIFF_PURE=1 to force the numpy backend (useful for benchmarking
and for debugging suspected kernel issues).
"""
from __future__ import annotations

import os

from . import _convnp

BACKEND = "numpy"
conv1d_fwd = _convnp.conv1d_fwd
conv1d_bwd_x = _convnp.conv1d_bwd_x
conv1d_bwd_w = _convnp.conv1d_bwd_w
out_length = _convnp.out_length

if os.environ.get("PROTODIFF_PURE") != "1":
    try:
        from . import _convext

        BACKEND = "cython"
        conv1d_fwd = _convext.conv1d_fwd
        conv1d_bwd_x = _convext.conv1d_bwd_x
        conv1d_bwd_w = _convext.conv1d_bwd_w
    except ImportError:
        pass
