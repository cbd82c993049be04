"""Per-block and per-row pixel kernels.

Pure functions on caller-owned data: dequantization, the two inverse
transforms (direct two-pass and the fast scaled factorization), 4:2:2
chroma upsampling, color conversion, and the fused combinations of those
stages.  The implementations live in ``kernels.fallback``; this module is
the stable import surface.  Batch rendering over MCU-row ranges (used by
the execution lanes) goes through the selected kernel backend and is
bit-identical to composing the functions below.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .kernels.fallback import (
    dequantize,
    fused_idct_color_444,
    fused_upsample_color_422,
    idct_direct,
    idct_direct_f64,
    idct_fast,
    idct_fast_f64,
    upsample_row_422,
    ycbcr_to_rgb,
)

__all__ = [
    "PixelBuffer",
    "dequantize",
    "idct_direct",
    "idct_direct_f64",
    "idct_fast",
    "idct_fast_f64",
    "upsample_row_422",
    "ycbcr_to_rgb",
    "fused_idct_color_444",
    "fused_upsample_color_422",
    "render_rows",
]


@dataclass
class PixelBuffer:
    """Interleaved RGB output, row-major from the top-left pixel."""
    width: int
    height: int
    data: np.ndarray  # uint8, shape (height, width, 3)

    def tobytes(self) -> bytes:
        return self.data.tobytes()


def alloc_pixels(width: int, height: int) -> PixelBuffer:
    return PixelBuffer(width, height, np.zeros((height, width, 3), dtype=np.uint8))


def render_rows(coeffs, qtables: np.ndarray, pixels: PixelBuffer,
                row0: int, n_rows: int, fast: bool = True,
                fused: bool = True, backend=None) -> None:
    """Run the parallel phase over MCU rows [row0, row0 + n_rows).

    ``qtables`` is the (3, 64) de-zigzagged quantization table stack in
    component order.  Safe to call concurrently for disjoint row ranges.
    """
    if n_rows <= 0:
        return
    impl = backend if backend is not None else kernels.active()
    geo = coeffs.geometry
    fn = impl.render_rows_422 if geo.mcu_width == 16 else impl.render_rows_444
    fn(coeffs.y_blocks, coeffs.cb_blocks, coeffs.cr_blocks, qtables,
       pixels.data, geo.width, geo.height, geo.mcus_per_row,
       row0, n_rows, fast, fused)
