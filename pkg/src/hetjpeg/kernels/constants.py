"""Shared numeric tables for the block kernels.

Both kernel backends read these exact arrays so that their floating-point
work is performed with bit-identical constants; the native extension copies
them into C storage at import time.
"""
import numpy as np

# Zigzag scan: ZIGZAG[k] = natural (row-major) index of zigzag position k.
ZIGZAG = np.array([
     0,  1,  8, 16,  9,  2,  3, 10,
    17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
], dtype=np.int32)

# Separable inverse-transform basis, one 1-D pass:
#   IDCT_BASIS[u, x] = 0.5 * C_u * cos((2x + 1) * u * pi / 16)
# with C_0 = 1/sqrt(2) and C_u = 1 otherwise.  The 0.5 per pass restores
# the standard 2-D normalization (1/4 total).
_u = np.arange(8).reshape(8, 1).astype(np.float64)
_x = np.arange(8).reshape(1, 8).astype(np.float64)
IDCT_BASIS = 0.5 * np.cos((2.0 * _x + 1.0) * _u * np.pi / 16.0)
IDCT_BASIS[0, :] *= 1.0 / np.sqrt(2.0)
IDCT_BASIS = np.ascontiguousarray(IDCT_BASIS)

# Butterfly rotator constants for the scaled fast path.
AAN_SQRT2 = 1.414213562     # sqrt(2)
AAN_ROT = 1.847759065       # 2 * cos(pi/8)
AAN_ROT_P = 1.082392200     # 2 * (cos(pi/8) - cos(3pi/8))
AAN_ROT_M = 2.613125930     # 2 * (cos(pi/8) + cos(3pi/8))

# Per-coefficient prescale folding the scaled-DCT factors and the /8
# normalization: OUT = butterfly(coeff * AAN_PRESCALE).
_s = np.empty(8, dtype=np.float64)
_s[0] = 1.0
for _k in range(1, 8):
    _s[_k] = np.sqrt(2.0) * np.cos(_k * np.pi / 16.0)
AAN_PRESCALE = np.ascontiguousarray(np.outer(_s, _s) / 8.0)

# Color conversion weights (see the conversion kernels).
CR_TO_R = 1.402
CB_TO_G = 0.34414
CR_TO_G = 0.71414
CB_TO_B = 1.772
