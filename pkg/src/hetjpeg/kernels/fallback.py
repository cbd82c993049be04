"""Pure-Python/numpy kernel backend.

This module is the reference implementation of every hot kernel: the
single-block operations used by tests and by callers that want one block
at a time, plus the batch entry points (``decode_mcu_rows`` and the two
``render_rows_*`` functions) that the pipeline actually runs.  The native
extension implements the same batch entry points with bit-identical
arithmetic; either backend may be active.

Rounding convention used throughout: samples are rounded with
``floor(x + 0.5)`` and clamped to [0, 255].  After clamping this is
indistinguishable from rounding ties away from zero, since every negative
tie clamps to 0.
"""
from __future__ import annotations

import numpy as np

from ..errors import BadCode, BitstreamExhausted, MarkerInScan
from .constants import (
    AAN_PRESCALE,
    AAN_ROT,
    AAN_ROT_M,
    AAN_ROT_P,
    AAN_SQRT2,
    CB_TO_B,
    CB_TO_G,
    CR_TO_G,
    CR_TO_R,
    IDCT_BASIS,
    ZIGZAG,
)

NAME = "fallback"


def _round_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0.0, 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# single-block operations
# ---------------------------------------------------------------------------

def dequantize(block, qtable) -> np.ndarray:
    """Elementwise product, both operands in natural (de-zigzagged) order."""
    return (np.asarray(block, dtype=np.int32).reshape(64)
            * np.asarray(qtable, dtype=np.int32).reshape(64))


def _idct_direct_batch(deq: np.ndarray) -> np.ndarray:
    """Two 1-D passes over (n, 8, 8) blocks; float64 result, no level shift.

    Accumulation is in ascending frequency order so results are
    bit-identical to a scalar loop doing the same.
    """
    d = deq.astype(np.float64).reshape(-1, 8, 8)
    g = np.zeros_like(d)
    for r in range(8):
        g += IDCT_BASIS[r][None, :, None] * d[:, r, None, :]
    s = np.zeros_like(d)
    for c in range(8):
        s += IDCT_BASIS[c][None, None, :] * g[:, :, c, None]
    return s


def _aan_pass(d0, d1, d2, d3, d4, d5, d6, d7):
    """One 1-D pass of the scaled fast transform over parallel arrays."""
    tmp10 = d0 + d4
    tmp11 = d0 - d4
    tmp13 = d2 + d6
    tmp12 = (d2 - d6) * AAN_SQRT2 - tmp13
    e0 = tmp10 + tmp13
    e3 = tmp10 - tmp13
    e1 = tmp11 + tmp12
    e2 = tmp11 - tmp12

    z13 = d5 + d3
    z10 = d5 - d3
    z11 = d1 + d7
    z12 = d1 - d7
    t7 = z11 + z13
    t11 = (z11 - z13) * AAN_SQRT2
    z5 = (z10 + z12) * AAN_ROT
    t10 = AAN_ROT_P * z12 - z5
    t12 = -AAN_ROT_M * z10 + z5
    t6 = t12 - t7
    t5 = t11 - t6
    t4 = t10 + t5
    return (e0 + t7, e1 + t6, e2 + t5, e3 - t4,
            e3 + t4, e2 - t5, e1 - t6, e0 - t7)


def _idct_fast_batch(deq: np.ndarray) -> np.ndarray:
    """Fast scaled transform over (n, 8, 8) blocks; float64, no level shift."""
    d = deq.astype(np.float64).reshape(-1, 8, 8) * AAN_PRESCALE[None]
    cols = _aan_pass(*(d[:, r, :] for r in range(8)))
    g = np.stack(cols, axis=1)
    rows = _aan_pass(*(g[:, :, c] for c in range(8)))
    return np.stack(rows, axis=2)


def idct_direct_f64(block) -> np.ndarray:
    """Pre-rounding transform core (float64, no +128), for accuracy tests."""
    return _idct_direct_batch(np.asarray(block).reshape(1, 8, 8))[0]


def idct_direct(block) -> np.ndarray:
    """Direct transform of one dequantized block to 64 pixel samples."""
    return _round_u8(idct_direct_f64(block) + 128.0).reshape(64)


def idct_fast_f64(block) -> np.ndarray:
    return _idct_fast_batch(np.asarray(block).reshape(1, 8, 8))[0]


def idct_fast(block) -> np.ndarray:
    """Fast transform; deviates from idct_direct by at most 1 per sample."""
    return _round_u8(idct_fast_f64(block) + 128.0).reshape(64)


def upsample_row_422(row, left=None, right=None):
    """Expand 8 chroma samples to 16 with the triangular filter.

    Without a neighbor the end pixels are copied; with one they use the
    same triangular weighting across the block seam.  Integer arithmetic
    with floor division throughout.
    """
    src = [int(v) for v in row]
    if len(src) != 8:
        raise ValueError("expected an 8-sample chroma row")
    out = [0] * 16
    out[0] = src[0] if left is None else (src[0] * 3 + int(left) + 1) // 4
    for k in range(1, 8):
        out[2 * k] = (src[k] * 3 + src[k - 1] + 1) // 4
    for k in range(7):
        out[2 * k + 1] = (src[k] * 3 + src[k + 1] + 2) // 4
    out[15] = src[7] if right is None else (src[7] * 3 + int(right) + 2) // 4
    return np.asarray(out, dtype=np.int32)


def ycbcr_to_rgb(y, cb, cr):
    """Convert samples to RGB bytes; accepts scalars or arrays."""
    yf = np.asarray(y, dtype=np.float64)
    cbf = np.asarray(cb, dtype=np.float64)
    crf = np.asarray(cr, dtype=np.float64)
    r = yf + CR_TO_R * (crf - 128.0)
    g = yf - CB_TO_G * (cbf - 128.0) - CR_TO_G * (crf - 128.0)
    b = yf + CB_TO_B * (cbf - 128.0)
    return _round_u8(r), _round_u8(g), _round_u8(b)


def fused_idct_color_444(y_block, cb_block, cr_block, qy, qcb, qcr, fast=True):
    """Dequantize + transform + color conversion for one 4:4:4 MCU.

    Returns (64, 3) interleaved RGB.  Bit-identical to running the three
    stages separately; exists so callers need not materialize sample planes.
    """
    core = _idct_fast_batch if fast else _idct_direct_batch
    samples = [
        _round_u8(core(dequantize(b, q).reshape(1, 8, 8)) + 128.0).reshape(64)
        for b, q in ((y_block, qy), (cb_block, qcb), (cr_block, qcr))
    ]
    r, g, b = ycbcr_to_rgb(*samples)
    return np.stack([r, g, b], axis=-1)


def fused_upsample_color_422(y_row, cb_row, cr_row,
                             cb_left=None, cb_right=None,
                             cr_left=None, cr_right=None):
    """Chroma upsampling fused with color conversion for one 16-pixel row.

    ``y_row`` holds the 16 luma samples of the row (both blocks of the
    MCU); the chroma rows hold 8 samples each.  Returns (16, 3) RGB,
    bit-identical to upsample_row_422 followed by ycbcr_to_rgb.
    """
    cb16 = upsample_row_422(cb_row, cb_left, cb_right)
    cr16 = upsample_row_422(cr_row, cr_left, cr_right)
    r, g, b = ycbcr_to_rgb(np.asarray(y_row), cb16, cr16)
    return np.stack([r, g, b], axis=-1)


# ---------------------------------------------------------------------------
# batch rendering
# ---------------------------------------------------------------------------

def _blocks_to_stripe(samples: np.ndarray, n_rows: int, bpr: int) -> np.ndarray:
    """(n_rows*bpr, 8, 8) raster-ordered blocks -> (n_rows*8, bpr*8) plane."""
    return (samples.reshape(n_rows, bpr, 8, 8)
            .transpose(0, 2, 1, 3)
            .reshape(n_rows * 8, bpr * 8))


def _idct_plane(blocks: np.ndarray, qtable: np.ndarray, fast: bool) -> np.ndarray:
    deq = blocks.astype(np.int32) * qtable[None, :].astype(np.int32)
    core = _idct_fast_batch if fast else _idct_direct_batch
    return _round_u8(core(deq) + 128.0)


def _upsample_stripe(c: np.ndarray) -> np.ndarray:
    """Horizontal 2x chroma upsampling of a stripe with plane-edge copy."""
    c = c.astype(np.int32)
    prev = np.empty_like(c)
    prev[:, 1:] = c[:, :-1]
    prev[:, 0] = c[:, 0]
    nxt = np.empty_like(c)
    nxt[:, :-1] = c[:, 1:]
    nxt[:, -1] = c[:, -1]
    out = np.empty((c.shape[0], c.shape[1] * 2), dtype=np.int32)
    out[:, 0::2] = (3 * c + prev + 1) >> 2
    out[:, 1::2] = (3 * c + nxt + 2) >> 2
    return out


def _write_stripe(rgb, r, g, b, row0, width, height):
    y0 = row0 * 8
    y1 = min(y0 + r.shape[0], height)
    n = y1 - y0
    rgb[y0:y1, :, 0] = r[:n, :width]
    rgb[y0:y1, :, 1] = g[:n, :width]
    rgb[y0:y1, :, 2] = b[:n, :width]


def render_rows_444(y_blocks, cb_blocks, cr_blocks, qtables, rgb,
                    width, height, mcus_per_row, row0, n_rows,
                    fast=True, fused=True):
    """Parallel-phase kernels over MCU rows [row0, row0 + n_rows) at 4:4:4.

    The vectorized implementation materializes sample planes either way;
    ``fused`` is accepted for interface parity with the native backend and
    does not change results (the fused and unfused paths are exactly
    equivalent by construction).
    """
    del fused
    sl = slice(row0 * mcus_per_row, (row0 + n_rows) * mcus_per_row)
    ys = _blocks_to_stripe(_idct_plane(y_blocks[sl], qtables[0], fast),
                           n_rows, mcus_per_row)
    cbs = _blocks_to_stripe(_idct_plane(cb_blocks[sl], qtables[1], fast),
                            n_rows, mcus_per_row)
    crs = _blocks_to_stripe(_idct_plane(cr_blocks[sl], qtables[2], fast),
                            n_rows, mcus_per_row)
    r, g, b = ycbcr_to_rgb(ys, cbs, crs)
    _write_stripe(rgb, r, g, b, row0, width, height)


def render_rows_422(y_blocks, cb_blocks, cr_blocks, qtables, rgb,
                    width, height, mcus_per_row, row0, n_rows,
                    fast=True, fused=True):
    """Parallel-phase kernels over MCU rows at 4:2:2 (two Y blocks per MCU)."""
    del fused
    ysl = slice(row0 * 2 * mcus_per_row, (row0 + n_rows) * 2 * mcus_per_row)
    csl = slice(row0 * mcus_per_row, (row0 + n_rows) * mcus_per_row)
    ys = _blocks_to_stripe(_idct_plane(y_blocks[ysl], qtables[0], fast),
                           n_rows, 2 * mcus_per_row)
    cbs = _blocks_to_stripe(_idct_plane(cb_blocks[csl], qtables[1], fast),
                            n_rows, mcus_per_row)
    crs = _blocks_to_stripe(_idct_plane(cr_blocks[csl], qtables[2], fast),
                            n_rows, mcus_per_row)
    r, g, b = ycbcr_to_rgb(ys, _upsample_stripe(cbs), _upsample_stripe(crs))
    _write_stripe(rgb, r, g, b, row0, width, height)


# ---------------------------------------------------------------------------
# entropy decoding
# ---------------------------------------------------------------------------

def prepare_scan(lut_sym, lut_len, mincode, maxcode, valptr, symbols,
                 comp_dc, comp_ac):
    """Convert the packed table arrays to fast plain-Python structures."""
    return (
        [bytes(row) for row in lut_sym],
        [bytes(row) for row in lut_len],
        [list(map(int, row)) for row in mincode],
        [list(map(int, row)) for row in maxcode],
        [list(map(int, row)) for row in valptr],
        [bytes(row) for row in symbols],
        list(map(int, comp_dc)),
        list(map(int, comp_ac)),
    )


def decode_mcu_rows(data, state, scan, y_out, cb_out, cr_out,
                    row0, n_rows, mcus_per_row, y_per_mcu, restart_interval):
    """Huffman-decode MCU rows [row0, row0 + n_rows) into the block planes.

    ``state`` is the resumable cursor state (see entropy.EntropyCursor);
    it is updated in place.  Raises BitstreamExhausted / BadCode /
    MarkerInScan on malformed scan data.
    """
    lut_sym, lut_len, mincode, maxcode, valptr, symbols, comp_dc, comp_ac = scan
    n = len(data)
    pos = int(state[0])
    buf = int(state[1])
    bits = int(state[2])
    mcus_since_rst = int(state[3])
    next_rst = int(state[4])
    preds = [int(state[5]), int(state[6]), int(state[7])]
    zz = ZIGZAG
    outs = (y_out, cb_out, cr_out)

    def refill(need: int):
        nonlocal pos, buf, bits
        while bits < need:
            if pos >= n:
                return
            b = data[pos]
            if b == 0xFF:
                if pos + 1 < n and data[pos + 1] == 0x00:
                    pos += 2
                else:
                    return  # marker: stop delivering bits
            else:
                pos += 1
            buf = (buf << 8) | b
            bits += 8

    def take(k: int) -> int:
        nonlocal buf, bits
        if k == 0:
            return 0
        refill(k)
        if bits < k:
            raise BitstreamExhausted(
                f"needed {k} bits with {bits} left in the scan")
        bits -= k
        v = (buf >> bits) & ((1 << k) - 1)
        buf &= (1 << bits) - 1
        return v

    def huffdecode(slot: int) -> int:
        nonlocal buf, bits
        refill(8)
        if bits >= 8:
            v = (buf >> (bits - 8)) & 0xFF
        else:
            pad = 8 - bits
            v = ((buf << pad) | ((1 << pad) - 1)) & 0xFF
        length = lut_len[slot][v]
        if length and length <= bits:
            bits -= length
            buf &= (1 << bits) - 1
            return lut_sym[slot][v]
        # long or truncated code: walk lengths bit by bit
        code = 0
        mc = maxcode[slot]
        for length in range(1, 17):
            code = (code << 1) | take(1)
            if mc[length] >= 0 and code <= mc[length]:
                return symbols[slot][valptr[slot][length] + code - mincode[slot][length]]
        raise BadCode("no Huffman symbol matches within 16 bits")

    def extend(v: int, t: int) -> int:
        if v < (1 << (t - 1)):
            return v - ((1 << t) - 1)
        return v

    def consume_restart():
        nonlocal pos, buf, bits, next_rst
        buf = 0
        bits = 0
        if pos + 1 >= n or data[pos] != 0xFF:
            raise BitstreamExhausted("expected a restart marker")
        marker = data[pos + 1]
        if not (0xD0 <= marker <= 0xD7):
            raise MarkerInScan(f"marker {marker:#04x} where RST expected")
        if marker - 0xD0 != next_rst:
            raise MarkerInScan(
                f"restart marker out of sequence ({marker - 0xD0} != {next_rst})")
        pos += 2
        next_rst = (next_rst + 1) & 7
        preds[0] = preds[1] = preds[2] = 0

    def decode_block(comp: int, block_index: int):
        out = outs[comp]
        t = huffdecode(comp_dc[comp])
        if t > 15:
            raise BadCode(f"DC magnitude category {t} out of range")
        diff = extend(take(t), t) if t else 0
        preds[comp] += diff
        out[block_index, 0] = preds[comp]
        k = 1
        ac_slot = comp_ac[comp]
        while k < 64:
            rs = huffdecode(ac_slot)
            r = rs >> 4
            s = rs & 0x0F
            if s == 0:
                if r == 15:
                    k += 16
                    continue
                break  # end of block
            k += r
            if k > 63:
                raise BadCode("AC run extends past the end of a block")
            out[block_index, zz[k]] = extend(take(s), s)
            k += 1

    for row in range(row0, row0 + n_rows):
        for m in range(mcus_per_row):
            if restart_interval and mcus_since_rst == restart_interval:
                consume_restart()
                mcus_since_rst = 0
            mcu = row * mcus_per_row + m
            for j in range(y_per_mcu):
                decode_block(0, mcu * y_per_mcu + j)
            decode_block(1, mcu)
            decode_block(2, mcu)
            mcus_since_rst += 1

    state[0] = pos
    state[1] = buf
    state[2] = bits
    state[3] = mcus_since_rst
    state[4] = next_rst
    state[5] = preds[0]
    state[6] = preds[1]
    state[7] = preds[2]
